"""Heavy-tail detection: is a sample in the Gaussian domain of attraction?

The test reduces a sample to n block sums, measures the normalized
bivariation of the resulting bridge path and compares it with 2/pi.
"""

__version__ = "0.1.0"
