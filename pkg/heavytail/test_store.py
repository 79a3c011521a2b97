import io
import math

import pytest

from heavytail.dist import GaussianPower, StandardNormal
from heavytail.exceptions import BadConfig
from heavytail.montecarlo import HypothesisLabel, make_experiment_spec, run_experiment, write_report_csv
from heavytail.store import list_runs, load_report, load_run, save_report


@pytest.fixture
def url(tmp_path):
    return f"sqlite:///{tmp_path / 'runs.db'}"


def _report(distribution=StandardNormal(), seed=8):
    spec = make_experiment_spec(
        distribution=distribution,
        m_values=[500, 1000],
        n_values=[5, 10],
        q_values=[0.05, 0.1],
        scenarios=6,
        master_seed=seed,
        hypothesis_label=HypothesisLabel.H0,
    )
    return run_experiment(spec)


def _csv(report, level) -> str:
    buffer = io.StringIO()
    write_report_csv(report, buffer, level)
    return buffer.getvalue()


def test_round_trip_reexports_same_csv(url):
    report = _report()
    run_id = save_report(report, url, level=0.9)
    stored = load_run(url, run_id)
    assert stored.level == 0.9
    assert stored.report == report
    assert _csv(stored.report, stored.level) == _csv(report, 0.9)


def test_list_runs(url):
    first = save_report(_report(), url)
    second = save_report(_report(GaussianPower(r=0.3), seed=2**64 - 1), url)
    runs = list_runs(url)
    assert [run.run_id for run in runs] == [first, second]
    assert runs[0].dist == "normal"
    assert runs[1].param == "0.3"
    assert runs[1].master_seed == 2**64 - 1
    assert runs[0].cells == 8
    assert runs[0].hypothesis == "H0"


def test_nan_summaries_survive(url, tmp_path):
    source = tmp_path / "constant.txt"
    source.write_text("1\n" * 20)
    spec = make_experiment_spec(
        distribution={"kind": "file", "path": str(source)},
        m_values=[20],
        n_values=[4],
        q_values=[0.05],
        scenarios=2,
        master_seed=1,
    )
    report = run_experiment(spec)
    cell = load_report(url, save_report(report, url)).cells[0]
    assert cell.errors == 2
    assert math.isnan(cell.mean_statistic)


def test_unknown_run(url):
    with pytest.raises(BadConfig):
        load_report(url, 42)
