import pytest

from heavytail.config import DEFAULT_SEED, SEED_ENV_VAR, get_settings, load_settings, reset_settings
from heavytail.exceptions import BadConfig


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    reset_settings()
    yield
    reset_settings()


def test_default_seed():
    assert load_settings().default_seed == DEFAULT_SEED


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, " 18446744073709551615 ")
    assert load_settings().default_seed == 2**64 - 1


def test_blank_seed_means_default(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "")
    assert load_settings().default_seed == DEFAULT_SEED


@pytest.mark.parametrize("raw", ["abc", "-1", "18446744073709551616", "1.5"])
def test_bad_seed(monkeypatch, raw):
    monkeypatch.setenv(SEED_ENV_VAR, raw)
    with pytest.raises(BadConfig):
        load_settings()


def test_settings_are_cached_until_reset(monkeypatch):
    first = get_settings()
    monkeypatch.setenv(SEED_ENV_VAR, "5")
    assert get_settings() is first
    reset_settings()
    assert get_settings().default_seed == 5


def test_dotenv_file_is_read(monkeypatch, tmp_path):
    # register the variable with monkeypatch so the value loaded from .env is undone
    monkeypatch.setenv(SEED_ENV_VAR, "0")
    monkeypatch.delenv(SEED_ENV_VAR)
    (tmp_path / ".env").write_text(f"{SEED_ENV_VAR}=99\n")
    monkeypatch.chdir(tmp_path)
    assert load_settings().default_seed == 99
