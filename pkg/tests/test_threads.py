"""Worker thread count from IVLM_THREADS."""

import pytest

from tools.errors import ConfigError
from tools.threads import THREADS_VARIABLE, worker_threads


def test_requested_count_wins(monkeypatch):
    monkeypatch.setenv(THREADS_VARIABLE, "many")
    assert worker_threads(3) == 3


@pytest.mark.parametrize("raw, expected", [(None, 1), ("", 1), ("4", 4), (" 2 ", 2), ("0", 1), ("-3", 1)])
def test_environment_count(monkeypatch, raw, expected):
    if raw is None:
        monkeypatch.delenv(THREADS_VARIABLE, raising=False)
    else:
        monkeypatch.setenv(THREADS_VARIABLE, raw)
    assert worker_threads() == expected


@pytest.mark.parametrize("raw", ["many", "2.5", "4 threads"])
def test_non_integer_is_a_config_error(monkeypatch, raw):
    monkeypatch.setenv(THREADS_VARIABLE, raw)
    with pytest.raises(ConfigError, match=f"{THREADS_VARIABLE} must be an integer"):
        worker_threads()
