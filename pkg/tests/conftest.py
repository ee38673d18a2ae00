import dataclasses

import pytest

from ehgclean.config import PipelineConfig
from ehgclean.pipeline import run_pipeline
from ehgclean.synth import default_scenario, generate

# explicit window giving 565 taps at 5 kHz with n=3, alpha=12
T_565 = 0.1129


def config_565(**filter_kw):
    cfg = PipelineConfig()
    return dataclasses.replace(cfg, filter=dataclasses.replace(cfg.filter, window_T=T_565,
                                                               **filter_kw))


@pytest.fixture(scope="session")
def default_data():
    return generate(default_scenario())


@pytest.fixture(scope="session")
def default_run(default_data):
    record, truth = default_data
    return run_pipeline(config_565(), record, truth)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_ACCEPTANCE, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail, elapsed in sorted(rows):
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] AC{number:<2} {title} ({elapsed:.2f} s): {detail}")
