import pytest

from emgshift.experiment import ExperimentPlan, TrainConfig
from emgshift.synth import SynthConfig, generate_dataset

TINY_INI = """\
[synth]
n_subjects = 1
trials_per_position = 2
duration_s = 20

[plan]
norm_windows_ms = 200
feat_windows_ms = 200
n_seeds = 1

[train]
epochs = 1
tl_epochs = 1
"""


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """One subject, two 20 s trials per position."""
    root = tmp_path_factory.mktemp("tiny")
    generate_dataset(SynthConfig(n_subjects=1, trials_per_position=2, duration_s=20.0, seed=3), root)
    return root


@pytest.fixture
def tiny_plan():
    return ExperimentPlan(norm_windows_ms=(200,), feat_windows_ms=(200,), seeds=(0,),
                          train=TrainConfig(epochs=1, tl_epochs=1))


@pytest.fixture
def tiny_ini(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI)
    return p


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
