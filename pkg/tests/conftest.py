import time
from dataclasses import dataclass

import pytest

from nocsim.codebook import NocGenConfig, generate_noc
from nocsim.model import ModelDims
from nocsim.trainer import TrainConfig, train

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


@dataclass
class TrainedRun:
    model: object
    report: object
    book: object
    config: TrainConfig
    seconds: float


def separation_config():
    """Three users at 50 degrees, depth-10 NSM, AWGN over 0..15 dB."""
    book = generate_noc(NocGenConfig(128, 3, 50.0, seed=0))
    return TrainConfig(book, num_users=3, learning_rate=1e-3, epochs=400, steps_per_epoch=20, batch_size=32,
                       snr_range_db=(0.0, 15.0), channel="awgn", dims=ModelDims(), seed=0)


@pytest.fixture(scope="session")
def trained_run():
    cfg = separation_config()
    t0 = time.perf_counter()
    model, report = train(cfg)
    return TrainedRun(model, report, cfg.codebook, cfg, time.perf_counter() - t0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
