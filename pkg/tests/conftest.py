import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

# one "ACn PASS|FAIL ..." line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"AC{n} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


class TrainedRun:
    """The desk-scale GLO run shared by the training, fitting and retargeting criteria."""

    def __init__(self):
        from pointcloth.bodymodel.dataset import DatasetConfig, make_dataset, random_outfits
        from pointcloth.draping import DrapingModel, TrainConfig, body_clouds, evaluate_emd, glo_train, init_codes
        from pointcloth.numcore import parameter

        self.data = make_dataset(DatasetConfig(random_outfits(16, 0), n_frames=200, stride=10, seed=0))
        self.model = DrapingModel(seed=0)
        self.codes = parameter(init_codes(16, self.model.config.code_dim, 0), "codes")
        clouds = body_clouds(self.data)
        self.emd_before = evaluate_emd(self.model, self.codes, self.data, clouds=clouds)
        t = time.perf_counter()
        self.result = glo_train(self.model, self.codes, self.data, TrainConfig(steps=2000))
        self.seconds = time.perf_counter() - t
        self.emd_after = evaluate_emd(self.model, self.codes, self.data, clouds=clouds)


@pytest.fixture(scope="session")
def trained_run():
    return TrainedRun()
