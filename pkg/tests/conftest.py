import numpy as np
import pytest

from deblur import build_operator, gaussian_psf_2d, generate_test_image
from deblur.noise import add_gaussian_white

# filled by test_acceptance, one entry per criterion
ACCEPTANCE_LINES: list[str] = []


class H64:
    """The 64x64 H scene, default Gaussian blur, zero bc, 0.1% white noise."""

    def __init__(self, seed=7):
        self.psf = gaussian_psf_2d()
        self.op = build_operator(self.psf, "zero", 64)
        self.x_true = generate_test_image("H", 64)
        self.b_true = self.op.apply(self.x_true)
        self.b, self.e = add_gaussian_white(self.b_true, 1e-3, seed)
        self.delta = float(np.linalg.norm(self.e))


@pytest.fixture(scope="session")
def h64():
    return H64()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
