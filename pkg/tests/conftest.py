import numpy as np
import pytest

from cyclic_rca.sem_model import LinearSem, NoiseSpec

CRITERIA_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}: {title} | {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def unit_sem(A, latent=(), scales=None):
    A = np.asarray(A, dtype=float)
    scales = np.ones(A.shape[0]) if scales is None else scales
    return LinearSem(A, tuple(NoiseSpec("gaussian", float(s)) for s in scales), latent)


def figure1_sem(a14=0.7, a25=-1.2, a34=0.9, a31=0.6, a32=-0.8, a51=1.1):
    # nodes: X1, X2, X3, L1, L2
    A = np.zeros((5, 5))
    A[0, 3], A[1, 4], A[2, 3] = a14, a25, a34
    A[2, 0], A[2, 1], A[4, 0] = a31, a32, a51
    return unit_sem(A, latent=(3, 4), scales=[1.0, 0.8, 1.3, 0.9, 1.1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def exact_cov_data(cov, m, rng):
    """``m`` rows with mean exactly 0 and sample covariance exactly ``cov``."""
    cov = np.asarray(cov, dtype=float)
    Z = rng.standard_normal((m, cov.shape[0]))
    Z -= Z.mean(axis=0)
    L = np.linalg.cholesky(np.cov(Z, rowvar=False))
    white = np.linalg.solve(L, Z.T).T
    return white @ np.linalg.cholesky(cov).T


def two_node_sem(rho=0.5):
    # X1 -> X2 with unit marginal variances
    return unit_sem([[0.0, 0.0], [rho, 0.0]], scales=[1.0, np.sqrt(1 - rho ** 2)])
