import numpy as np
import pytest

from drpp.ambiguity import AmbiguitySet, Gamma0

REF_A = np.array([[1.0, 0.1], [0.0, 1.0]])
REF_B = np.eye(2)
REF_COV = np.array([[1.0, 0.5], [0.5, 1.5]])

ACCEPTANCE_LINES: list[str] = []


def make_reference_set(gamma0: Gamma0 | None = None, **kw) -> AmbiguitySet:
    if gamma0 is None:
        gamma0 = Gamma0("clipped_norm", 0.3, 5.0)
    params = dict(gamma1=0.5, gamma2=3.0, gamma3=0.0)
    params.update(kw)
    return AmbiguitySet(REF_A, REF_B, np.zeros(2), REF_COV, gamma0, **params)


def random_spd(rng: np.random.Generator, d: int, floor: float = 0.2) -> np.ndarray:
    W = rng.normal(size=(d, d))
    return W @ W.T + floor * np.eye(d)


def expected_log_score(p, truth) -> float:
    """Closed-form E[log p(x)] for x ~ N(truth mean, truth cov)."""
    Si = np.linalg.inv(p.covariance)
    m = truth.next_state_mean - p.mean
    _, logdet = np.linalg.slogdet(p.covariance)
    return -0.5 * (p.dim * np.log(2 * np.pi) + logdet + np.trace(Si @ truth.noise_cov) + m @ Si @ m)


@pytest.fixture
def ref_set() -> AmbiguitySet:
    return make_reference_set()


@pytest.fixture
def report():
    def _report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
