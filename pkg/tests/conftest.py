import numpy as np
import scipy.sparse as sp
import pytest

from mqsim.fem import DofPartition


class DenseBlocks:
    """Minimal stand-in for BlockSystem built from given dense blocks."""

    def __init__(self, M_c, K_c, K_cn, K_n, j_unit):
        self.M_c = sp.csr_matrix(np.atleast_2d(M_c))
        self.K_c = sp.csr_matrix(np.atleast_2d(K_c))
        self.K_cn = sp.csr_matrix(np.atleast_2d(K_cn))
        self.K_n = sp.csr_matrix(np.atleast_2d(K_n))
        self.j_unit = np.atleast_1d(np.asarray(j_unit, dtype=float))
        nc, nn = self.K_cn.shape
        self.partition = DofPartition(1, nc + nn, np.arange(nc), np.arange(nc, nc + nn), np.array([], int))
        self.is_linear = True

    @property
    def n_c(self):
        return self.M_c.shape[0]

    @property
    def n_n(self):
        return self.K_n.shape[0]

    def stiffness_c(self, a_c):
        return self.K_c

    def full_matrix(self, kc=None, mass_scale=0.0):
        kc = self.K_c if kc is None else kc
        return sp.bmat([[kc + mass_scale * self.M_c, self.K_cn], [self.K_cn.T, self.K_n]], format="csr")


def random_spd(rng, n, shift=1.0):
    g = rng.standard_normal((n, n))
    return g @ g.T + shift * np.eye(n)


@pytest.fixture
def dense_blocks():
    return DenseBlocks


_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def report(criterion, ok: bool, detail: str) -> None:
    """Record an acceptance outcome; printed once more in the terminal summary."""
    _ACCEPTANCE[str(criterion)] = (ok, detail)
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (not k[0].isdigit(), k)):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")
