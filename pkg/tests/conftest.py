import numpy as np
import pytest

from cfmimo.config import SystemConfig
from cfmimo.downlink import DownlinkSetup
from cfmimo.uplink import EffectiveChannel


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    A = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return scale * (A @ A.conj().T) / rank


def random_eff(rng, M, K, R, err=0.1):
    g = (rng.standard_normal((M, K, R)) + 1j * rng.standard_normal((M, K, R))) / np.sqrt(2)
    Cg = np.stack([[random_psd(rng, R, scale=err) for _ in range(K)] for _ in range(M)])
    return EffectiveChannel(g, Cg)


def random_combiners(rng, M, N, R):
    return np.exp(2j * np.pi * rng.random((M, N, R)))


def toy_setup(rng, M, N, R, rho_d=0.05, sigma2_d=1.0, P_d=1.0, C_d=3.0):
    return DownlinkSetup(random_combiners(rng, M, N, R), rho_d, sigma2_d, P_d, C_d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_cfg():
    return SystemConfig()


_RESULTS = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    _RESULTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
