import mpmath as mp
import numpy as np
import pytest

from marchenko import inversion, kernel, morse


@pytest.fixture(scope="session")
def model():
    return morse.MorseModel()


@pytest.fixture(scope="session")
def engine(model):
    return kernel.fourier_engine(model)


@pytest.fixture(scope="session")
def rep(model):
    return kernel.build_kernel(model)


@pytest.fixture(scope="session")
def coarse_r():
    return inversion.default_r_grid(0.3, 12.0, 0.05)


@pytest.fixture(scope="session")
def nystrom():
    return inversion.nystrom_grid()


@pytest.fixture(scope="session")
def coarse_reconstruction(rep, coarse_r, nystrom):
    return inversion.reconstruct(rep, coarse_r, nystrom)


def s_oracle(model, k, y, dps=40):
    """exp(-y/2) 1F1(1/2 - a + i beta; 1 + 2 i beta; y) in arbitrary precision."""
    with mp.workdps(dps):
        b = mp.mpf(k) / mp.mpf(model.alpha)
        yy = mp.mpf(y)
        return complex(mp.exp(-yy / 2) * mp.hyp1f1(0.5 - mp.mpf(model.a) + 1j * b, 1 + 2j * b, yy))


def delta_oracle(model, k):
    return float(np.angle(s_oracle(model, k, model.y0)))
