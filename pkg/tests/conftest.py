import numpy as np
import pytest

from beamalloc import SystemConfig
from beamalloc.experiment import build_precoder, make_trial


@pytest.fixture
def cfg():
    return SystemConfig()


def make_instance(cfg, seed, precoder_kind="zf"):
    """Channel plus precoder for one seeded trial."""
    trial = make_trial(cfg, seed)
    return trial.channel, build_precoder(trial, cfg, precoder_kind)


def random_channel(n, k, seed):
    """Plain i.i.d. complex Gaussian channel matrix (no geometry)."""
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))) / np.sqrt(2)
