import numpy as np
import pytest

from fpca import FPCAConfig, WeightBlock


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    # 5x5 kernel, non-overlapping stride, 4 channels, 8x8 output grid
    return FPCAConfig(rows=40, cols=40, max_kernel=5, out_channels=4, stride=5)


def make_block(cfg, rng):
    kernels = [rng.uniform(-1.0, 1.0, (cfg.max_kernel, cfg.max_kernel, 3))
               for _ in range(cfg.out_channels)]
    return WeightBlock.program(kernels, cfg)
