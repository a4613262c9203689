import numpy as np
import pytest

from prelog_lab.channel import ChannelConfig, dft_correlation
from prelog_lab.pilots import plan_pilots

PRESETS = {
    "A": (5, 3, 2),
    "B": (6, 4, 3),
    "C": (4, 3, 2),
    "D": (6, 3, 2),
}


@pytest.fixture(params=sorted(PRESETS), ids=lambda p: f"preset{p}")
def preset(request):
    name = request.param
    L, Q, R = PRESETS[name]
    cfg = ChannelConfig(L, Q, R)
    return name, cfg, plan_pilots(cfg), dft_correlation(L, Q)


def fd_jacobian(f, z0, h=1e-6):
    """Central-difference Jacobian of a holomorphic map, column by column."""
    base = f(z0)
    J = np.zeros((base.size, z0.size), dtype=np.complex128)
    for k in range(z0.size):
        e = np.zeros_like(z0)
        e[k] = h
        J[:, k] = (f(z0 + e) - f(z0 - e)) / (2 * h)
    return J
