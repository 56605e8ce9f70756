import cmath
import math
from pathlib import Path

import numpy as np
import pytest

from iqgfm.config import SystemConfig

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "iqgfm" / "scenarios"


def rand_case_kwargs(rng: np.random.Generator) -> dict:
    """Log-uniform impedances, m_f in [0.05, 1.2], R_f in [0, 50] ohm."""
    zb = 220.0 ** 2 / 300.0

    def z(lo, hi, ang_lo=60, ang_hi=89):
        return cmath.rect(10 ** rng.uniform(lo, hi), math.radians(rng.uniform(ang_lo, ang_hi)))

    r_f = 0.0 if rng.random() < 0.1 else rng.uniform(0, 50) / zb
    return dict(
        z_s=z(-2, 0.5), dz_s=complex(10 ** rng.uniform(-3, 0.5), 10 ** rng.uniform(-3, 0.5)),
        z_g=z(-2, 0.5), z_l=z(-1.5, 0), m_f=rng.uniform(0.05, 1.2),
        m=rng.uniform(0.1, 0.95), r_f=r_f,
        v_f_pre=cmath.rect(rng.uniform(0.8, 1.1), rng.uniform(-0.5, 0.5)),
        i_s_pre=cmath.rect(rng.uniform(0, 1.2), rng.uniform(-1, 1)),
        de_s=cmath.rect(rng.uniform(0, 0.8), rng.uniform(-math.pi, math.pi)),
    )


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()
