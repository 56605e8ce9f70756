"""Per-unit system and two-source network configuration.

All network math runs in per-unit on the system base.  Resistances and
reactances are in pu, inductances in pu*s (so ``v = R i + L di/dt`` holds
with ``t`` in seconds), and instantaneous waveforms use the peak of the
nominal phase quantity as 1 pu, so a phasor of magnitude 1 maps to a
sinusoid of amplitude 1.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Base:
    kv: float = 220.0
    mva: float = 300.0
    f0: float = 50.0

    @property
    def z_ohm(self) -> float:
        return self.kv**2 / self.mva

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.f0

    @property
    def period(self) -> float:
        return 1.0 / self.f0

    def ohm_to_pu(self, ohm: float) -> float:
        return ohm / self.z_ohm

    def pu_to_ohm(self, pu: float) -> float:
        return pu * self.z_ohm


@dataclass(frozen=True)
class LineParams:
    """Full-length line parameters in pu (R) and pu*s (L)."""

    r1: float
    l1: float
    r0: float
    l0: float
    length_km: float = 100.0

    def __post_init__(self):
        if min(self.r1, self.l1, self.r0, self.l0) < 0:
            raise ValueError("line parameters must be non-negative")
        if self.l1 <= 0:
            raise ValueError("positive-sequence inductance must be > 0")

    @classmethod
    def from_ohm_per_km(cls, r1_km, x1_km, r0_km, x0_km, length_km, base: Base):
        w = base.omega
        zb = base.z_ohm
        return cls(
            r1=r1_km * length_km / zb,
            l1=x1_km * length_km / zb / w,
            r0=r0_km * length_km / zb,
            l0=x0_km * length_km / zb / w,
            length_km=length_km,
        )

    def z1(self, omega: float) -> complex:
        return complex(self.r1, omega * self.l1)

    def z0(self, omega: float) -> complex:
        return complex(self.r0, omega * self.l0)


def default_line(base: Base | None = None) -> LineParams:
    # 0.5 ohm/km at 80 deg; zero sequence roughly 3x positive
    base = base or Base()
    return LineParams.from_ohm_per_km(0.0868, 0.4924, 0.26, 1.48, 100.0, base)


@dataclass(frozen=True)
class SystemConfig:
    """Two-source single-line network with pre-fault load.

    Source impedances are sized from SIR relative to the full-length
    positive-sequence line impedance.  When ``p_pre`` is set, the sending
    IVS angle is solved to deliver that active power at the relay bus;
    otherwise ``e_s_angle_deg`` is used as given.
    """

    base: Base = field(default_factory=Base)
    line: LineParams = field(default_factory=default_line)
    sir_s: float = 0.3
    sir_g: float = 0.3
    source_angle_deg: float = 88.0
    grid_angle_deg: float = 88.0
    e_s_mag: float = 1.0
    e_g_mag: float = 1.0
    e_s_angle_deg: float = 0.0
    p_pre: float | None = 1.0
    i_limit: float = 1.2

    @property
    def omega(self) -> float:
        return self.base.omega

    @property
    def z_l(self) -> complex:
        return self.line.z1(self.omega)

    @property
    def z_l0(self) -> complex:
        return self.line.z0(self.omega)

    @property
    def z_s(self) -> complex:
        return cmath.rect(self.sir_s * abs(self.z_l), math.radians(self.source_angle_deg))

    @property
    def z_g(self) -> complex:
        return cmath.rect(self.sir_g * abs(self.z_l), math.radians(self.grid_angle_deg))

    def with_(self, **kw) -> "SystemConfig":
        return replace(self, **kw)
