"""
Closed-form charge-sharing arithmetic.

Capacitances are relative (C_CBL = 1.0). Voltages are passed in volts, but every
transform is linear in VDD, so calling with ``vdd=1.0`` gives normalized units.
The macro pipeline works normalized and scales by VDD only when reporting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

N_CBL = 16
VDD_MIN = 0.6
VDD_MAX = 1.2
X_MAX = 15

# (bit position, CBL indices) for the MSB-first contiguous grouping; index 15 stays precharged
DEFAULT_GROUPS: tuple[tuple[int, tuple[int, ...]], ...] = (
    (3, tuple(range(0, 8))),
    (2, tuple(range(8, 12))),
    (1, (12, 13)),
    (0, (14,)),
)
ALWAYS_ON: tuple[int, ...] = (15,)


@dataclass(frozen=True)
class SupplyVoltage:
    """Supply voltage in volts, restricted to the macro's operating range."""

    vdd: float

    def __post_init__(self):
        if not (VDD_MIN <= self.vdd <= VDD_MAX):
            raise DomainError(f"vdd={self.vdd} V outside [{VDD_MIN}, {VDD_MAX}] V")

    def to_volts(self, normalized):
        return normalized * self.vdd

    def normalize(self, volts):
        return volts / self.vdd


@dataclass(frozen=True)
class ChargeNode:
    capacitance: float
    voltage: float

    def __post_init__(self):
        if not self.capacitance > 0:
            raise DomainError(f"capacitance must be > 0, got {self.capacitance}")

    @property
    def charge(self) -> float:
        return self.capacitance * self.voltage


def _vdd(vdd) -> float:
    return vdd.vdd if isinstance(vdd, SupplyVoltage) else float(vdd)


def check_activation(x: int) -> int:
    if not (0 <= int(x) <= X_MAX) or int(x) != x:
        raise DomainError(f"input activation must be an integer in [0, 15], got {x}")
    return int(x)


def check_weight_bit(w: int) -> int:
    if w not in (0, 1):
        raise DomainError(f"weight bit must be 0 or 1, got {w}")
    return int(w)


def share_charges(nodes: Sequence[ChargeNode]) -> float:
    """Common voltage after connecting all ``nodes``: sum(C*V) / sum(C)."""
    if len(nodes) == 0:
        raise DomainError("charge sharing needs at least one node")
    total_c = 0.0
    total_q = 0.0
    for node in nodes:
        total_c += node.capacitance
        total_q += node.charge
    return total_q / total_c


def dac_group_nodes(x: int, vdd=1.0, groups=DEFAULT_GROUPS, always_on=ALWAYS_ON) -> list[ChargeNode]:
    """Unit CBL capacitors after the input-dependent discharge, before sharing."""
    x = check_activation(x)
    v = _vdd(vdd)
    volts = [v] * N_CBL
    for bit, members in groups:
        if (x >> bit) & 1:
            for i in members:
                volts[i] = 0.0
    for i in always_on:
        volts[i] = v
    return [ChargeNode(1.0, u) for u in volts]


def dac_convert(x: int, vdd=1.0) -> float:
    """
    CBL voltage encoding a 4-bit activation: (16 - x) * VDD / 16.

    Larger activations discharge more capacitors, so the voltage falls with x.
    """
    x = check_activation(x)
    return (N_CBL - x) / N_CBL * _vdd(vdd)


def multiply(v_cbl: float, w: int, vdd=1.0) -> float:
    """A weight of 1 keeps the CBL voltage; a weight of 0 pulls it back to VDD."""
    w = check_weight_bit(w)
    v = _vdd(vdd)
    if not (0.0 <= v_cbl <= v):
        raise DomainError(f"CBL voltage {v_cbl} outside [0, {v}]")
    return v_cbl if w == 1 else v


def accumulate(cbl_voltages, rho: float = 1.0, vdd=1.0, axis: int = -1):
    """
    ABL voltage after sharing 16 CBLs with the VDD-precharged ABL.

    ``(sum(V_j) + rho*VDD) / (16 + rho)`` along ``axis``. Accepts a list of 16
    voltages or an array whose ``axis`` has length 16.
    """
    arr = np.asarray(cbl_voltages, dtype=float)
    if arr.ndim == 0 or arr.shape[axis] != N_CBL:
        raise DomainError(f"accumulation needs exactly {N_CBL} CBL voltages")
    if rho < 0:
        raise DomainError(f"rho must be >= 0, got {rho}")
    out = (arr.sum(axis=axis) + rho * _vdd(vdd)) / (N_CBL + rho)
    return float(out) if np.ndim(out) == 0 else out


def abl_from_pmac(pmac, rho: float = 1.0, vdd=1.0):
    """
    Noiseless ABL voltage for an integer (or dyadic) pMAC value.

    Identical in floating point to :func:`accumulate` over product-encoding CBL
    voltages when ``vdd=1``, because ``16 - p/16`` is exact for every reachable p.
    """
    p = np.asarray(pmac, dtype=float)
    out = ((N_CBL - p / N_CBL) + rho) / (N_CBL + rho) * _vdd(vdd)
    return float(out) if np.ndim(out) == 0 else out
