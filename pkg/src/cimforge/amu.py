"""
Analog multiplication unit: 16 local arrays of 16 P-8T cells sharing one DAC.

A cycle runs precharge -> DA conversion -> multiplication -> release. States are
immutable values; every phase returns a new :class:`AmuState`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import charge
from .charge import ALWAYS_ON, DEFAULT_GROUPS, N_CBL, ChargeNode
from .errors import DomainError, PhaseError


class PeripheralType(enum.Enum):
    TYPE_A = "A"
    TYPE_B = "B"  # carries the eDAC pass switch between iBL segments


class Phase(enum.Enum):
    IDLE = "idle"
    PRECHARGED = "precharged"
    CONVERTED = "converted"
    MULTIPLIED = "multiplied"


_NEXT = {
    Phase.IDLE: Phase.PRECHARGED,
    Phase.PRECHARGED: Phase.CONVERTED,
    Phase.CONVERTED: Phase.MULTIPLIED,
    Phase.MULTIPLIED: Phase.IDLE,
}


def _peripherals_for(groups) -> tuple[PeripheralType, ...]:
    # one pass switch at the first index of every group boundary after the first
    kinds = [PeripheralType.TYPE_A] * N_CBL
    for _, members in groups[1:]:
        kinds[min(members)] = PeripheralType.TYPE_B
    for i in ALWAYS_ON:
        kinds[i] = PeripheralType.TYPE_B
    return tuple(kinds)


def validate_groups(groups, always_on=ALWAYS_ON):
    sizes = sorted((len(m) for _, m in groups), reverse=True) + [len(always_on)]
    if sizes != [8, 4, 2, 1, 1]:
        raise DomainError(f"group sizes must be 8,4,2,1 + 1 always-on, got {sizes}")
    for bit, members in groups:
        if len(members) != 1 << bit:
            raise DomainError(f"group for bit {bit} must have {1 << bit} members")
    flat = [i for _, m in groups for i in m] + list(always_on)
    if sorted(flat) != list(range(N_CBL)):
        raise DomainError("groups must partition CBL indices 0..15")


@dataclass(frozen=True)
class AmuState:
    """
    One AMU. ``cells[c, r]`` is the bit stored in row ``r`` of local array ``c``;
    ``cbl`` holds the 16 per-column CBL voltages in volts.
    """

    cells: np.ndarray
    groups: tuple = DEFAULT_GROUPS
    always_on: tuple = ALWAYS_ON
    phase: Phase = Phase.IDLE
    cbl: np.ndarray = field(default_factory=lambda: np.zeros(N_CBL))

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.shape != (N_CBL, N_CBL) or cells.max(initial=0) > 1:
            raise DomainError("cells must be a 16x16 array of bits")
        validate_groups(self.groups, self.always_on)
        cells.setflags(write=False)
        cbl = np.array(self.cbl, dtype=float)
        cbl.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "cbl", cbl)

    @classmethod
    def blank(cls, **kwargs) -> "AmuState":
        return cls(np.zeros((N_CBL, N_CBL), dtype=np.uint8), **kwargs)

    @property
    def peripherals(self) -> tuple[PeripheralType, ...]:
        return _peripherals_for(self.groups)

    def _advance(self, expected: Phase, cbl) -> "AmuState":
        if self.phase is not expected:
            raise PhaseError(f"expected phase {expected.value}, AMU is {self.phase.value}")
        return replace(self, phase=_NEXT[expected], cbl=cbl)


def precharge(amu: AmuState, vdd=1.0) -> AmuState:
    v = charge._vdd(vdd)
    return amu._advance(Phase.IDLE, np.full(N_CBL, v))


def dac_phase(amu: AmuState, x: int, vdd=1.0) -> AmuState:
    """Discharge the groups selected by the input bits, then share all 16 CBLs."""
    nodes = charge.dac_group_nodes(x, vdd, amu.groups, amu.always_on)
    # nodes start from the precharged CBLs; only discharged groups move to 0
    nodes = [ChargeNode(n.capacitance, min(n.voltage, v)) for n, v in zip(nodes, amu.cbl)]
    shared = charge.share_charges(nodes)
    return amu._advance(Phase.PRECHARGED, np.full(N_CBL, shared))


def mult_phase(amu: AmuState, row: int, vdd=1.0) -> AmuState:
    """Apply the 1-bit weights stored in ``row``; iBLs are disconnected, so columns are independent."""
    if not (0 <= row < N_CBL):
        raise DomainError(f"row must be in [0, 15], got {row}")
    weights = amu.cells[:, row]
    out = np.array([charge.multiply(v, int(w), vdd) for v, w in zip(amu.cbl, weights)])
    return amu._advance(Phase.CONVERTED, out)


def release(amu: AmuState) -> AmuState:
    """End the cycle after the CBL charge has been handed to the ABL."""
    return amu._advance(Phase.MULTIPLIED, amu.cbl)


def amu_products(x: int, weight_row, vdd=1.0) -> np.ndarray:
    """Per-column CBL voltages ``VDD * (16 - x*w_c) / 16`` after a full multiply."""
    x = charge.check_activation(x)
    w = np.asarray(weight_row)
    if w.shape != (N_CBL,) or not np.isin(w, (0, 1)).all():
        raise DomainError("weight_row must hold 16 bits")
    return (N_CBL - x * w.astype(float)) / N_CBL * charge._vdd(vdd)


def run_cycle(x: int, weight_row, vdd=1.0) -> np.ndarray:
    """The same products as :func:`amu_products`, obtained by stepping the phases."""
    cells = np.zeros((N_CBL, N_CBL), dtype=np.uint8)
    cells[:, 0] = np.asarray(weight_row, dtype=np.uint8)
    state = precharge(AmuState(cells), vdd)
    state = dac_phase(state, x, vdd)
    state = mult_phase(state, 0, vdd)
    return np.array(state.cbl)


def ref_column_voltage(n_ones: int, rho: float = 1.0, vdd=1.0) -> float:
    """
    Reference ABL voltage of a column whose selected row stores ``n_ones`` ones.

    Every reference AMU converts input 8 (half VDD), so N cells hold VDD/2 and the
    rest VDD. At ``rho=0`` this is ``(N/2 + 16 - N) * VDD / 16``.
    """
    if not (0 <= n_ones <= N_CBL) or int(n_ones) != n_ones:
        raise DomainError(f"n_ones must be an integer in [0, 16], got {n_ones}")
    if rho < 0:
        raise DomainError(f"rho must be >= 0, got {rho}")
    num = (N_CBL - n_ones / 2) + rho
    return num / (N_CBL + rho) * charge._vdd(vdd)
