"""Device laws for the two-node LTC/inverter feeder.

Everything here is a pure function of the parameter set: the deadband
signal seen by each device, a single LTC tap, a single synchronous
inverter actuation, the closed form for repeated inverter actions and
the spectral classification of the inverter-only loop.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import numbers
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

# Tolerance used when turning a delay ratio into an actuation count, so
# that e.g. 12.0 / 0.4 = 29.999999999999996 still counts as 30.
_COUNT_TOL = 1e-9


class RegimeError(ValueError):
    """An operation was asked for outside the gain regime it is defined for."""


class VoltagePair(NamedTuple):
    """Per-unit voltages at the substation node (v1) and branch node (v2)."""

    v1: float
    v2: float

    @property
    def vdiff(self) -> float:
        return self.v1 - self.v2


class DeadbandSignal(NamedTuple):
    """Signed deadband violation at each node; zero inside the band."""

    f1: float
    f2: float

    @property
    def clear(self) -> bool:
        return self.f1 == 0.0 and self.f2 == 0.0


PARAM_KEYS = ("v_ref", "eps", "chi", "eta", "d_inv", "d_l1", "d_l2", "vbar_l", "g", "t_s")


@dataclass(frozen=True)
class SystemParams:
    """Immutable parameter set of the feeder and its four devices.

    Only the inverter gain ``g`` has no default. Delays are in seconds,
    voltages in per unit. Positivity and ``0 < eta < 1`` are hard
    requirements; the delay ordering ``d_inv < d_l1 < d_l2 < 2 d_l1`` is
    only warned about, since parts of the analysis deliberately leave
    the nominal regime.
    """

    g: float
    v_ref: float = 1.0
    eps: float = 0.05
    chi: float = 0.1
    eta: float = 0.9
    d_inv: float = 4.0
    d_l1: float = 30.0
    d_l2: float = 40.0
    vbar_l: float = 0.03
    t_s: float = 1.0

    def __post_init__(self) -> None:
        for name in PARAM_KEYS:
            value = getattr(self, name)
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Real):
                raise TypeError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            # Coerce ints so that JSON round trips compare equal.
            object.__setattr__(self, name, float(value))
        for name in ("v_ref", "eps", "chi", "d_inv", "d_l1", "d_l2", "t_s"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.vbar_l < 0.0:
            raise ValueError(f"vbar_l must be non-negative, got {self.vbar_l}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if not self.d_inv < self.d_l1 < self.d_l2 < 2.0 * self.d_l1:
            warnings.warn(
                "delays outside the nominal ordering d_inv < d_l1 < d_l2 < 2*d_l1 "
                f"(d_inv={self.d_inv}, d_l1={self.d_l1}, d_l2={self.d_l2})",
                stacklevel=3,
            )

    @property
    def v_minus(self) -> float:
        return self.v_ref - self.eps

    @property
    def v_plus(self) -> float:
        return self.v_ref + self.eps

    @property
    def n1(self) -> int:
        """Inverter actions that fit inside one substation-LTC delay."""
        return math.floor(self.d_l1 / self.d_inv + _COUNT_TOL)

    @property
    def n2(self) -> int:
        """Inverter actions that fit inside one branch-LTC delay."""
        return math.floor(self.d_l2 / self.d_inv + _COUNT_TOL)

    def replace(self, **changes: float) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return {key: getattr(self, key) for key in PARAM_KEYS}

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        unknown = set(data) - set(PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        if "g" not in data:
            raise ValueError("parameter set needs an inverter gain 'g'")
        return cls(**{key: data[key] for key in PARAM_KEYS if key in data})

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "SystemParams":
        """Load from a JSON string or from a path to a JSON file."""
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric 2x2 sensitivity of node voltages to inverter reactive power."""

    x11: float
    x12: float
    x21: float
    x22: float

    @classmethod
    def from_params(cls, p: SystemParams) -> "CouplingMatrix":
        return cls(p.chi, p.eta * p.chi, p.eta * p.chi, p.chi)

    def as_array(self) -> np.ndarray:
        return np.array([[self.x11, self.x12], [self.x21, self.x22]])


def deadband_signal(v: VoltagePair, p: SystemParams) -> DeadbandSignal:
    """Return how far each voltage sits outside ``[v-, v+]``.

    Positive means over-voltage, negative under-voltage, and exactly
    zero anywhere inside the closed band.
    """
    lo, hi = p.v_minus, p.v_plus
    return DeadbandSignal(
        max(v[0] - hi, 0.0) - max(lo - v[0], 0.0),
        max(v[1] - hi, 0.0) - max(lo - v[1], 0.0),
    )


def ltc_tap(v: VoltagePair, direction: int, p: SystemParams) -> VoltagePair:
    """Shift both voltages by one tap of size ``vbar_l``.

    ``direction`` is +1 for a tap up and -1 for a tap down. Either LTC
    moves both nodes by the same amount in this feeder model.
    """
    if direction not in (1, -1):
        raise ValueError(f"tap direction must be +1 or -1, got {direction!r}")
    shift = direction * p.vbar_l
    return VoltagePair(v[0] + shift, v[1] + shift)


def _inverter_update(v1, v2, a1, a2, p: SystemParams):
    """One synchronous inverter action on scalars or numpy arrays.

    ``a1`` and ``a2`` are 0/1 activity flags. Written out component-wise
    so that the scalar path and the batched simulator round identically.
    """
    u1 = p.g * a1 * (v1 - p.v_ref)
    u2 = p.g * a2 * (v2 - p.v_ref)
    cross = p.eta * p.chi
    return v1 - (p.chi * u1 + cross * u2), v2 - (cross * u1 + p.chi * u2)


def inverter_step(v: VoltagePair, active: tuple[bool, bool], p: SystemParams) -> VoltagePair:
    """Apply one inverter action; inactive inverters contribute nothing."""
    a1 = 1.0 if active[0] else 0.0
    a2 = 1.0 if active[1] else 0.0
    return VoltagePair(*_inverter_update(float(v[0]), float(v[1]), a1, a2, p))


def inverter_gain_factor(n: float, p: SystemParams) -> float:
    """``(1 - chi g)^n - 1``, the fractional error change after ``n`` actions.

    ``n`` may be non-integer; the delay sweep uses that to compare a
    rounded actuation count with the exact delay ratio.
    """
    return (1.0 - p.chi * p.g) ** n - 1.0


def delta_v_inv(n: int, v_i: float, p: SystemParams) -> tuple[float, float]:
    """Voltage change from ``n`` consecutive actions of a single inverter.

    Returns ``(own, coupled)``: the change at the acting node and the
    change it induces at the other node.
    """
    if n < 0:
        raise ValueError(f"actuation count must be non-negative, got {n}")
    own = inverter_gain_factor(n, p) * (v_i - p.v_ref)
    return own, p.eta * own


class StabilityClass(enum.Enum):
    CONVERGES = "Converges"
    MARGINAL = "Marginal"
    DIVERGES = "Diverges"


def closed_loop_matrix(p: SystemParams) -> np.ndarray:
    """Error dynamics ``I - g X`` when both inverters act every period."""
    return np.eye(2) - p.g * CouplingMatrix.from_params(p).as_array()


def closed_loop_eigenvalues(p: SystemParams) -> np.ndarray:
    return np.linalg.eigvalsh(closed_loop_matrix(p))


def closed_loop_class(p: SystemParams, tol: float = 1e-12) -> StabilityClass:
    """Classify the inverter-only loop by its spectral radius.

    The matrix is symmetric, so its eigenvalues are real; a radius within
    ``tol`` of one counts as marginal.
    """
    radius = float(np.max(np.abs(closed_loop_eigenvalues(p))))
    if radius > 1.0 + tol:
        return StabilityClass.DIVERGES
    if radius < 1.0 - tol:
        return StabilityClass.CONVERGES
    return StabilityClass.MARGINAL
