"""Prescribed-time performance envelopes and the funnel error transformation.

The envelope ``eta(t)`` shrinks from pi/2 at t=0 to a terminal accuracy ``c``
exactly at a user-chosen settling time ``T``, independently of initial
conditions.  The error transformation maps a tracking error ``e`` constrained
by ``|arctan(e)| < eta(t)`` to an unconstrained variable ``z1``; boundedness
of ``z1`` certifies the funnel bound.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

__all__ = [
    "FunnelBreachError",
    "PerfFunction",
    "TransformKind",
    "ErrorTransform",
    "perf_from_terminal",
]

_HALF_PI = math.pi / 2.0

# Fraction of T below which eta/eta_dot switch to the t >= T branch, avoiding
# 0*inf at the pole of the exponent.
_POLE_GUARD = 1e-12


class FunnelBreachError(ValueError):
    """The tracking error left the performance funnel.

    Raised when the transformation domain |arctan(e)| < eta(t) (or its
    tanh-based analogue for the asymmetric kinds) is violated.  Simulations
    treat this as a verification failure, never as a silent clamp.
    """

    def __init__(self, t: float, e: float, eta: float):
        super().__init__(
            f"funnel breach at t={t:.6g}: error {e:.6g} outside envelope {eta:.6g}"
        )
        self.t = t
        self.e = e
        self.eta = eta


@dataclass(frozen=True)
class PerfFunction:
    """Performance envelope a*exp(-b*(T/(T-t))^h) + c, frozen at c for t >= T.

    Construction enforces eta(0) = a*exp(-b) + c = pi/2, which makes the
    tangent-based error transformation well defined for any initial error.
    """

    a: float
    b: float
    c: float
    h: float
    T: float

    def __post_init__(self):
        for name in ("a", "b", "c", "h", "T"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"PerfFunction.{name} must be strictly positive")
        if abs(self.a * math.exp(-self.b) + self.c - _HALF_PI) > 1e-9:
            raise ValueError(
                "PerfFunction requires a*exp(-b) + c = pi/2 "
                f"(got {self.a * math.exp(-self.b) + self.c!r})"
            )

    def eta(self, t: float) -> float:
        """Envelope value at time t >= 0."""
        if t >= self.T - _POLE_GUARD * self.T:
            return self.c
        # exp underflows to 0 as t -> T, giving a continuous junction.
        return self.a * math.exp(-self.b * (self.T / (self.T - t)) ** self.h) + self.c

    def eta_dot(self, t: float) -> float:
        """Time derivative of the envelope; nonpositive, exactly 0 for t >= T."""
        if t >= self.T - _POLE_GUARD * self.T:
            return 0.0
        rem = self.T - t
        decay = math.exp(-self.b * (self.T / rem) ** self.h)
        if decay == 0.0:
            return 0.0
        return -self.a * self.b * self.h * self.T**self.h / rem ** (self.h + 1.0) * decay


def perf_from_terminal(b: float, c: float, h: float, T: float) -> PerfFunction:
    """Build a PerfFunction from (b, c, h, T), deriving a = (pi/2 - c)*e^b."""
    if not (b > 0.0 and c > 0.0 and h > 0.0 and T > 0.0):
        raise ValueError("b, c, h, T must be strictly positive")
    if c >= _HALF_PI:
        raise ValueError(f"terminal accuracy c={c!r} must be below pi/2")
    return PerfFunction(a=(_HALF_PI - c) * math.exp(b), b=b, c=c, h=h, T=T)


class TransformKind(enum.Enum):
    """Which barrier shape maps the error into the funnel coordinate.

    SYMMETRIC_TAN uses the tangent barrier on both sides.  The asymmetric
    kinds swap in an arctanh barrier on one side: ASYMMETRIC_TAN_UPPER keeps
    the tangent branch for negative errors, ASYMMETRIC_TAN_LOWER for
    nonnegative errors.
    """

    SYMMETRIC_TAN = "symmetric-tan"
    ASYMMETRIC_TAN_UPPER = "asymmetric-tan-upper"
    ASYMMETRIC_TAN_LOWER = "asymmetric-tan-lower"


@dataclass(frozen=True)
class ErrorTransform:
    """Funnel transformation z1 = tan((pi/2) * arctan(e) / eta(t)) and helpers.

    ``phi_floor`` bounds the cosine-squared auxiliary away from zero; the
    controller divides by it and the floor only matters in the unreachable
    limit |z1| -> inf while eta is still near pi/2.
    """

    perf: PerfFunction
    kind: TransformKind = TransformKind.SYMMETRIC_TAN
    phi_floor: float = field(default=1e-12)

    def __post_init__(self):
        if not self.phi_floor > 0.0:
            raise ValueError("phi_floor must be strictly positive")

    # -- forward / inverse ------------------------------------------------

    def transform(self, e: float, t: float) -> float:
        """Map error e to the unconstrained coordinate z1; raises on breach."""
        return self._transform(e, t, self.perf.eta(t))

    def _transform(self, e: float, t: float, eta: float) -> float:
        if self.kind is TransformKind.SYMMETRIC_TAN:
            return self._tan_branch(e, t, eta)
        if self.kind is TransformKind.ASYMMETRIC_TAN_LOWER:
            # tangent branch for e >= 0, arctanh barrier below
            if e >= 0.0:
                return self._tan_branch(e, t, eta)
            return self._atanh_branch(e, t, eta)
        # ASYMMETRIC_TAN_UPPER: arctanh barrier for e >= 0, tangent below
        if e >= 0.0:
            return self._atanh_branch(e, t, eta)
        return self._tan_branch(e, t, eta)

    def inverse_transform(self, z1: float, t: float) -> float:
        """Map z1 back to the error; exact inverse of :meth:`transform`."""
        eta = self.perf.eta(t)
        if self.kind is TransformKind.SYMMETRIC_TAN:
            return self._tan_inverse(z1, eta)
        if self.kind is TransformKind.ASYMMETRIC_TAN_LOWER:
            if z1 >= 0.0:
                return self._tan_inverse(z1, eta)
            return self._atanh_inverse(z1, t, eta)
        if z1 >= 0.0:
            return self._atanh_inverse(z1, t, eta)
        return self._tan_inverse(z1, eta)

    def _tan_branch(self, e: float, t: float, eta: float) -> float:
        theta = math.atan(e)
        if abs(theta) >= eta:
            raise FunnelBreachError(t, e, eta)
        return math.tan(_HALF_PI * theta / eta)

    @staticmethod
    def _tan_inverse(z1: float, eta: float) -> float:
        return math.tan(eta * math.atan(z1) / _HALF_PI)

    def _atanh_branch(self, e: float, t: float, eta: float) -> float:
        w = (2.0 / math.pi) * math.tanh(e) / eta
        if abs(w) >= 1.0:
            raise FunnelBreachError(t, e, eta)
        return math.atanh(w)

    def _atanh_inverse(self, z1: float, t: float, eta: float) -> float:
        w = _HALF_PI * eta * math.tanh(z1)
        if abs(w) >= 1.0:
            # only reachable with z1 outside the image of the forward map
            raise FunnelBreachError(t, w, eta)
        return math.atanh(w)

    # -- controller auxiliaries ------------------------------------------

    def psi(self, z1: float, t: float) -> float:
        """Sensitivity factor pi*(1 + z1^2) / (2*eta(t)); strictly positive."""
        return math.pi * (1.0 + z1 * z1) / (2.0 * self.perf.eta(t))

    def varphi(self, z1: float, t: float) -> float:
        """cos^2((2/pi)*eta(t)*arctan(z1)), floored at phi_floor."""
        c = math.cos(2.0 / math.pi * self.perf.eta(t) * math.atan(z1))
        return max(c * c, self.phi_floor)
