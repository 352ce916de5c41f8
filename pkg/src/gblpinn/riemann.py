"""Exact self-similar solution of the GBL Riemann problem.

The solution is a zero-speed standing wave at x = 0 carrying the porosity
jump, followed (in x > 0) by the 1-wave of the scalar problem
``u_t + f(u, phi_R)_x = 0``. The flux has a single inflection point, so
the 1-wave is a shock, a rarefaction, or a rarefaction attached to a
contact shock through the tangency state u*.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import flux as F
from .exceptions import InvalidState, MobilityOutOfRange

FAN_SCHEMA = "fan_v1"

SHOCK = "Shock"
RAREFACTION = "Rarefaction"

_SAME_STATE_TOL = 1e-12
_BISECT_TOL = 1e-13


class State(NamedTuple):
    u: float
    phi: float


def check_state(u, phi):
    """Validate 0 <= u <= phi, phi > 0 and return a State."""
    u = float(u)
    phi = float(phi)
    if not (phi > 0.0 and 0.0 <= u <= phi) or not math.isfinite(u + phi):
        raise InvalidState(f"need 0 <= u <= phi and phi > 0, got u={u}, phi={phi}")
    return State(u, phi)


@dataclass(frozen=True)
class RiemannData:
    u_L: float
    phi_L: float
    u_R: float
    phi_R: float
    M: float = F.DEFAULT_M

    def __post_init__(self):
        check_state(self.u_L, self.phi_L)
        check_state(self.u_R, self.phi_R)
        if self.u_L <= 0 or self.u_R <= 0:
            raise InvalidState("Riemann data requires strictly positive saturations")
        if self.M <= 0:
            raise MobilityOutOfRange(f"M must be positive, got {self.M}")

    @property
    def left(self):
        return State(self.u_L, self.phi_L)

    @property
    def right(self):
        return State(self.u_R, self.phi_R)


@dataclass(frozen=True)
class StandingWave:
    u_minus: float
    u_plus: float
    phi_minus: float
    phi_plus: float
    speed: float = 0.0


@dataclass(frozen=True)
class WavePiece:
    kind: str
    u_left: float
    u_right: float
    speed_left: float
    speed_right: float

    @property
    def is_shock(self):
        return self.kind == SHOCK

    def contains(self, u):
        """True where u lies in the closed state interval swept by this piece."""
        lo, hi = sorted((self.u_left, self.u_right))
        u = np.asarray(u, dtype=float)
        return (u >= lo) & (u <= hi)


@dataclass(frozen=True)
class RiemannFan:
    data: RiemannData
    u_M: float
    standing: StandingWave
    pieces: tuple = field(default_factory=tuple)
    u_star: float | None = None

    @property
    def shock_speed(self):
        """Speed of the (single) shock piece, or None when the 1-wave is a pure fan."""
        for p in self.pieces:
            if p.is_shock:
                return p.speed_left
        return None

    def evaluate(self, x, t):
        return evaluate_fan(self, x, t)

    def to_dict(self):
        return {
            "schema": FAN_SCHEMA,
            "data": asdict(self.data),
            "u_M": self.u_M,
            "u_star": self.u_star,
            "standing": asdict(self.standing),
            "pieces": [asdict(p) for p in self.pieces],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema") != FAN_SCHEMA:
            raise ValueError(f"unsupported fan schema {doc.get('schema')!r}")
        return cls(
            data=RiemannData(**doc["data"]),
            u_M=doc["u_M"],
            standing=StandingWave(**doc["standing"]),
            pieces=tuple(WavePiece(**p) for p in doc["pieces"]),
            u_star=doc["u_star"],
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def middle_state(d: RiemannData) -> float:
    """u_M on the standing-wave curve u = (u_L / phi_L) phi, evaluated at phi_R."""
    return d.u_L / d.phi_L * d.phi_R


def u_star_discriminant(u_R, phi_R, M):
    Mt = M / (M + 1.0)
    return (2.0 * phi_R * u_R) ** 2 + 4.0 * Mt * (phi_R - 2.0 * u_R) * phi_R**3


def u_star(u_R, phi_R, M=F.DEFAULT_M):
    """Tangency state y != u_R with f_u(y) equal to the chord slope from u_R.

    Closed form from factoring the cubic ``q(y) = (y - u_R) * quadratic``;
    the admissible root is always ``u_+``.
    """
    if M <= 1.0:
        raise MobilityOutOfRange(f"u* needs M > 1, got M={M}")
    u_R = float(u_R)
    phi_R = float(phi_R)
    a = phi_R - 2.0 * u_R
    if abs(a) <= 1e-12 * phi_R:
        return 2.0 * M * u_R / (M + 1.0)
    disc = max(u_star_discriminant(u_R, phi_R, M), 0.0)
    return (-2.0 * phi_R * u_R + math.sqrt(disc)) / (2.0 * a)


def _shock(u_left, u_right, phi, M):
    s = (F.flux_f(u_left, phi, M) - F.flux_f(u_right, phi, M)) / (u_left - u_right)
    return WavePiece(SHOCK, u_left, u_right, s, s)


def _contact_shock(u_tangent, u_right, phi, M):
    # tangent at u_tangent, so the RH speed equals f_u(u_tangent)
    return _shock(u_tangent, u_right, phi, M)


def _rarefaction(u_left, u_right, phi, M):
    return WavePiece(
        RAREFACTION, u_left, u_right,
        F.flux_f_u(u_left, phi, M), F.flux_f_u(u_right, phi, M),
    )


def envelope_construct(u_from, u_to, phi, M=F.DEFAULT_M):
    """Decompose the 1-wave from u_from to u_to into shock/rarefaction pieces.

    Increasing jumps follow the lower convex envelope of f(., phi) and
    decreasing jumps the upper concave envelope. With one inflection point
    the envelope is either the flux itself, a single chord, or the flux up
    to u* followed by the chord tangent at u*.
    """
    u_from = float(u_from)
    u_to = float(u_to)
    if u_from == u_to:
        raise ValueError("envelope_construct needs u_from != u_to")
    infl = F.inflection(phi, M)
    if u_from < u_to:
        if u_to <= infl:
            return [_rarefaction(u_from, u_to, phi, M)]
        if u_from >= infl:
            return [_shock(u_from, u_to, phi, M)]
        c = u_star(u_to, phi, M)
        if c <= u_from:
            return [_shock(u_from, u_to, phi, M)]
    else:
        if u_to >= infl:
            return [_rarefaction(u_from, u_to, phi, M)]
        if u_from <= infl:
            return [_shock(u_from, u_to, phi, M)]
        c = u_star(u_to, phi, M)
        if c >= u_from:
            return [_shock(u_from, u_to, phi, M)]
    return [_rarefaction(u_from, c, phi, M), _contact_shock(c, u_to, phi, M)]


def solve_riemann(d: RiemannData) -> RiemannFan:
    u_M = middle_state(d)
    standing = StandingWave(d.u_L, u_M, d.phi_L, d.phi_R, 0.0)
    if abs(u_M - d.u_R) <= _SAME_STATE_TOL:
        return RiemannFan(d, u_M, standing, (), None)
    ustar = u_star(d.u_R, d.phi_R, d.M)
    pieces = tuple(envelope_construct(u_M, d.u_R, d.phi_R, d.M))
    return RiemannFan(d, u_M, standing, pieces, ustar)


def invert_speed(xi, u_a, u_b, phi, M=F.DEFAULT_M):
    """Solve f_u(u, phi) = xi for u on the monotone branch between u_a and u_b.

    Vectorized bisection; xi outside the branch's speed range is clamped
    to the nearer endpoint.
    """
    xi = np.asarray(xi, dtype=float)
    a, b = min(u_a, u_b), max(u_a, u_b)
    lo = np.full_like(xi, a)
    hi = np.full_like(xi, b)
    # f_u is monotone on the branch; orient so that g(lo) <= 0 <= g(hi)
    sign = 1.0 if F.flux_f_u(b, phi, M) >= F.flux_f_u(a, phi, M) else -1.0
    while True:
        mid = 0.5 * (lo + hi)
        g = sign * (F.flux_f_u(mid, phi, M) - xi)
        go_right = g < 0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= _BISECT_TOL):
            break
    return 0.5 * (lo + hi)


def evaluate_fan(fan: RiemannFan, x, t):
    """Return (u, phi) arrays of the exact solution at points (x, t), t > 0."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("evaluate_fan needs t > 0")
    d = fan.data
    xi = x / t
    u = np.full(x.shape, fan.u_M)
    for p in fan.pieces:
        if p.is_shock:
            u = np.where(xi > p.speed_left, p.u_right, u)
        else:
            beyond = xi > p.speed_right
            inside = (xi >= p.speed_left) & ~beyond
            u = np.where(beyond, p.u_right, u)
            if np.any(inside):
                u_in = invert_speed(xi[inside], p.u_left, p.u_right, d.phi_R, d.M)
                u = u.copy()
                u[inside] = u_in
    left = x < 0
    u = np.where(left, d.u_L, u)
    phi = np.where(left, d.phi_L, d.phi_R)
    return u, phi


def initial_profile(d: RiemannData, x):
    """Riemann initial data; the jump point x = 0 takes the left state."""
    x = np.asarray(x, dtype=float)
    left = x <= 0
    return np.where(left, d.u_L, d.u_R), np.where(left, d.phi_L, d.phi_R)


def to_nonconservative(u, phi):
    """Saturation u~ = u / phi."""
    return np.asarray(u, dtype=float) / np.asarray(phi, dtype=float)


def to_conservative(u_tilde, phi):
    return np.asarray(u_tilde, dtype=float) * np.asarray(phi, dtype=float)


def total_variation(fan: RiemannFan):
    """Total variation of u across the fan, accumulated piece by piece."""
    tv = abs(fan.standing.u_minus - fan.standing.u_plus)
    for p in fan.pieces:
        tv += abs(p.u_left - p.u_right)
    return tv
