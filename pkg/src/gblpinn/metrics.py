"""Sampled solution fields and the relative L2 error between them."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridMismatch

PROFILE_HEADER = ("x", "t", "u", "phi", "method", "case", "seed")
WENO_HEADER = ("x", "t", "u", "phi")
METRICS_HEADER = ("case", "method", "form", "rescaled", "l2", "seeds")


def eval_points(x_min, x_max, n_x=512, times=(0.75, 1.5, 2.25, 3.0)):
    """Shared space-time evaluation set, t-major then x: array of shape (n, 2)."""
    xs = np.linspace(x_min, x_max, n_x)
    return np.array([(x, t) for t in times for x in xs], dtype=float)


@dataclass
class SolutionField:
    """Samples (x, t, u, phi) of one method on one case.

    ``u`` is in the case's own variables: conserved saturation for the
    conservative form and u / phi for the non-conservative form.
    """

    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    method: str = "exact"
    case: str = ""
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x, self.t, self.u, self.phi = (np.asarray(a, dtype=float).ravel()
                                            for a in (self.x, self.t, self.u, self.phi))
        if not (self.x.size == self.t.size == self.u.size == self.phi.size):
            raise GridMismatch("x, t, u and phi must have equal length")

    @property
    def points(self):
        return np.column_stack([self.x, self.t])

    def at_time(self, t):
        sel = np.isclose(self.t, t)
        return self.x[sel], self.u[sel], self.phi[sel]

    def write_csv(self, path, full=True):
        """Write rows in stored (t-major) order.

        ``full=False`` keeps only the ``x,t,u,phi`` columns.
        """
        header = PROFILE_HEADER if full else WENO_HEADER
        seed = "" if self.seed is None else self.seed
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(self.x, self.t, self.u, self.phi):
                vals = [repr(float(v)) for v in row]
                w.writerow(vals + [self.method, self.case, seed] if full else vals)

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        cols = {k: np.array([float(r[k]) for r in rows]) for k in ("x", "t", "u", "phi")}
        first = rows[0] if rows else {}
        seed = first.get("seed") or None
        return cls(**cols, method=first.get("method", "exact"), case=first.get("case", ""),
                   seed=None if seed is None else int(seed))


def relative_l2(pred: SolutionField, exact: SolutionField) -> float:
    """||pred - exact||_2 / ||exact||_2 over a shared sample set."""
    if pred.x.shape != exact.x.shape or not (
        np.array_equal(pred.x, exact.x) and np.array_equal(pred.t, exact.t)
    ):
        raise GridMismatch("fields are sampled at different points")
    return float(np.linalg.norm(pred.u - exact.u) / np.linalg.norm(exact.u))


@dataclass(frozen=True)
class MetricsRow:
    case: str
    method: str
    form: str
    rescaled: bool
    l2: float
    seeds: int

    def as_row(self):
        return [self.case, self.method, self.form, int(self.rescaled), repr(self.l2), self.seeds]
