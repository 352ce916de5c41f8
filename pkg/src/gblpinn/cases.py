"""Experiment configurations and the registry of benchmark cases."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .flux import DEFAULT_M
from .riemann import RiemannData

CONSERVATIVE = "conservative"
NONCONSERVATIVE = "non-conservative"
FORMS = (CONSERVATIVE, NONCONSERVATIVE)

DESK = "desk"
FULL = "full"


@dataclass(frozen=True)
class RescaleParams:
    """phi = delta1 * phi_bar and u = delta2 * u_bar inside one subdomain."""

    delta1: float = 1.0
    delta2: float = 1.0
    subdomain: str = "SD1"
    enabled: bool = True

    def __post_init__(self):
        if self.delta1 <= 0 or self.delta2 <= 0:
            raise ValueError("rescaling factors must be positive")
        if self.subdomain not in ("SD1", "SD2"):
            raise ValueError(f"unknown subdomain {self.subdomain!r}")


@dataclass(frozen=True)
class Budget:
    epochs: int = 100_000
    n_u1: int = 101
    n_u2: int = 499
    n_f1: int = 3000
    n_f2: int = 12500
    n_i: int = 99
    n_seeds: int = 3


@dataclass(frozen=True)
class EvalGrid:
    n_x: int = 512
    times: tuple = (0.75, 1.5, 2.25, 3.0)


@dataclass(frozen=True)
class CaseConfig:
    """One experiment.

    ``u_L`` / ``u_R`` are given in the variables of ``form``: conserved
    saturation u for the conservative form, u~ = u / phi otherwise.
    """

    name: str
    form: str
    u_L: float
    phi_L: float
    u_R: float
    phi_R: float
    M: float = DEFAULT_M
    x_min: float = -1.0
    x_max: float = 10.0
    t_max: float = 3.0
    x_interface: float = 0.01
    rescale: RescaleParams | None = None
    budget: Budget = field(default_factory=Budget)
    eval_grid: EvalGrid = field(default_factory=EvalGrid)
    seeds: tuple = (0, 1, 2)
    weights: tuple = (1.0, 1.0, 1.0)
    hidden: tuple = ((40, 8), (40, 10))
    weno_cells: int | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if not self.x_min < self.x_interface < self.x_max:
            raise ValueError("interface must lie inside the domain")
        self.riemann_data  # validates the initial data

    @property
    def conservative(self):
        return self.form == CONSERVATIVE

    @property
    def riemann_data(self) -> RiemannData:
        if self.conservative:
            return RiemannData(self.u_L, self.phi_L, self.u_R, self.phi_R, self.M)
        return RiemannData(self.u_L * self.phi_L, self.phi_L,
                           self.u_R * self.phi_R, self.phi_R, self.M)

    @property
    def rescaled(self):
        return self.rescale is not None and self.rescale.enabled

    def with_budget(self, budget: str | Budget):
        """Copy with a named ('desk'/'full') or explicit training budget."""
        if isinstance(budget, Budget):
            return dataclasses.replace(self, budget=budget)
        full = full_budget(self)
        if budget == FULL:
            return dataclasses.replace(self, budget=full, seeds=tuple(range(full.n_seeds)))
        if budget == DESK:
            b = desk_budget(full)
            return dataclasses.replace(self, budget=b, seeds=self.seeds[:1])
        raise ValueError(f"unknown budget {budget!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if doc.get("rescale") is not None:
            doc["rescale"] = RescaleParams(**doc["rescale"])
        if "budget" in doc:
            doc["budget"] = Budget(**doc["budget"])
        if "eval_grid" in doc:
            eg = dict(doc["eval_grid"])
            eg["times"] = tuple(eg.get("times", EvalGrid.times))
            doc["eval_grid"] = EvalGrid(**eg)
        for key in ("seeds", "weights"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "hidden" in doc:
            doc["hidden"] = tuple(tuple(h) for h in doc["hidden"])
        return cls(**doc)


def full_budget(case: CaseConfig) -> Budget:
    n_f2 = 12500 if case.x_max <= 10.0 else 17500
    return Budget(epochs=100_000, n_f2=n_f2)


def desk_budget(full: Budget) -> Budget:
    return dataclasses.replace(full, epochs=20_000, n_f1=full.n_f1 // 4,
                               n_f2=full.n_f2 // 4, n_seeds=1)


# (name, conservative data, non-conservative data, x_max, conservative rescale, nc rescale)
_CASES = [
    ("1", (0.6, 0.7, 0.3, 0.6), (6 / 7, 0.7, 0.5, 0.6), 10.0, None, None),
    ("2", (0.45, 0.8, 0.3, 0.6), (0.5625, 0.8, 0.5, 0.6), 10.0, None, None),
    ("3a", (2e-4, 0.1, 0.35, 0.5), (2e-3, 0.1, 0.7, 0.5), 10.0, None, None),
    ("3b", (2e-4, 0.1, 0.35, 0.5), (2e-3, 0.1, 0.7, 0.5), 10.0,
     RescaleParams(1e-2, 1e-4, "SD1"), RescaleParams(1e-2, 1e-3, "SD1")),
    ("4a", (0.6, 0.7, 4e-4, 0.2), (6 / 7, 0.7, 2e-3, 0.2), 25.0, None, None),
    ("4b", (0.6, 0.7, 4e-4, 0.2), (6 / 7, 0.7, 2e-3, 0.2), 25.0,
     RescaleParams(1.0, 0.8, "SD2"), RescaleParams(1.0, 0.8, "SD2")),
    ("5a", (0.49, 0.7, 4e-4, 0.2), (0.7, 0.7, 2e-3, 0.2), 25.0, None, None),
    ("5b", (0.49, 0.7, 4e-4, 0.2), (0.7, 0.7, 2e-3, 0.2), 25.0,
     RescaleParams(1.0, 0.8, "SD2"), RescaleParams(1.0, 0.4, "SD2")),
]

# relative L2 reported for each case: (cPINN conservative, cPINN non-conservative, WENO5)
REFERENCE_L2 = {
    "1": (8.96e-3, 6.05e-3, 1.85e-3),
    "2": (1.11e-2, 8.82e-3, 2.9e-3),
    "3a": (3.33e-1, 1.54e-2, 6.93e-3),
    "3b": (1.73e-2, 2.21e-2, 6.93e-3),
    "4a": (7.2e-2, 6.09e-2, 1.61e-1),
    "4b": (8.82e-2, 5.99e-2, 2.53e-1),
    "5a": (7.87e-2, 8.94e-2, 2.25e-1),
    "5b": (7.91e-2, 6.57e-2, 3.16e-1),
}


def _build():
    out = []
    for name, cons, nc, x_max, r_c, r_nc in _CASES:
        for form, data, rescale in ((CONSERVATIVE, cons, r_c), (NONCONSERVATIVE, nc, r_nc)):
            suffix = "" if form == CONSERVATIVE else "-nc"
            case = CaseConfig(f"case{name}{suffix}", form, *data, x_max=x_max, rescale=rescale)
            out.append(dataclasses.replace(case, budget=full_budget(case)))
    return tuple(out)


_REGISTRY = _build()


def case_registry():
    """All benchmark cases: eight cases, each in conservative and non-conservative form."""
    return list(_REGISTRY)


def get_case(name) -> CaseConfig:
    for c in _REGISTRY:
        if c.name == name or c.name == f"case{name}":
            return c
    raise KeyError(f"unknown case {name!r}; try one of {[c.name for c in _REGISTRY]}")


def reference_l2(case: CaseConfig, method="cpinn"):
    key = case.name.removeprefix("case").removesuffix("-nc")
    cons, nc, weno = REFERENCE_L2[key]
    if method == "weno5":
        return weno
    return cons if case.conservative else nc


def registry_checksum():
    """Digest over the numeric fields of every registry case."""
    rows = []
    for c in _REGISTRY:
        r = c.rescale
        rows.append([c.name, c.form, c.u_L, c.phi_L, c.u_R, c.phi_R, c.M,
                     c.x_min, c.x_max, c.t_max, c.x_interface,
                     None if r is None else [r.delta1, r.delta2, r.subdomain]])
    return hashlib.sha256(json.dumps(rows).encode()).hexdigest()
