"""Two-subdomain conservative PINN for the GBL Riemann problem.

Subdomain SD1 = [x_min, x_I] learns the 2x2 system (u, phi) and carries the
standing wave; SD2 = [x_I, x_max] learns the scalar problem with phi fixed
at phi_R, using an Oleinik-type modified flux whose shock/rarefaction
pieces come from the exact Riemann fan. The two nets are coupled through
flux-continuity and average-matching penalties at x = x_I.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.stats import qmc

from . import flux as F
from .cases import CaseConfig
from .exceptions import ContextMismatch, DivergenceDetected
from .metrics import SolutionField, eval_points, relative_l2
from .nn import AdamState, DenseNet, adam_step, grad_params, save_checkpoint, Tape
from .riemann import RiemannFan, evaluate_fan, initial_profile, solve_riemann

logger = logging.getLogger(__name__)

TRAIN_LOG_HEADER = ("epoch", "loss_sd1", "loss_sd2", "l2_vs_exact", "lr")

# rows of the modified-flux table
COMPOSITE_DOWN = 1  # u_M > u_R and u_M > u*
SHOCK_DOWN = 2      # u_M > u_R and u_M < u*
COMPOSITE_UP = 3    # u_M < u_R and u_M < u*
SHOCK_UP = 4        # u_M < u_R and u_M > u*


def entropy_branch(u_M, u_R, u_star):
    """Row of the modified-flux table selected by the orderings alone."""
    if u_M == u_R or u_M == u_star:
        raise ContextMismatch("branch undefined when u_M ties u_R or u*")
    if u_M > u_R:
        return COMPOSITE_DOWN if u_M > u_star else SHOCK_DOWN
    return COMPOSITE_UP if u_M < u_star else SHOCK_UP


@dataclass(frozen=True)
class EntropyContext:
    """Everything the SD2 residual needs from the exact Riemann fan.

    ``s`` is the Rankine-Hugoniot speed of the shock in the 1-wave. For a
    rarefaction-shock wave it is the contact-shock speed between u* and u_R.
    ``composite`` records whether the f~1 rows contain a shock part at all
    (False for a pure rarefaction).
    """

    u_M: float
    u_R: float
    u_star: float
    s: float
    branch: int
    phi_R: float
    M: float = F.DEFAULT_M
    delta1: float = 1.0
    delta2: float = 1.0
    composite: bool = True

    @property
    def shock_only(self):
        return self.branch in (SHOCK_DOWN, SHOCK_UP)

    def is_shock(self, u):
        """Pointwise shock/rarefaction selector on physical states u."""
        if self.shock_only:
            return u == u if torch.is_tensor(u) else np.ones(np.shape(u), dtype=bool)
        if not self.composite:
            return u != u if torch.is_tensor(u) else np.zeros(np.shape(u), dtype=bool)
        # the shock part of f~1 spans the states between u* and u_R
        return (u - self.u_star) * (self.u_R - self.u_star) > 0


def entropy_context(fan: RiemannFan, delta1=1.0, delta2=1.0) -> EntropyContext:
    d = fan.data
    if not fan.pieces:
        raise ContextMismatch("no 1-wave: u_M equals u_R")
    branch = entropy_branch(fan.u_M, d.u_R, fan.u_star)
    kinds = [p.kind for p in fan.pieces]
    single_shock = kinds == ["Shock"]
    if (branch in (SHOCK_DOWN, SHOCK_UP)) != single_shock:
        raise ContextMismatch(f"table row {branch} disagrees with fan pieces {kinds}")
    s = fan.shock_speed
    composite = s is not None
    if s is None:
        s = (F.flux_f(fan.u_M, d.phi_R, d.M) - F.flux_f(d.u_R, d.phi_R, d.M)) / (fan.u_M - d.u_R)
    return EntropyContext(fan.u_M, d.u_R, fan.u_star, s, branch, d.phi_R, d.M,
                          delta1, delta2, composite)


def _where(mask, a, b):
    return torch.where(mask, a, b) if torch.is_tensor(mask) else np.where(mask, a, b)


def entropy_flux(u, ctx: EntropyContext):
    """Modified flux f~ evaluated at u (SD2 network variable).

    Without rescaling u is the conserved saturation. With rescaling u is
    u_bar = u / delta2 and the shock speed becomes s / delta2.
    """
    d1, d2 = ctx.delta1, ctx.delta2
    u_phys = d2 * u
    shock = ctx.is_shock(u_phys)
    phi_bar = ctx.phi_R / d1
    rare = F.f_raw(u, d1 / d2 * phi_bar, ctx.M) / d2
    return _where(shock, ctx.s / d2 * u, rare)


def entropy_slope(u, ctx: EntropyContext):
    """d f~/du at the SD2 network variable u."""
    d2 = ctx.delta2
    u_phys = d2 * u
    shock = ctx.is_shock(u_phys)
    rare = F.f_u_raw(u_phys, ctx.phi_R, ctx.M)
    s = ctx.s / d2
    return _where(shock, s + 0.0 * u, rare)


# --------------------------------------------------------------------------
# sampling

@dataclass
class SampleSet:
    X_u1: np.ndarray  # training points of SD1, (n, 2)
    Y_u1: np.ndarray  # physical targets (w, phi) in the case's variables
    X_u2: np.ndarray
    Y_u2: np.ndarray  # physical targets (w,)
    X_f1: np.ndarray
    X_f2: np.ndarray
    X_i: np.ndarray


def latin_hypercube(n, bounds, rng):
    """n points, one per stratum along every axis of the box ``bounds``."""
    bounds = np.asarray(bounds, dtype=float)
    unit = qmc.LatinHypercube(d=len(bounds), seed=rng).random(n)
    return qmc.scale(unit, bounds[:, 0], bounds[:, 1])


def _form_targets(case: CaseConfig, x):
    u, phi = initial_profile(case.riemann_data, x)
    w = u if case.conservative else u / phi
    return w, phi


def sample_points(case: CaseConfig, rng) -> SampleSet:
    """Training, interior (Latin hypercube) and interface points.

    SD1 training points split between the initial line and the inflow
    boundary x = x_min (half each, initial side gets the odd point); SD2
    training points lie on the initial line. Interface points share one set
    of times.
    """
    rng = np.random.default_rng(rng)
    b = case.budget
    x0, xi, x1, T = case.x_min, case.x_interface, case.x_max, case.t_max

    n_init = b.n_u1 - b.n_u1 // 2
    n_bnd = b.n_u1 // 2
    X_init = np.column_stack([rng.uniform(x0, xi, n_init), np.zeros(n_init)])
    X_bnd = np.column_stack([np.full(n_bnd, x0), rng.uniform(0.0, T, n_bnd)])
    X_u1 = np.vstack([X_init, X_bnd])
    w1, p1 = _form_targets(case, X_u1[:, 0])

    X_u2 = np.column_stack([rng.uniform(xi, x1, b.n_u2), np.zeros(b.n_u2)])
    w2, _ = _form_targets(case, X_u2[:, 0])

    X_f1 = latin_hypercube(b.n_f1, [(x0, xi), (0.0, T)], rng)
    X_f2 = latin_hypercube(b.n_f2, [(xi, x1), (0.0, T)], rng)
    X_i = np.column_stack([np.full(b.n_i, xi), rng.uniform(0.0, T, b.n_i)])
    return SampleSet(X_u1, np.column_stack([w1, p1]), X_u2, w2[:, None], X_f1, X_f2, X_i)


# --------------------------------------------------------------------------
# network variables

@dataclass(frozen=True)
class Scaling:
    """Factors from network outputs to the case's physical variables."""

    w1: float = 1.0    # SD1 saturation (u or u~)
    phi1: float = 1.0  # SD1 porosity
    w2: float = 1.0    # SD2 saturation

    @classmethod
    def for_case(cls, case: CaseConfig):
        r = case.rescale
        if not case.rescaled:
            return cls()
        if r.subdomain == "SD1":
            return cls(w1=r.delta2, phi1=r.delta1)
        return cls(w2=r.delta2)


def output_scales(case: CaseConfig, fan: RiemannFan, scaling: Scaling, headroom=1.25):
    """Sigmoid output ranges [0, scale] for the SD1 (w, phi) and SD2 (w,) heads.

    The default range is the unit interval. It is widened, with some
    headroom, only where a state the subdomain must represent exceeds 1 in
    its network variables (rescaled cases). Narrowing it below 1 would act
    as an implicit rescaling.
    """
    d = fan.data
    conv = (lambda u, phi: u) if case.conservative else (lambda u, phi: u / phi)
    sd1_w = [conv(d.u_L, d.phi_L), conv(fan.u_M, d.phi_R)]
    sd2_w = [conv(fan.u_M, d.phi_R), conv(d.u_R, d.phi_R)]
    if fan.u_star is not None and fan.pieces and len(fan.pieces) > 1:
        sd2_w.append(conv(fan.u_star, d.phi_R))
    def fit(top):
        return max(1.0, headroom * top)

    sd1 = [fit(max(sd1_w) / scaling.w1), fit(max(d.phi_L, d.phi_R) / scaling.phi1)]
    sd2 = [fit(max(sd2_w) / scaling.w2)]
    return sd1, sd2


def build_nets(case: CaseConfig, fan: RiemannFan, rng, dtype="float32"):
    rng = np.random.default_rng(rng)
    scaling = Scaling.for_case(case)
    s1, s2 = output_scales(case, fan, scaling)
    (w_1, depth_1), (w_2, depth_2) = case.hidden
    T = case.t_max
    net1 = DenseNet([2] + [w_1] * depth_1 + [2], rng=rng, output_scale=s1, dtype=dtype,
                    input_bounds=[(case.x_min, case.x_interface), (0.0, T)])
    net2 = DenseNet([2] + [w_2] * depth_2 + [1], rng=rng, output_scale=s2, dtype=dtype,
                    input_bounds=[(case.x_interface, case.x_max), (0.0, T)])
    return net1, net2


# --------------------------------------------------------------------------
# residuals and losses

def _mse(r):
    return torch.mean(r * r)


def _floor_phi(phi):
    # keep D(u, phi) > 0: the flux is undefined only at u = phi = 0
    tiny = 16.0 * torch.finfo(phi.dtype).eps if torch.is_tensor(phi) else 16.0 * np.finfo(float).eps
    return phi.clamp_min(tiny) if torch.is_tensor(phi) else np.maximum(phi, tiny)


def sd1_residuals(case: CaseConfig, net1: DenseNet, X, scaling: Scaling):
    """(phi residual, saturation residual) of SD1 at interior points X."""
    out, J = net1.forward_with_jacobian(X)
    v, p = out[:, 0], out[:, 1]
    v_x, p_x = J[0][:, 0], J[0][:, 1]
    v_t, p_t = J[1][:, 0], J[1][:, 1]
    cw, cp = scaling.w1, scaling.phi1
    w, phi = cw * v, _floor_phi(cp * p)
    M = case.M
    if case.conservative:
        # cw*v_t + d/dx f(cw v, cp p); with rescaling this is delta2 u_bar_t + f_bar_x
        r_u = cw * v_t + F.f_u_raw(w, phi, M) * cw * v_x + F.f_phi_raw(w, phi, M) * cp * p_x
    else:
        r_u = phi * cw * v_t + F.f_u_raw(w, 1.0, M) * cw * v_x
    return p_t, r_u


def sd2_residual(case: CaseConfig, net2: DenseNet, X, scaling: Scaling, ctx: EntropyContext):
    out, J = net2.forward_with_jacobian(X)
    v = out[:, 0]
    v_x, v_t = J[0][:, 0], J[1][:, 0]
    phi_R = ctx.phi_R
    to_u = scaling.w2 * (1.0 if case.conservative else phi_R)
    a = entropy_slope(to_u * v / ctx.delta2, ctx)
    if case.conservative:
        return v_t + a * v_x
    # phi_R u~_t + f~(phi_R u~)_x, or delta1 delta2 phi_bar u_bar_t + ... when rescaled
    time_coef = phi_R * scaling.w2
    return time_coef * (v_t + a * v_x)


def interface_terms(w1, phi1, w2, phi_R, M=F.DEFAULT_M, conservative=True):
    """(MSE_flux, MSE_avg on the SD1 side, MSE_avg on the SD2 side).

    Inputs are physical interface traces in the case's variables; the
    average {{v}} = (v_SD1 + v_SD2) / 2.
    """
    if conservative:
        f1, f2 = F.f_raw(w1, _floor_phi(phi1), M), F.f_raw(w2, phi_R, M)
    else:
        f1, f2 = F.f_raw(w1, 1.0, M), F.f_raw(w2, 1.0, M)
    mse = _mse if torch.is_tensor(w1) else (lambda r: float(np.mean(np.square(r))))
    avg_w = 0.5 * (w1 + w2)
    avg_phi = 0.5 * (phi1 + phi_R)
    mse_flux = mse(f1 - f2)
    avg1 = mse(w1 - avg_w) + mse(phi1 - avg_phi)
    avg2 = mse(w2 - avg_w) + mse(phi_R - avg_phi + 0.0 * w2)
    return mse_flux, avg1, avg2


@dataclass
class LossParts:
    mse_u: torch.Tensor
    mse_f: torch.Tensor
    mse_flux: torch.Tensor
    mse_avg: torch.Tensor
    total: torch.Tensor

    def values(self):
        return {k: float(getattr(self, k).detach()) for k in
                ("mse_u", "mse_f", "mse_flux", "mse_avg", "total")}


class Problem:
    """Tensors and constants shared by every loss evaluation of one run."""

    def __init__(self, case: CaseConfig, samples: SampleSet, fan: RiemannFan, dtype):
        self.case = case
        self.fan = fan
        self.scaling = Scaling.for_case(case)
        r = case.rescale if case.rescaled and case.rescale.subdomain == "SD2" else None
        self.ctx = entropy_context(fan, *((r.delta1, r.delta2) if r else (1.0, 1.0)))
        t = lambda a: torch.as_tensor(a, dtype=dtype)  # noqa: E731
        sc = self.scaling
        self.X_u1, self.X_u2 = t(samples.X_u1), t(samples.X_u2)
        self.X_f1, self.X_f2, self.X_i = t(samples.X_f1), t(samples.X_f2), t(samples.X_i)
        self.Y_u1 = t(samples.Y_u1 / np.array([sc.w1, sc.phi1]))
        self.Y_u2 = t(samples.Y_u2 / sc.w2)
        self.samples = samples


def interface_traces(problem: Problem, net1, net2):
    sc = problem.scaling
    o1 = net1(problem.X_i)
    o2 = net2(problem.X_i)
    return sc.w1 * o1[:, 0], sc.phi1 * o1[:, 1], sc.w2 * o2[:, 0]


def loss_sd1(problem: Problem, net1, net2, detach_other=True) -> LossParts:
    case = problem.case
    wu, wf, wi = case.weights
    out = net1(problem.X_u1)
    mse_u = _mse(out[:, 0] - problem.Y_u1[:, 0]) + _mse(out[:, 1] - problem.Y_u1[:, 1])
    r_phi, r_u = sd1_residuals(case, net1, problem.X_f1, problem.scaling)
    mse_f = _mse(r_phi) + _mse(r_u)
    w1, phi1, w2 = interface_traces(problem, net1, net2)
    if detach_other:
        w2 = w2.detach()
    mse_flux, avg1, _ = interface_terms(w1, phi1, w2, case.phi_R, case.M, case.conservative)
    total = wu * mse_u + wf * mse_f + wi * (mse_flux + avg1)
    return LossParts(mse_u, mse_f, mse_flux, avg1, total)


def loss_sd2(problem: Problem, net1, net2, detach_other=True) -> LossParts:
    case = problem.case
    wu, wf, wi = case.weights
    out = net2(problem.X_u2)
    mse_u = _mse(out[:, 0] - problem.Y_u2[:, 0])
    mse_f = _mse(sd2_residual(case, net2, problem.X_f2, problem.scaling, problem.ctx))
    w1, phi1, w2 = interface_traces(problem, net1, net2)
    if detach_other:
        w1, phi1 = w1.detach(), phi1.detach()
    mse_flux, _, avg2 = interface_terms(w1, phi1, w2, case.phi_R, case.M, case.conservative)
    total = wu * mse_u + wf * mse_f + wi * (mse_flux + avg2)
    return LossParts(mse_u, mse_f, mse_flux, avg2, total)


# --------------------------------------------------------------------------
# trained model

@dataclass
class CPINNModel:
    case: CaseConfig
    net1: DenseNet
    net2: DenseNet
    fan: RiemannFan
    seed: int | None = None
    history: list = field(default_factory=list)
    adam: AdamState | None = None
    rng: np.random.Generator | None = None

    @property
    def scaling(self):
        return Scaling.for_case(self.case)

    def save(self, path, extra=None):
        save_checkpoint(path, [self.net1, self.net2], self.adam or AdamState(),
                        len(self.history), self.rng or np.random.default_rng(self.seed),
                        extra={"case": self.case.to_dict(), "seed": self.seed, **(extra or {})})

    def predict_form(self, X):
        """(w, phi) in the case's variables: u (conservative) or u~ (otherwise)."""
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        sc = self.scaling
        left = X[:, 0] <= self.case.x_interface
        w = np.empty(len(X))
        phi = np.full(len(X), self.case.phi_R)
        with torch.no_grad():
            if left.any():
                o1 = self.net1(X[left]).numpy().astype(float)
                w[left] = sc.w1 * o1[:, 0]
                phi[left] = sc.phi1 * o1[:, 1]
            if (~left).any():
                o2 = self.net2(X[~left]).numpy().astype(float)
                w[~left] = sc.w2 * o2[:, 0]
        return w, phi

    def predict(self, X):
        """Physical conservative state (u, phi) at each row (x, t) of X."""
        w, phi = self.predict_form(X)
        u = w if self.case.conservative else phi * w
        return u, phi

    def solution_field(self, points=None):
        if points is None:
            points = case_eval_points(self.case)
        w, phi = self.predict_form(points)
        return SolutionField(points[:, 0], points[:, 1], w, phi, method="cpinn",
                             case=self.case.name, seed=self.seed)

    def relative_l2(self, points=None):
        if points is None:
            points = case_eval_points(self.case)
        return relative_l2(self.solution_field(points), exact_field(self.case, self.fan, points))


def case_eval_points(case: CaseConfig):
    g = case.eval_grid
    return eval_points(case.x_min, case.x_max, g.n_x, g.times)


def exact_field(case: CaseConfig, fan: RiemannFan | None = None, points=None) -> SolutionField:
    if fan is None:
        fan = solve_riemann(case.riemann_data)
    if points is None:
        points = case_eval_points(case)
    u, phi = evaluate_fan(fan, points[:, 0], points[:, 1])
    w = u if case.conservative else u / phi
    return SolutionField(points[:, 0], points[:, 1], w, phi, method="exact", case=case.name)


# --------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    models: list
    l2: list

    @property
    def mean_l2(self):
        return float(np.mean(self.l2))


def train_one(case: CaseConfig, seed=0, dtype="float32", log_every=500, run_dir=None,
              checkpoint_every=None, epochs=None, callback=None) -> CPINNModel:
    """Train both subdomain nets on one seed with joint Adam steps."""
    torch.set_num_threads(1)
    rng = np.random.default_rng(seed)
    fan = solve_riemann(case.riemann_data)
    samples = sample_points(case, rng)
    net1, net2 = build_nets(case, fan, rng, dtype=dtype)
    problem = Problem(case, samples, fan, net1.dtype)
    params = net1.params + net2.params
    adam = AdamState()
    total = case.budget.epochs if epochs is None else epochs
    model = CPINNModel(case, net1, net2, fan, seed, adam=adam, rng=rng)
    eval_pts = case_eval_points(case)
    exact = exact_field(case, fan, eval_pts)

    log_fh = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        log_fh = open(os.path.join(run_dir, f"train_{case.name}_seed{seed}.csv"), "w", newline="")
        log_writer = csv.writer(log_fh)
        log_writer.writerow(TRAIN_LOG_HEADER)
    t0 = time.time()
    try:
        for epoch in range(total):
            l1 = loss_sd1(problem, net1, net2)
            l2 = loss_sd2(problem, net1, net2)
            tape = Tape(l1.total + l2.total, params)
            v1, v2 = float(l1.total.detach()), float(l2.total.detach())
            if not (math.isfinite(v1) and math.isfinite(v2)):
                if run_dir is not None:
                    save_checkpoint(os.path.join(run_dir, f"diverged_{case.name}_seed{seed}.npz"),
                                    [net1, net2], adam, epoch, rng)
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}: {v1}, {v2}")
            grads = grad_params(tape)
            lr = adam_step(adam, params, grads, epoch, total)
            model.history.append((v1, v2))
            last = epoch == total - 1
            if log_every and (epoch % log_every == 0 or last):
                err = relative_l2(model.solution_field(eval_pts), exact)
                logger.info("%s seed %d epoch %d loss %.3e %.3e L2 %.3e (%.0fs)",
                            case.name, seed, epoch, v1, v2, err, time.time() - t0)
                if log_fh is not None:
                    log_writer.writerow([epoch, repr(v1), repr(v2), repr(err), repr(lr)])
                if callback is not None:
                    callback(epoch, v1, v2, err)
            if run_dir is not None and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                save_checkpoint(os.path.join(run_dir, f"ckpt_{case.name}_seed{seed}.npz"),
                                [net1, net2], adam, epoch + 1, rng)
    finally:
        if log_fh is not None:
            log_fh.close()
    return model


def train(case: CaseConfig, seeds=None, **kw) -> TrainResult:
    """Train one model per seed; the headline number is the seed-averaged L2."""
    seeds = case.seeds if seeds is None else seeds
    models, errs = [], []
    for seed in seeds:
        m = train_one(case, seed, **kw)
        models.append(m)
        errs.append(m.relative_l2())
    return TrainResult(models, errs)
