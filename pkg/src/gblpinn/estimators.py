"""Estimator-style wrappers: ``fit(case)`` then ``predict(X)`` on (x, t) rows.

All three solvers return the physical conservative state: ``predict``
gives u, ``predict_state`` gives (u, phi).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .validation import check_case, check_is_fitted, check_points, check_positive_time


class _Solver(BaseEstimator):
    def predict(self, X):
        return self.predict_state(X)[0]

    def score(self, X, case=None):
        """Negative relative L2 of u against the exact fan at X."""
        check_is_fitted(self, "case_")
        from .riemann import evaluate_fan, solve_riemann

        X = check_positive_time(X)
        exact, _ = evaluate_fan(solve_riemann(self.case_.riemann_data), X[:, 0], X[:, 1])
        return -float(np.linalg.norm(self.predict(X) - exact) / np.linalg.norm(exact))


class ExactRiemannSolver(_Solver):
    def fit(self, case, y=None):
        from .riemann import solve_riemann

        self.case_ = check_case(case)
        self.fan_ = solve_riemann(self.case_.riemann_data)
        return self

    def predict_state(self, X):
        check_is_fitted(self, "fan_")
        from .riemann import evaluate_fan

        X = check_positive_time(X)
        return evaluate_fan(self.fan_, X[:, 0], X[:, 1])


class Weno5Solver(_Solver):
    def __init__(self, n_cells=None, cfl=0.4, times=None):
        self.n_cells = n_cells
        self.cfl = cfl
        self.times = times

    def fit(self, case, y=None):
        from .weno import solve_weno

        self.case_ = check_case(case)
        self.field_ = solve_weno(self.case_, self.n_cells, self.times, self.cfl)
        return self

    def predict_state(self, X):
        """Linear interpolation in x at the marched output times only."""
        check_is_fitted(self, "field_")
        from .weno import resample

        f = resample(self.field_, check_points(X))
        return f.u, f.phi


class CPINNSolver(_Solver):
    def __init__(self, budget="desk", seed=0, dtype="float32", log_every=1000, run_dir=None,
                 checkpoint_every=None):
        self.budget = budget
        self.seed = seed
        self.dtype = dtype
        self.log_every = log_every
        self.run_dir = run_dir
        self.checkpoint_every = checkpoint_every

    def fit(self, case, y=None):
        from .cpinn import train_one

        case = check_case(case)
        self.case_ = case.with_budget(self.budget) if self.budget is not None else case
        self.model_ = train_one(self.case_, self.seed, dtype=self.dtype,
                                log_every=self.log_every, run_dir=self.run_dir,
                                checkpoint_every=self.checkpoint_every)
        return self

    def predict_state(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(check_points(X))
