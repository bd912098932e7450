"""NLP backends for the collocation problems.

Two backends behind :func:`solve`: scipy's SLSQP (default) and an
augmented-Lagrangian loop with an L-BFGS-B inner solve.  Both see the
problem in scaled variables; a Gauss-Newton feasibility polish is applied to
the returned iterate.
"""
from __future__ import annotations

import logging
import time
import warnings

import numpy as np
from scipy import optimize

from .collocation import NlpProblem, Trajectory

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6


class SolveError(RuntimeError):
    """No feasible point found; ``best`` holds the best iterate."""

    def __init__(self, msg, best: Trajectory | None = None, violation: float = np.inf):
        super().__init__(msg)
        self.best = best
        self.violation = violation


class _Scaled:
    """Wraps an :class:`NlpProblem` in the variables ``y = z / d``."""

    def __init__(self, nlp: NlpProblem, z0):
        self.nlp = nlp
        d = np.ones(nlp.nz)
        X0, _, _ = nlp.unpack(z0)
        xs = np.maximum(1.0, np.max(np.abs(X0), axis=0))
        for i, v in nlp.spec.terminal:
            xs[i] = max(xs[i], abs(v))
        d[: nlp.N * nlp.n] = np.tile(xs, nlp.N)
        d[nlp.iu] = nlp.spec.u_max
        d[nlp.iT] = nlp.spec.T_max
        self.d = d
        self.eq_scale = np.concatenate([np.tile(xs, nlp.N - 1), xs, [xs[i] for i, _ in nlp.spec.terminal]])
        self.f_scale = max(nlp.spec.u_max**2 * nlp.spec.T_max * 1e-2, 1e-12)

    def f(self, y):
        return self.nlp.objective(y * self.d) / self.f_scale

    def df(self, y):
        return self.nlp.objective_grad(y * self.d) * self.d / self.f_scale

    def c(self, y):
        return self.nlp.eq(y * self.d) / self.eq_scale

    def dc(self, y):
        return self.nlp.eq_jac(y * self.d) * self.d / self.eq_scale[:, None]

    def g(self, y):
        return self.nlp.ineq(y * self.d)

    def dg(self, y):
        return self.nlp.ineq_jac(y * self.d) * self.d

    def bounds(self):
        lo, hi = self.nlp.bounds()
        return lo / self.d, hi / self.d


def _slsqp(sp: _Scaled, y0, maxiter):
    cons = [{"type": "eq", "fun": sp.c, "jac": sp.dc}]
    if sp.nlp.ineq(y0 * sp.d).size:
        cons.append({"type": "ineq", "fun": sp.g, "jac": sp.dg})
    lo, hi = sp.bounds()
    with warnings.catch_warnings():
        # the line search may step past a bound; scipy clips and says so
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = optimize.minimize(sp.f, y0, jac=sp.df, method="SLSQP", constraints=cons,
                                bounds=optimize.Bounds(lo, hi),
                                options={"maxiter": maxiter, "ftol": 1e-10})
    return res.x, res.nit, str(res.message)


def _auglag(sp: _Scaled, y0, maxiter):
    lo, hi = sp.bounds()
    lam = np.zeros(sp.c(y0).size)
    nu = np.zeros(sp.g(y0).size)
    mu = 10.0
    y = np.clip(y0, lo, hi)
    best_v = np.inf
    nit = 0
    for outer in range(40):
        def L(yy):
            c, g = sp.c(yy), sp.g(yy)
            shifted = np.maximum(0.0, nu - mu * g)
            val = sp.f(yy) + lam @ c + 0.5 * mu * c @ c + (shifted @ shifted - nu @ nu) / (2 * mu)
            grad = sp.df(yy) + sp.dc(yy).T @ (lam + mu * c)
            if g.size:
                grad = grad - sp.dg(yy).T @ shifted
            return val, grad

        res = optimize.minimize(L, y, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                                options={"maxiter": maxiter, "maxcor": 30, "ftol": 1e-15, "gtol": 1e-10})
        y = res.x
        nit += res.nit
        c, g = sp.c(y), sp.g(y)
        v = max(np.max(np.abs(c), initial=0.0), np.max(-g, initial=0.0))
        lam = lam + mu * c
        nu = np.maximum(0.0, nu - mu * g)
        if v < 1e-9:
            break
        if v > 0.25 * best_v:
            mu *= 10.0
        best_v = min(best_v, v)
    return y, nit, f"augmented Lagrangian, {outer + 1} outer iterations"


BACKENDS = {"slsqp": _slsqp, "auglag": _auglag}


def polish(nlp: NlpProblem, z, iters: int = 5):
    """Gauss-Newton projection onto the equality constraints, bounds kept.

    Only moves the iterate if it reduces the violation.
    """
    lo, hi = nlp.bounds()
    best, best_v = z, nlp.violation(z)
    for _ in range(iters):
        c = nlp.eq(z)
        J = nlp.eq_jac(z)
        free = (z > lo + 1e-12) & (z < hi - 1e-12)
        dz = np.zeros_like(z)
        dz[free] = -np.linalg.lstsq(J[:, free], c, rcond=None)[0]
        z = np.clip(z + dz, lo, hi)
        v = nlp.violation(z)
        if v < best_v:
            best, best_v = z, v
        if v < 1e-12:
            break
    return best


def solve(nlp: NlpProblem, init: Trajectory | np.ndarray | None = None, backend: str = "slsqp",
          maxiter: int = 500, tol: float = FEAS_TOL) -> Trajectory:
    """Solve the collocation NLP; raise :class:`SolveError` if infeasible."""
    if init is None:
        z0 = nlp.initial_guess()
    elif isinstance(init, Trajectory):
        z0 = nlp.guess_from(init)
    else:
        z0 = np.asarray(init, dtype=float)
    if z0.shape != (nlp.nz,):
        raise ValueError(f"initial guess has shape {z0.shape}, expected ({nlp.nz},)")
    sp = _Scaled(nlp, z0)
    t0 = time.perf_counter()
    y, nit, msg = BACKENDS[backend](sp, z0 / sp.d, maxiter)
    z = polish(nlp, y * sp.d)
    v = nlp.violation(z)
    X, U, _ = nlp.unpack(z)
    meta = {
        "objective": float(nlp.objective(z)),
        "violation": v,
        "max_defect": float(np.max(np.abs(nlp.defects(z)), initial=0.0)),
        "iterations": int(nit),
        "backend": backend,
        "message": msg,
        "u_max": nlp.spec.u_max,
        "T_max": nlp.spec.T_max,
        "tol": tol,
        "solve_time": time.perf_counter() - t0,
    }
    traj = nlp.to_trajectory(z, **meta)
    log.info("solve %s: J=%.6g viol=%.2e iters=%d (%s)", backend, meta["objective"], v, nit, msg)
    if not np.isfinite(v) or v > tol:
        raise SolveError(f"no feasible solution (violation {v:.3e}): {msg}", traj, v)
    return traj
