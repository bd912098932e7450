"""Trapezoidal direct collocation with free final time.

Decision vector layout: ``z = [x_0, ..., x_{N-1}, u_0, ..., u_{N-1}, T_f]``
with the knots equidistant on ``[0, T_f]``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..model import RollCoeffs, f_roll, roll_jacobians


class RollDynamics:
    """Vector field plus Jacobians for a rolling mode."""

    def __init__(self, c: RollCoeffs):
        self.c = c
        self.n = 4

    def f(self, x, u):
        return f_roll(x, u, self.c)

    def jac(self, x, u):
        return roll_jacobians(x, u, self.c)


class LinearDynamics:
    """``x' = A x + B u``; mostly for tests."""

    def __init__(self, A, B):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(-1)
        self.n = self.A.shape[0]

    def f(self, x, u):
        return self.A @ x + self.B * u

    def jac(self, x, u):
        return self.A, self.B


@dataclass(frozen=True)
class StateGuard:
    """Scalar function of the state with gradient, e.g. the lift-off guard."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass
class OcpSpec:
    x_init: np.ndarray
    terminal: Sequence[tuple[int, float]]
    u_max: float = 250.0
    T_max: float = 2.5
    N: int = 80
    path_guard: StateGuard | None = None
    guard_margin: float = 0.5
    # Knots the path guard is imposed on; None means all of them.
    guard_knots: Sequence[int] | None = None
    # Extra terminal condition guard(x_N-1) >= terminal_guard_min.
    terminal_guard: StateGuard | None = None
    terminal_guard_min: float = 0.0
    T_min: float = 1e-2
    T_fixed: float | None = None

    def __post_init__(self):
        self.x_init = np.asarray(self.x_init, dtype=float)
        if self.N < 10:
            raise ValueError("N must be at least 10")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        if not self.T_max > 0:
            raise ValueError("T_max must be positive")
        if self.guard_margin < 0:
            raise ValueError("guard_margin must be non-negative")


@dataclass
class Trajectory:
    T_f: float
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.times)

    def x_at(self, t: float) -> np.ndarray:
        t = min(max(t, 0.0), self.T_f)
        return np.array([np.interp(t, self.times, self.states[:, i]) for i in range(self.states.shape[1])])

    def u_at(self, t: float) -> float:
        return float(np.interp(min(max(t, 0.0), self.T_f), self.times, self.inputs))

    def to_csv(self, path, names=("theta", "theta_dot", "psi", "psi_dot")):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names, "u"])
            for t, x, u in zip(self.times, self.states, self.inputs):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in x), repr(float(u))])
        meta = {"T_f": float(self.T_f), "N": int(self.N), **self.meta}
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=float))

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        times = data[:, 0]
        meta.pop("N", None)
        T_f = float(meta.pop("T_f", times[-1]))
        return cls(T_f, times, data[:, 1:-1], data[:, -1], meta)


class NlpProblem:
    """Transcribed collocation NLP: objective, constraints and their gradients."""

    def __init__(self, spec: OcpSpec, dyn):
        self.spec = spec
        self.dyn = dyn
        self.n = dyn.n
        self.N = spec.N
        self.nz = self.N * self.n + self.N + 1
        self.ix = np.arange(self.N * self.n).reshape(self.N, self.n)
        self.iu = self.N * self.n + np.arange(self.N)
        self.iT = self.nz - 1
        if spec.guard_knots is None:
            self.guard_knots = np.arange(self.N)
        else:
            self.guard_knots = np.asarray(spec.guard_knots, dtype=int)

    # --- packing -----------------------------------------------------------
    def unpack(self, z):
        X = z[: self.N * self.n].reshape(self.N, self.n)
        U = z[self.iu]
        return X, U, z[self.iT]

    def pack(self, X, U, T):
        return np.concatenate([np.asarray(X, float).reshape(-1), np.asarray(U, float), [T]])

    def bounds(self):
        lo = np.full(self.nz, -np.inf)
        hi = np.full(self.nz, np.inf)
        lo[self.iu], hi[self.iu] = -self.spec.u_max, self.spec.u_max
        if self.spec.T_fixed is not None:
            lo[self.iT] = hi[self.iT] = self.spec.T_fixed
        else:
            lo[self.iT], hi[self.iT] = min(self.spec.T_min, self.spec.T_max), self.spec.T_max
        return lo, hi

    # --- objective -----------------------------------------------------------
    def objective(self, z):
        _, U, T = self.unpack(z)
        h = T / (self.N - 1)
        return 0.5 * h * np.sum(U[:-1] ** 2 + U[1:] ** 2)

    def objective_grad(self, z):
        _, U, T = self.unpack(z)
        h = T / (self.N - 1)
        g = np.zeros(self.nz)
        w = np.full(self.N, 2.0)
        w[0] = w[-1] = 1.0
        g[self.iu] = h * w * U
        g[self.iT] = 0.5 * np.sum(U[:-1] ** 2 + U[1:] ** 2) / (self.N - 1)
        return g

    # --- equality constraints ------------------------------------------------
    def _fA(self, X, U):
        F = np.empty_like(X)
        A = np.empty((self.N, self.n, self.n))
        B = np.empty((self.N, self.n))
        for k in range(self.N):
            F[k] = self.dyn.f(X[k], U[k])
            A[k], B[k] = self.dyn.jac(X[k], U[k])
        return F, A, B

    def defects(self, z):
        X, U, T = self.unpack(z)
        h = T / (self.N - 1)
        F = np.array([self.dyn.f(X[k], U[k]) for k in range(self.N)])
        return (X[1:] - X[:-1] - 0.5 * h * (F[:-1] + F[1:])).reshape(-1)

    def eq(self, z):
        X, _, _ = self.unpack(z)
        bc = [X[0] - self.spec.x_init]
        bc.append(np.array([X[-1, i] - v for i, v in self.spec.terminal]))
        return np.concatenate([self.defects(z), *bc])

    def eq_jac(self, z):
        X, U, T = self.unpack(z)
        N, n = self.N, self.n
        h = T / (N - 1)
        F, A, B = self._fA(X, U)
        n_def = (N - 1) * n
        J = np.zeros((n_def + n + len(self.spec.terminal), self.nz))
        eye = np.eye(n)
        for k in range(N - 1):
            rows = slice(k * n, (k + 1) * n)
            J[rows, self.ix[k]] = -eye - 0.5 * h * A[k]
            J[rows, self.ix[k + 1]] = eye - 0.5 * h * A[k + 1]
            J[rows, self.iu[k]] = -0.5 * h * B[k]
            J[rows, self.iu[k + 1]] = -0.5 * h * B[k + 1]
            J[rows, self.iT] = -0.5 * (F[k] + F[k + 1]) / (N - 1)
        r = n_def
        J[r:r + n, self.ix[0]] = eye
        r += n
        for j, (i, _) in enumerate(self.spec.terminal):
            J[r + j, self.ix[N - 1, i]] = 1.0
        return J

    # --- inequality constraints (feasible when >= 0) -------------------------
    def ineq(self, z):
        X, _, _ = self.unpack(z)
        out = []
        if self.spec.path_guard is not None:
            out.append([-self.spec.guard_margin - self.spec.path_guard.value(X[k]) for k in self.guard_knots])
        if self.spec.terminal_guard is not None:
            out.append([self.spec.terminal_guard.value(X[-1]) - self.spec.terminal_guard_min])
        return np.concatenate(out) if out else np.zeros(0)

    def ineq_jac(self, z):
        X, _, _ = self.unpack(z)
        rows = []
        if self.spec.path_guard is not None:
            for k in self.guard_knots:
                row = np.zeros(self.nz)
                row[self.ix[k]] = -self.spec.path_guard.grad(X[k])
                rows.append(row)
        if self.spec.terminal_guard is not None:
            row = np.zeros(self.nz)
            row[self.ix[-1]] = self.spec.terminal_guard.grad(X[-1])
            rows.append(row)
        return np.array(rows) if rows else np.zeros((0, self.nz))

    def violation(self, z) -> float:
        """Max-norm constraint violation, bounds included."""
        v = np.max(np.abs(self.eq(z)), initial=0.0)
        gi = self.ineq(z)
        if gi.size:
            v = max(v, float(np.max(-gi, initial=0.0)))
        lo, hi = self.bounds()
        v = max(v, float(np.max(lo - z, initial=0.0)), float(np.max(z - hi, initial=0.0)))
        return float(v)

    def to_trajectory(self, z, **meta) -> Trajectory:
        X, U, T = self.unpack(z)
        times = np.linspace(0.0, T, self.N)
        return Trajectory(float(T), times, X.copy(), U.copy(), dict(meta))

    def initial_guess(self) -> np.ndarray:
        """Straight line between the boundary conditions, u = 0, T = T_max / 2."""
        xf = self.spec.x_init.copy()
        for i, v in self.spec.terminal:
            xf[i] = v
        s = np.linspace(0.0, 1.0, self.N)[:, None]
        X = (1 - s) * self.spec.x_init + s * xf
        T = self.spec.T_fixed if self.spec.T_fixed is not None else 0.5 * self.spec.T_max
        return self.pack(X, np.zeros(self.N), T)

    def guess_from(self, traj: Trajectory) -> np.ndarray:
        """Resample a trajectory onto this problem's knots."""
        s = np.linspace(0.0, 1.0, self.N)
        s_old = traj.times / traj.T_f
        X = np.column_stack([np.interp(s, s_old, traj.states[:, i]) for i in range(self.n)])
        U = np.interp(s, s_old, traj.inputs)
        return self.pack(X, U, traj.T_f)


def transcribe(spec: OcpSpec, dyn) -> NlpProblem:
    return NlpProblem(spec, dyn)
