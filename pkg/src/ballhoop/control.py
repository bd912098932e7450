"""Trajectory stabilisation: linearisation, Riccati sweeps and the control law."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .trajopt.collocation import Trajectory

DIVERGENCE = 1e12


class RiccatiError(RuntimeError):
    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray = field(default_factory=lambda: np.diag([0.0, 1.0, 200.0, 1.0]))
    R: float = 1e-2

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if not self.R > 0:
            raise ValueError("R must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", float(self.R))

    def scaled(self, alpha: float) -> "LqrWeights":
        return LqrWeights(alpha * self.Q, alpha * self.R)


@dataclass(frozen=True)
class LinearizationPoint:
    A: np.ndarray
    B: np.ndarray
    x_ref: np.ndarray
    u_ref: float


def linearize(dyn, x_ref, u_ref: float) -> LinearizationPoint:
    """Jacobians of ``dyn`` at a reference point (``dyn`` exposes ``jac``)."""
    x_ref = np.asarray(x_ref, dtype=float)
    A, B = dyn.jac(x_ref, u_ref)
    return LinearizationPoint(np.array(A, dtype=float), np.array(B, dtype=float).reshape(-1), x_ref, float(u_ref))


def riccati_rhs(S, A, B, Q, R):
    """``-dS/dt`` of the differential Riccati equation."""
    SB = S @ B
    return S @ A + A.T @ S - np.outer(SB, SB) / R + Q


def _rk4_backward(S, A_fn, B_fn, Q, R, t, h):
    """One step from ``t`` to ``t - h`` in reversed time."""
    def F(tt, SS):
        return riccati_rhs(SS, A_fn(tt), B_fn(tt), Q, R)

    k1 = F(t, S)
    k2 = F(t - 0.5 * h, S + 0.5 * h * k1)
    k3 = F(t - 0.5 * h, S + 0.5 * h * k2)
    k4 = F(t - h, S + h * k3)
    return S + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_riccati(A_fn, B_fn, Q, R, S_f, times, max_step=1e-3, dense=False):
    """Integrate the DRE backward from ``S(times[-1]) = S_f``.

    Returns S at every entry of ``times``; with ``dense`` also the list of
    ``(t, S)`` at every internal step before symmetrisation, for residual
    checks.
    """
    times = np.asarray(times, dtype=float)
    Q = np.atleast_2d(Q)
    S = np.array(np.atleast_2d(S_f), dtype=float)
    out = np.empty((len(times),) + S.shape)
    out[-1] = S
    steps = [(times[-1], S.copy())] if dense else None
    max_asym = 0.0
    for j in range(len(times) - 1, 0, -1):
        dt = times[j] - times[j - 1]
        n_sub = max(1, int(np.ceil(dt / max_step - 1e-9)))
        h = dt / n_sub
        t = times[j]
        for i in range(n_sub):
            S = _rk4_backward(S, A_fn, B_fn, Q, R, t, h)
            t = times[j] - (i + 1) * h
            max_asym = max(max_asym, float(np.max(np.abs(S - S.T))))
            if dense:
                steps.append((t, S.copy()))
            S = 0.5 * (S + S.T)
            if not np.all(np.isfinite(S)) or np.max(np.abs(S)) > DIVERGENCE:
                raise RiccatiError(f"Riccati solution diverged at t={t:.6g}", t)
        out[j - 1] = S
    return (out, steps, max_asym) if dense else out


@dataclass
class GainSchedule:
    times: np.ndarray
    S: np.ndarray
    K: np.ndarray
    meta: dict = field(default_factory=dict)

    def K_at(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.K[:, i]) for i in range(self.K.shape[1])])

    def to_csv(self, path, with_S: bool = False):
        n = self.K.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["t", *(f"K{i + 1}" for i in range(n))]
            if with_S:
                head += [f"S{i + 1}{j + 1}" for i in range(n) for j in range(n)]
            w.writerow(head)
            for t, K, S in zip(self.times, self.K, self.S):
                row = [repr(float(t)), *(repr(float(k)) for k in K)]
                if with_S:
                    row += [repr(float(v)) for v in S.reshape(-1)]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "GainSchedule":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        with open(path) as fh:
            head = fh.readline().strip().split(",")
        nK = sum(1 for h in head if h.startswith("K"))
        K = data[:, 1:1 + nK]
        if data.shape[1] > 1 + nK:
            S = data[:, 1 + nK:].reshape(len(data), nK, nK)
        else:
            S = np.full((len(data), nK, nK), np.nan)
        return cls(data[:, 0], S, K)


def riccati_backward(traj: Trajectory, w: LqrWeights, dyn, max_step: float = 1e-3) -> GainSchedule:
    """Time-varying LQR about ``traj`` with the final condition ``S(T_f) = Q``."""
    h = traj.T_f / max(traj.N - 1, 1)
    step = min(max_step, h / 10.0)

    def A_fn(t):
        return dyn.jac(traj.x_at(t), traj.u_at(t))[0]

    def B_fn(t):
        return np.asarray(dyn.jac(traj.x_at(t), traj.u_at(t))[1]).reshape(-1)

    S = integrate_riccati(A_fn, B_fn, w.Q, w.R, w.Q, traj.times, max_step=step)
    K = np.array([B_fn(t) @ S_k / w.R for t, S_k in zip(traj.times, S)])
    return GainSchedule(traj.times.copy(), S, K, {"step": step})


@dataclass
class StationaryLqr:
    K: np.ndarray
    S: np.ndarray
    A: np.ndarray
    B: np.ndarray
    x_eq: np.ndarray
    # state indices retained in the stability check; cyclic unweighted
    # coordinates (theta) have a structurally zero closed-loop eigenvalue
    active: np.ndarray

    @property
    def A_cl(self) -> np.ndarray:
        return self.A - np.outer(self.B, self.K)

    def closed_loop_eigs(self, full: bool = False) -> np.ndarray:
        A = self.A_cl
        if not full:
            A = A[np.ix_(self.active, self.active)]
        return np.linalg.eigvals(A)

    def spectral_abscissa(self, full: bool = False) -> float:
        return float(np.max(self.closed_loop_eigs(full).real))


def cyclic_unweighted(A, Q) -> np.ndarray:
    """Indices of states that no dynamics depend on and that carry no weight."""
    n = A.shape[0]
    diag = np.diag(A)
    drop = [i for i in range(n)
            if np.all(A[:, i] == 0) and diag[i] == 0 and np.all(Q[i] == 0)]
    return np.array([i for i in range(n) if i not in drop])


def stationary_lqr(x_eq, w: LqrWeights, dyn, step: float = 1e-3, rtol: float = 1e-10,
                   t_max: float = 1e4) -> StationaryLqr:
    """Constant-gain LQR as the steady state of the backward DRE."""
    lin = linearize(dyn, x_eq, 0.0)
    A, B, Q, R = lin.A, lin.B, w.Q, w.R
    S = Q.copy()
    t = 0.0
    while True:
        S_new = _rk4_backward(S, lambda _: A, lambda _: B, Q, R, 0.0, step)
        S_new = 0.5 * (S_new + S_new.T)
        t += step
        if not np.all(np.isfinite(S_new)) or np.max(np.abs(S_new)) > DIVERGENCE:
            raise RiccatiError("stationary Riccati iteration diverged (not stabilizable?)", t)
        change = np.max(np.abs(S_new - S)) / max(np.max(np.abs(S_new)), 1e-300)
        S = S_new
        if change < rtol:
            break
        if t > t_max:
            raise RiccatiError(f"no steady state after {t_max} s of backward integration", t)
    K = B @ S / R
    return StationaryLqr(K, S, A, B, np.asarray(x_eq, float), cyclic_unweighted(A, Q))


def control_law(t: float, x, traj: Trajectory, gains: GainSchedule, u_max: float = np.inf,
                tol: float = 1e-9) -> tuple[float, bool]:
    """``u = u*(t) - K(t) (x - x*(t))`` saturated to ``u_max``.

    Returns the input and whether it saturated.
    """
    if t < -tol or t > traj.T_f + tol:
        raise ValueError(f"t={t} outside the trajectory horizon [0, {traj.T_f}]")
    dx = np.asarray(x, dtype=float)[:traj.states.shape[1]] - traj.x_at(t)
    u = traj.u_at(t) - float(gains.K_at(t) @ dx)
    sat = abs(u) > u_max
    return float(np.clip(u, -u_max, u_max)), bool(sat)
