"""Discrete EKF on the rolling model with a delayed angle measurement.

Only ``psi`` is measured.  At control step ``k`` the measurement describes the
plant ``delay_steps`` periods ago, so the filter runs ``delay_steps`` behind
and its estimate is pushed forward through the buffered inputs before it is
used for feedback.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .model import rk4_step, wrap_angle

H = np.array([0.0, 0.0, 1.0, 0.0])
TRACE_LIMIT = 1e9


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    sigma_psi: float = 0.01
    # theta, theta_dot come from integrating the known input
    Q_proc: np.ndarray = field(default_factory=lambda: np.diag([1e-12, 1e-12, 1e-5, 1e-1]))
    delay_steps: int = 2
    T: float = 0.02
    P0: np.ndarray = field(default_factory=lambda: np.diag([1e-8, 1e-8, 1e-6, 1e-4]))
    # "euler" as in the latency formulas; "rk4" integrates each period with RK4
    discretization: str = "euler"

    def __post_init__(self):
        if self.sigma_psi < 0:
            raise ValueError("sigma_psi must be non-negative")
        if self.delay_steps < 0 or int(self.delay_steps) != self.delay_steps:
            raise ValueError("delay_steps must be a non-negative integer")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.discretization not in ("euler", "rk4"):
            raise ValueError("discretization must be 'euler' or 'rk4'")
        object.__setattr__(self, "Q_proc", np.asarray(self.Q_proc, dtype=float))
        object.__setattr__(self, "P0", np.asarray(self.P0, dtype=float))
        object.__setattr__(self, "delay_steps", int(self.delay_steps))


@dataclass(frozen=True)
class EstimatorState:
    """Estimate at the filter's (delayed) time index.

    ``input_buffer`` holds the most recent applied inputs, newest first:
    ``(u[k-1], u[k-2], ..., u[k-d-1])``.
    """

    x_hat: np.ndarray
    P: np.ndarray
    input_buffer: tuple = ()

    @classmethod
    def initial(cls, x0, cfg: NoiseConfig) -> "EstimatorState":
        return cls(np.asarray(x0, dtype=float).copy(), cfg.P0.copy(), (0.0,) * (cfg.delay_steps + 1))

    def push_input(self, u: float) -> "EstimatorState":
        buf = (float(u),) + tuple(self.input_buffer)
        return replace(self, input_buffer=buf[:max(len(self.input_buffer), 1)])


def _propagate(x, u, T, dyn, method):
    if method == "rk4":
        h = T / 4
        for _ in range(4):
            x = rk4_step(lambda z: dyn.f(z, u), x, h)
        return x
    return x + T * dyn.f(x, u)


def _transition_jacobian(x, u, T, dyn, method):
    if method == "rk4":
        # finite-horizon sensitivity by RK4 on the variational equation
        h = T / 4
        Phi = np.eye(4)
        for _ in range(4):
            def rhs(z):
                xs, M = z[:4], z[4:].reshape(4, 4)
                A, _ = dyn.jac(xs, u)
                return np.concatenate([dyn.f(xs, u), (A @ M).reshape(-1)])
            z = rk4_step(rhs, np.concatenate([x, Phi.reshape(-1)]), h)
            x, Phi = z[:4], z[4:].reshape(4, 4)
        return Phi
    A, _ = dyn.jac(x, u)
    return np.eye(4) + T * A


def ekf_step(est: EstimatorState, psi_meas: float, u_applied: float, cfg: NoiseConfig, dyn) -> EstimatorState:
    """Predict with ``u_applied`` over one period, then fuse ``psi_meas``."""
    x, P = np.asarray(est.x_hat, dtype=float), np.asarray(est.P, dtype=float)
    F = _transition_jacobian(x, u_applied, cfg.T, dyn, cfg.discretization)
    x = _propagate(x, u_applied, cfg.T, dyn, cfg.discretization)
    P = F @ P @ F.T + cfg.Q_proc

    r = cfg.sigma_psi**2
    s = H @ P @ H + r
    if s > 0:
        K = P @ H / s
        innov = wrap_angle(psi_meas - x[2])
        x = x + K * innov
        IKH = np.eye(4) - np.outer(K, H)
        P = IKH @ P @ IKH.T + r * np.outer(K, K)
    P = 0.5 * (P + P.T)
    tr = float(np.trace(P))
    if not np.isfinite(tr) or tr > TRACE_LIMIT:
        raise EstimatorError(f"covariance blow-up: trace(P) = {tr:.3e}")
    return EstimatorState(x, P, est.input_buffer)


def compensate_latency(x_hat_delayed, u_km2: float, u_km1: float, T: float, dyn) -> np.ndarray:
    """Two forward-Euler steps with the inputs applied since the measurement."""
    x = np.asarray(x_hat_delayed, dtype=float)
    x = x + T * dyn.f(x, u_km2)
    return x + T * dyn.f(x, u_km1)


def predict_ahead(x_hat_delayed, inputs, T: float, dyn, method: str = "euler") -> np.ndarray:
    """Push a delayed estimate forward through ``inputs`` (oldest first)."""
    x = np.asarray(x_hat_delayed, dtype=float)
    for u in inputs:
        x = _propagate(x, u, T, dyn, method)
    return x


class MeasurementChannel:
    """Synthetic camera: the true angle ``delay_steps`` periods ago plus noise.

    Before enough history exists the oldest sample is repeated, i.e. the plant
    is taken to have been at its initial state for ``t < 0``.
    """

    def __init__(self, cfg: NoiseConfig, rng_seed=None, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(rng_seed)
        self.history: deque = deque(maxlen=cfg.delay_steps + 1)

    def __call__(self, psi_true: float) -> float:
        self.history.append(float(psi_true))
        delayed = self.history[0]
        noise = self.rng.normal(0.0, self.cfg.sigma_psi) if self.cfg.sigma_psi > 0 else 0.0
        return delayed + noise


def measurement_channel(psi_true, cfg: NoiseConfig, rng_seed=None) -> np.ndarray:
    """Measurement stream for a sequence of true angles sampled every ``cfg.T``."""
    ch = MeasurementChannel(cfg, rng_seed)
    return np.array([ch(v) for v in psi_true])


class DelayedEkf:
    """EKF plus latency compensation as run once per control period."""

    def __init__(self, x0, cfg: NoiseConfig, dyn, predict_method: str | None = None):
        self.cfg = cfg
        self.dyn = dyn
        self.predict_method = predict_method or cfg.discretization
        self.state = EstimatorState.initial(x0, cfg)
        self.x_current = np.asarray(x0, dtype=float).copy()

    def step(self, psi_meas: float) -> np.ndarray:
        """Fuse this period's measurement; return the estimate for now."""
        d = self.cfg.delay_steps
        buf = self.state.input_buffer  # newest first, length d + 1
        self.state = ekf_step(self.state, psi_meas, buf[d], self.cfg, self.dyn)
        ahead = list(reversed(buf[:d]))
        if d == 2 and self.predict_method == "euler":
            self.x_current = compensate_latency(self.state.x_hat, ahead[0], ahead[1], self.cfg.T, self.dyn)
        else:
            self.x_current = predict_ahead(self.state.x_hat, ahead, self.cfg.T, self.dyn, self.predict_method)
        return self.x_current

    def applied(self, u: float):
        self.state = self.state.push_input(u)
