"""Finite-horizon optimal control for the orbiting double-integrator example.

The cost drives ``(x1, x3)`` onto the circle of radius 6 and the velocity
``(x2, x4)`` onto the counterclockwise tangent with speed 10::

    l(x) = 100 (x1^2 + x3^2 - 36)^2
           + 0.05 (x2 + 10 x3 / r)^2 + 0.05 (x4 - 10 x1 / r)^2,   r = |(x1, x3)|

    J(x0, u) = int_0^{NT} l(x(t)) dt + 20 l(x(NT))

The integral is a composite trapezoid rule on the sampling grid (optionally
subdivided). Inputs are kept in the disc ``u1^2 + u2^2 <= input_bound`` by
radial projection; the speed constraint ``x2^2 + x4^2 <= state_bound`` is a
quadratic penalty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .compensation import GeneratedSequence, _along_prediction
from .dynamics import iterate_approx
from .errors import ConfigurationError, GenerationError, SingularityError

RADIUS = 6.0
SPEED = 10.0
POSITION_WEIGHT = 100.0
VELOCITY_WEIGHT = 0.05
SINGULARITY_GUARD = 1e-6


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    sample_time: float = 0.1
    terminal_weight: float = 20.0
    state_bound: float = 30.0
    input_bound: float = 100.0
    penalty: float = 100.0
    quadrature_substeps: int = 1
    max_iter: int = 500
    tol: float = 1e-6
    constraint_tol: float = 1e-4
    armijo_c1: float = 1e-4
    armijo_memory: int = 1

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigurationError("horizon must be non-negative")
        if not self.sample_time > 0:
            raise ConfigurationError("sample_time must be positive")
        if self.quadrature_substeps < 1:
            raise ConfigurationError("quadrature_substeps must be >= 1")
        if self.input_bound <= 0 or self.state_bound <= 0:
            raise ConfigurationError("constraint bounds must be positive")


@dataclass
class OcpSolution:
    controls: np.ndarray
    predicted_states: np.ndarray
    cost: float
    constraint_violation: float
    iterations: int
    converged: bool
    stationarity: float


# -- cost ----------------------------------------------------------------------


def stage_cost(x):
    x1, x2, x3, x4 = (float(v) for v in x)
    r = math.hypot(x1, x3)
    if r < SINGULARITY_GUARD:
        raise SingularityError(f"|(x1, x3)| = {r:.3g} below singularity guard")
    a = x2 + SPEED * x3 / r
    b = x4 - SPEED * x1 / r
    q = x1 * x1 + x3 * x3 - RADIUS * RADIUS
    return POSITION_WEIGHT * q * q + VELOCITY_WEIGHT * a * a + VELOCITY_WEIGHT * b * b


def stage_cost_batch(X, with_grad=True):
    """Stage cost (and gradient) for each row of ``X``."""
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    r2 = x1 * x1 + x3 * x3
    r = np.sqrt(r2)
    if np.any(r < SINGULARITY_GUARD) or not np.all(np.isfinite(r)):
        raise SingularityError("trajectory passes the singularity guard")
    a = x2 + SPEED * x3 / r
    b = x4 - SPEED * x1 / r
    q = r2 - RADIUS * RADIUS
    val = POSITION_WEIGHT * q * q + VELOCITY_WEIGHT * (a * a + b * b)
    if not with_grad:
        return val, None
    r3 = r * r2
    ca = 2 * VELOCITY_WEIGHT * SPEED * a / r3
    cb = 2 * VELOCITY_WEIGHT * SPEED * b / r3
    cq = 4 * POSITION_WEIGHT * q
    grad = np.empty_like(X)
    grad[:, 0] = cq * x1 - ca * x1 * x3 - cb * x3 * x3
    grad[:, 1] = 2 * VELOCITY_WEIGHT * a
    grad[:, 2] = cq * x3 + ca * x1 * x1 + cb * x1 * x3
    grad[:, 3] = 2 * VELOCITY_WEIGHT * b
    return val, grad


class _Rollout:
    """Maps a control sequence to states on the (possibly refined) cost grid."""

    def __init__(self, model, horizon, substeps):
        self.model = model
        self.fine = model if substeps == 1 else model.refine(substeps)
        if self.fine is None:
            raise ConfigurationError("plant cannot be refined for quadrature substeps")
        self.N = horizon
        self.s = substeps
        self.K = horizon * substeps
        self.nx, self.nu = model.state_dim, model.input_dim
        self.h = self.fine.sample_time
        self.linear = self.fine.approx_linear is not None
        if self.linear:
            self._build_maps()

    def _build_maps(self):
        A, B = self.fine.approx_linear
        nx, nu, K, N, s = self.nx, self.nu, self.K, self.N, self.s
        Phi = np.empty((K + 1, nx, nx))
        Gam = np.zeros((K + 1, nx, N, nu))
        Phi[0] = np.eye(nx)
        for j in range(K):
            Phi[j + 1] = A @ Phi[j]
            Gam[j + 1] = np.einsum("ab,bcd->acd", A, Gam[j])
            Gam[j + 1, :, j // s, :] += B
        self.Phi = Phi.reshape((K + 1) * nx, nx)
        self.Gam = Gam.reshape((K + 1) * nx, N * nu)

    def states(self, x0, U):
        if self.linear:
            return (self.Phi @ x0 + self.Gam @ U.ravel()).reshape(self.K + 1, self.nx)
        X = np.empty((self.K + 1, self.nx))
        X[0] = x0
        for j in range(self.K):
            X[j + 1] = self.fine.approx_step(X[j], U[j // self.s])
        return X

    def vjp(self, X, U, G):
        """Pull the state cotangent ``G = dJ/dX`` back to ``dJ/dU``."""
        if self.linear:
            return (G.ravel() @ self.Gam).reshape(self.N, self.nu)
        dU = np.zeros((self.N, self.nu))
        lam = G[self.K].copy()
        for j in range(self.K - 1, -1, -1):
            A, B = self.fine.jacobians(X[j], U[j // self.s])
            dU[j // self.s] += B.T @ lam
            lam = G[j] + A.T @ lam
        return dU


class OcpProblem:
    """Penalized objective of one OCP instance, with value and gradient."""

    def __init__(self, config, model):
        if model.state_dim != 4 or model.input_dim != 2:
            raise ConfigurationError("the orbit cost needs a 4-state, 2-input plant")
        if not math.isclose(model.sample_time, config.sample_time, rel_tol=1e-12):
            raise ConfigurationError(
                f"MPC sample time {config.sample_time} differs from plant {model.sample_time}")
        self.config = config
        self.model = model
        self.rollout = _Rollout(model, config.horizon, config.quadrature_substeps)
        K, h = self.rollout.K, self.rollout.h
        w = np.full(K + 1, h)
        w[0] = w[K] = h / 2
        if K == 0:
            w[0] = 0.0
        w[K] += config.terminal_weight
        self.weights = w

    def _speed_excess(self, X):
        excess = X[1:, 1] ** 2 + X[1:, 3] ** 2 - self.config.state_bound
        return np.maximum(excess, 0.0)

    def value(self, x0, U):
        X = self.rollout.states(x0, U)
        l, _ = stage_cost_batch(X, with_grad=False)
        ex = self._speed_excess(X)
        return float(self.weights @ l + self.config.penalty * (ex @ ex))

    def value_and_grad(self, x0, U):
        X = self.rollout.states(x0, U)
        l, gl = stage_cost_batch(X)
        ex = self._speed_excess(X)
        J = float(self.weights @ l + self.config.penalty * (ex @ ex))
        G = gl * self.weights[:, None]
        G[1:, 1] += 4 * self.config.penalty * ex * X[1:, 1]
        G[1:, 3] += 4 * self.config.penalty * ex * X[1:, 3]
        return J, self.rollout.vjp(X, U, G)

    def violation(self, x0, U):
        X = self.rollout.states(x0, U)
        ex = self._speed_excess(X)
        return float(ex.max()) if len(ex) else 0.0


def trajectory_cost(config, model, x0, u):
    """Penalized cost ``J(x0, u)`` along the predictor trajectory."""
    U = np.asarray(u, dtype=float).reshape(config.horizon, model.input_dim)
    return OcpProblem(config, model).value(np.asarray(x0, dtype=float), U)


def project_inputs(U, input_bound):
    """Row-wise radial projection onto ``u1^2 + u2^2 <= input_bound``."""
    U = np.array(U, dtype=float)
    if U.size == 0:
        return U
    r2 = np.einsum("ij,ij->i", U, U)
    over = r2 > input_bound
    if over.any():
        U[over] *= (math.sqrt(input_bound) / np.sqrt(r2[over]))[:, None]
        # rounding can leave u.u a few ulps above the bound
        r2 = np.einsum("ij,ij->i", U, U)
        over = r2 > input_bound
        while over.any():
            U[over] *= 1.0 - 2.0 ** -52
            r2 = np.einsum("ij,ij->i", U, U)
            over = r2 > input_bound
    return U


def _safe_value(problem, x0, U):
    try:
        return problem.value(x0, U)
    except SingularityError:
        return math.inf


def solve_ocp(config, model, x0, warm_start=None, problem=None):
    """Projected gradient descent with Armijo backtracking.

    Trial steps use the Barzilai-Borwein length of the previous iteration and
    are accepted against the largest of the last ``armijo_memory`` objective
    values (``armijo_memory=1`` gives the monotone rule). Returns the best
    iterate, with ``converged=False`` when ``max_iter`` is hit.
    """
    x0 = np.asarray(x0, dtype=float)
    problem = problem or OcpProblem(config, model)
    N, nu = config.horizon, model.input_dim
    stage_cost(x0)  # singularity guard on the initial state
    if warm_start is None:
        U = np.zeros((N, nu))
    else:
        U = np.asarray(warm_start, dtype=float).reshape(N, nu)
    U = project_inputs(U, config.input_bound)

    if N == 0:
        J = problem.value(x0, U)
        return OcpSolution(U, iterate_approx(model, 0, x0, U, 0).states, J, 0.0, 0, True, 0.0)

    J, g = problem.value_and_grad(x0, U)
    alpha = 1.0 / max(1.0, float(np.abs(g).max()))
    c1 = config.armijo_c1
    recent = [J]
    best = (J, U)
    it = 0
    stat = math.inf
    while True:
        stat = float(np.linalg.norm(U - project_inputs(U - g, config.input_bound)))
        if stat < config.tol or it >= config.max_iter:
            break
        it += 1
        while True:
            Un = project_inputs(U - alpha * g, config.input_bound)
            d = Un - U
            Jn = _safe_value(problem, x0, Un)
            if Jn <= max(recent) + c1 * float(np.vdot(g, d)):
                break
            alpha *= 0.5
            if alpha < 1e-20:
                Un = None
                break
        if Un is None or not np.any(d):
            break
        Jn, gn = problem.value_and_grad(x0, Un)
        s_vec = (Un - U).ravel()
        y_vec = (gn - g).ravel()
        sy = float(s_vec @ y_vec)
        alpha = float(s_vec @ s_vec) / sy if sy > 0 else alpha * 2.0
        alpha = min(max(alpha, 1e-12), 1e6)
        U, J, g = Un, Jn, gn
        recent = (recent + [J])[-max(1, config.armijo_memory):]
        if J < best[0]:
            best = (J, U)

    if best[0] < J:
        U = best[1]
        J, g = problem.value_and_grad(x0, U)
        stat = float(np.linalg.norm(U - project_inputs(U - g, config.input_bound)))
    violation = problem.violation(x0, U)
    states = iterate_approx(model, 0, x0, U, N).states
    converged = stat < config.tol and violation <= config.constraint_tol
    return OcpSolution(U, states, J, violation, it, converged, stat)


class MpcGenerator:
    """Input generator returning the first ``m`` optimal controls.

    The next call is warm-started with the previous solution shifted by
    one step (last control repeated).
    """

    kind = "mpc"

    def __init__(self, config, m):
        if m < 2:
            raise ConfigurationError("horizon m must be > 1")
        if config.horizon < m:
            raise ConfigurationError(f"MPC horizon {config.horizon} shorter than m={m}")
        self.config = config
        self.m = int(m)
        self._problems = {}

    def _problem(self, model):
        key = id(model)
        if key not in self._problems:
            self._problems[key] = (model, OcpProblem(self.config, model))
        return self._problems[key][1]

    def generate(self, xtilde, model, warm_start=None):
        try:
            sol = solve_ocp(self.config, model, xtilde, warm_start, self._problem(model))
        except SingularityError as exc:
            raise GenerationError(str(exc)) from exc
        if not (np.all(np.isfinite(sol.controls)) and math.isfinite(sol.cost)):
            raise GenerationError("MPC solver returned non-finite values")
        controls = sol.controls[: self.m].copy()
        states = _along_prediction(model, xtilde, controls)
        shifted = np.vstack([sol.controls[1:], sol.controls[-1:]])
        info = {
            "iterations": sol.iterations,
            "cost": sol.cost,
            "violation": sol.constraint_violation,
            "converged": sol.converged,
        }
        return GeneratedSequence(controls, states, info, next_warm_start=shifted)
