"""Prediction-error and perturbation bounds, and their check on closed-loop runs.

Error bounds (per-step Lipschitz exponent ``L``, ``k`` steps)::

    eps(k, r) = (exp(L k) - 1) K h^p + exp(L k) r
    eta(k, r) = (exp(L k) - 1) rho(r) / L

and, for open-loop stable plants, the linear-growth forms
``eps(k, r) = k K h^p + r`` and ``eta(k, r) = k rho(r)``.

The measurement error of the equivalent delay-free loop is
``v(n) = x~_cl(n) - x_cl(n)``; on a consistent run it obeys
``|v|_inf <= eps(tau_inf + dsigma_inf, 0) + eta(tau_inf + dsigma_inf, |w|_inf)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ConsistencyError, StarvationError
from .dynamics import Trajectory

GROWTH_MODES = ("exponential", "linear")


@dataclass(frozen=True)
class ErrorBoundModel:
    L: float
    K: float
    h: float
    p: int
    growth: str = "exponential"
    rho_scale: float = 1.0

    def __post_init__(self):
        if self.growth not in GROWTH_MODES:
            raise ConfigurationError(f"growth must be one of {GROWTH_MODES}")
        if self.L < 0 or self.K < 0 or self.h < 0 or self.rho_scale < 0:
            raise ConfigurationError("bound parameters must be non-negative")

    def rho(self, r):
        return self.rho_scale * r

    def epsilon(self, k, r):
        return epsilon_eval(self, k, r)

    def eta(self, k, r):
        return eta_eval(self, k, r)


def _check_args(k, r):
    if k < 0 or r < 0:
        raise ConfigurationError(f"bound arguments must be non-negative, got k={k}, r={r}")


def epsilon_eval(model, k, r):
    _check_args(k, r)
    local = model.K * model.h ** model.p
    if model.growth == "linear":
        return k * local + r
    g = math.exp(model.L * k)
    return math.expm1(model.L * k) * local + g * r


def eta_eval(model, k, r):
    _check_args(k, r)
    rho = model.rho(r)
    if model.growth == "linear" or model.L == 0:
        return k * rho
    return math.expm1(model.L * k) * rho / model.L


# -- measurement error sequence ------------------------------------------------


def _two_diff(a, b):
    """``a - b`` as an unevaluated sum ``hi + lo`` with no rounding error."""
    hi = a - b
    bb = hi - a
    lo = (a - (hi - bb)) + (-b - bb)
    return hi, lo


@dataclass
class VSequence:
    """``v(n)`` for ``n = start .. start+len-1``.

    ``hi + lo`` equals ``x~_cl(n) - x_cl(n)`` exactly; ``norms`` holds the
    Euclidean norm of ``hi``.
    """

    start: int
    hi: np.ndarray
    lo: np.ndarray
    norms: np.ndarray = field(init=False)

    def __post_init__(self):
        self.norms = np.linalg.norm(self.hi, axis=1) if len(self.hi) else np.zeros(0)

    @property
    def sup_norm(self):
        return float(self.norms.max()) if len(self.norms) else 0.0

    @property
    def values(self):
        return {self.start + i: float(v) for i, v in enumerate(self.norms)}

    def perturb(self, n, x):
        """``x + v(n)`` rounded once."""
        i = n - self.start
        return np.array([math.fsum((a, b, c)) for a, b, c in zip(x, self.hi[i], self.lo[i])])


def extract_v(ledger, trajectory, start=None, end=None):
    """Measurement error ``v(n) = x~_cl(n) - x_cl(n)`` of a finished run.

    The range defaults to the first activation up to the last applied time.
    """
    start = ledger.first_active if start is None else start
    end = trajectory.end_time if end is None else end
    nx = trajectory.states.shape[1]
    if start is None or end <= start:
        return VSequence(end, np.zeros((0, nx)), np.zeros((0, nx)))
    hi = np.empty((end - start, nx))
    lo = np.empty((end - start, nx))
    for i, n in enumerate(range(start, end)):
        xt = ledger.xtilde_cl.get(n)
        if xt is None:
            raise ConsistencyError(n, f"no prediction x~_cl recorded for n={n}")
        hi[i], lo[i] = _two_diff(xt, trajectory.state_at(n))
    return VSequence(start, hi, lo)


@dataclass
class RobustnessBoundReport:
    tau_inf: int
    delta_sigma_inf: int
    w_sup: float
    v_bound: float
    v_observed: float
    satisfied: bool
    seed: Optional[int] = None
    tau_max: Optional[int] = None

    def row(self):
        return {
            "seed": self.seed,
            "tau_max": self.tau_max,
            "tau_inf": self.tau_inf,
            "delta_sigma_inf": self.delta_sigma_inf,
            "w_sup": self.w_sup,
            "v_bound": self.v_bound,
            "v_observed": self.v_observed,
            "satisfied": self.satisfied,
        }


def v_bound(model, tau_inf, delta_sigma_inf, w_sup):
    k = tau_inf + delta_sigma_inf
    return epsilon_eval(model, k, 0.0) + eta_eval(model, k, w_sup)


def check_theorem_bound(vseq, delay, w_sup, model, *, seed=None, tau_max=None):
    """Compare ``|v|_inf`` with the composite bound; no slack is applied."""
    bound = v_bound(model, delay.tau_inf, delay.delta_sigma_inf, w_sup)
    observed = vseq.sup_norm
    return RobustnessBoundReport(
        tau_inf=delay.tau_inf,
        delta_sigma_inf=delay.delta_sigma_inf,
        w_sup=float(w_sup),
        v_bound=float(bound),
        v_observed=observed,
        satisfied=bool(observed <= bound),
        seed=seed,
        tau_max=tau_max,
    )


def auxiliary_replay(model, generator, x0, v, w, sigmas, start, end, warm_starts=None):
    """Delay-free loop with measurement error ``v`` injected at switching times.

    ``x(n+1) = f(x(n), mu(x(sigma_i) + v(sigma_i), n - sigma_i), w(n))`` for
    ``sigma_i <= n < sigma_{i+1}``, simulated on ``[start, end]``.

    ``w`` is an array indexed by absolute time or a callable. ``warm_starts``
    maps a switching time to the solver initial guess used there, so that
    iterative generators see the same initial guess as in the delayed run.
    """
    warm_starts = warm_starts or {}
    sigma_set = set(int(s) for s in sigmas)
    nx, nu = model.state_dim, model.input_dim
    states = np.empty((end - start + 1, nx))
    inputs = np.empty((end - start, nu))
    x = np.asarray(x0, dtype=float)
    states[0] = x
    active = None
    for i, n in enumerate(range(start, end)):
        if n in sigma_set:
            if v is None:
                xt = x.copy()
            else:
                xt = v.perturb(n, x)
            seq = generator.generate(xt, model, warm_start=warm_starts.get(n)).controls
            active = (n, seq)
        if active is None:
            raise ConfigurationError(f"no switching time at or before n={n}")
        q = n - active[0]
        if q >= len(active[1]):
            raise StarvationError(n)
        u = active[1][q]
        wn = w(n) if callable(w) else w[n]
        x = model.exact_step(x, u, wn)
        inputs[i] = u
        states[i + 1] = x
    return Trajectory(start, states, inputs)
