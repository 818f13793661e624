"""Plant models, trajectory iteration and disturbance sampling.

A plant is a pair of one-step maps on the sampling grid: the exact perturbed
map ``x+ = f(x, u, 0) + w`` and an approximate predictor ``x+ = f~(x, u)``
used by the controller. Disturbances enter additively after the nominal
update, so ``|f(x, u, w) - f(x, u, 0)| = |w|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .errors import ConfigurationError, NumericalBlowupError

StepFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
JacFn = Callable[[np.ndarray, np.ndarray], "tuple[np.ndarray, np.ndarray]"]

PREDICTORS = ("exact", "euler", "rk4")


@dataclass(frozen=True)
class PlantModel:
    """Exact plant map plus the predictor map used for forecasting.

    Attributes
    ----------
    nominal_step : callable
        ``f(x, u, 0)``.
    approx_step : callable
        ``f~(x, u)``, the controller's one-step predictor.
    lipschitz_L : float
        Per-step Lipschitz exponent: both maps are Lipschitz in ``x`` with
        constant ``exp(lipschitz_L)``.
    approx_linear : (A, B) or None
        Matrices with ``f~(x, u) = A x + B u`` when the predictor is linear.
        The MPC solver uses them for a batched rollout.
    approx_jacobians : callable or None
        ``(x, u) -> (df~/dx, df~/du)``; required by the MPC solver when
        ``approx_linear`` is None.
    refine : callable or None
        ``s -> PlantModel`` with sample time ``sample_time / s``.
    """

    name: str
    state_dim: int
    input_dim: int
    sample_time: float
    nominal_step: StepFn
    approx_step: StepFn
    lipschitz_L: float
    predictor: str = "exact"
    approx_linear: Optional[tuple] = None
    approx_jacobians: Optional[JacFn] = None
    refine: Optional[Callable[[int], "PlantModel"]] = field(default=None, repr=False)

    def exact_step(self, x, u, w):
        return self.nominal_step(x, u) + w

    def jacobians(self, x, u):
        if self.approx_linear is not None:
            return self.approx_linear
        if self.approx_jacobians is None:
            raise ConfigurationError(f"plant {self.name!r} provides no predictor Jacobians")
        return self.approx_jacobians(x, u)


@dataclass
class Trajectory:
    start_time: int
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        if len(self.states) != len(self.inputs) + 1:
            raise ConfigurationError("trajectory needs exactly one more state than inputs")

    @property
    def end_time(self):
        return self.start_time + len(self.inputs)

    def state_at(self, n):
        return self.states[n - self.start_time]


# -- integrators ---------------------------------------------------------------


def euler_step(rhs, x, u, h):
    return x + h * rhs(x, u)


def rk4_step(rhs, x, u, h):
    k1 = rhs(x, u)
    k2 = rhs(x + 0.5 * h * k1, u)
    k3 = rhs(x + 0.5 * h * k2, u)
    k4 = rhs(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _zoh(Ac, Bc, T):
    nx, nu = Bc.shape
    M = np.zeros((nx + nu, nx + nu))
    M[:nx, :nx] = Ac
    M[:nx, nx:] = Bc
    E = expm(M * T)
    return E[:nx, :nx], E[:nx, nx:]


def _linearize_step(step, nx, nu):
    """Recover (A, B) of a map that is linear in (x, u) by probing unit vectors."""
    A = np.column_stack([step(np.eye(nx)[j], np.zeros(nu)) for j in range(nx)])
    B = np.column_stack([step(np.zeros(nx), np.eye(nu)[j]) for j in range(nu)])
    return A, B


def _matrix_step(A, B):
    A = np.ascontiguousarray(A)
    B = np.ascontiguousarray(B)

    def step(x, u):
        return A @ x + B @ u

    return step


def linear_ode_plant(Ac, Bc, sample_time, predictor="exact", *, lipschitz_L=None,
                     name="linear", exact_matrices=None):
    """ZOH-sampled linear ODE ``xdot = Ac x + Bc u``.

    The exact map is the matrix-exponential discretization unless
    ``exact_matrices`` supplies a closed form. The predictor is one step of
    the chosen fixed-step scheme over the whole sampling period.
    """
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Bc = np.atleast_2d(np.asarray(Bc, dtype=float))
    nx, nu = Bc.shape
    if Ac.shape != (nx, nx):
        raise ConfigurationError(f"Ac has shape {Ac.shape}, expected {(nx, nx)}")
    if predictor not in PREDICTORS:
        raise ConfigurationError(f"unknown predictor {predictor!r}; choose from {PREDICTORS}")
    T = float(sample_time)
    if not T > 0:
        raise ConfigurationError("sample_time must be positive")

    Ad, Bd = exact_matrices if exact_matrices is not None else _zoh(Ac, Bc, T)

    def rhs(x, u):
        return Ac @ x + Bc @ u

    if predictor == "exact":
        At, Bt = Ad, Bd
    elif predictor == "euler":
        At, Bt = _linearize_step(lambda x, u: euler_step(rhs, x, u, T), nx, nu)
    else:
        At, Bt = _linearize_step(lambda x, u: rk4_step(rhs, x, u, T), nx, nu)

    if lipschitz_L is None:
        # per-step exponent covering both maps
        lipschitz_L = float(np.log(max(np.linalg.norm(Ad, 2), np.linalg.norm(At, 2), 1.0 + 1e-12)))

    nominal = _matrix_step(Ad, Bd)
    approx = nominal if predictor == "exact" else _matrix_step(At, Bt)

    def refine(s):
        return linear_ode_plant(Ac, Bc, T / s, predictor, lipschitz_L=lipschitz_L / s, name=name)

    return PlantModel(
        name=name,
        state_dim=nx,
        input_dim=nu,
        sample_time=T,
        nominal_step=nominal,
        approx_step=approx,
        lipschitz_L=float(lipschitz_L),
        predictor=predictor,
        approx_linear=(At, Bt),
        refine=refine,
    )


def double_integrator(sample_time=0.1, predictor="exact"):
    """Two decoupled double integrators, state ``(x1, x2, x3, x4)``.

    ``x1' = x2, x2' = u1, x3' = x4, x4' = u2``. The continuous-time system
    matrix has spectral norm 1, so the per-step Lipschitz exponent is
    ``sample_time``.
    """
    T = float(sample_time)
    Ac = np.zeros((4, 4))
    Ac[0, 1] = Ac[2, 3] = 1.0
    Bc = np.zeros((4, 2))
    Bc[1, 0] = Bc[3, 1] = 1.0
    # Ac is nilpotent: the ZOH discretization is a finite polynomial in T
    Ad = np.eye(4) + Ac * T
    Bd = np.array([[T * T / 2, 0.0], [T, 0.0], [0.0, T * T / 2], [0.0, T]])
    return linear_ode_plant(Ac, Bc, T, predictor, lipschitz_L=T,
                            name="double_integrator", exact_matrices=(Ad, Bd))


def scalar_plant(rate=1.0, sample_time=0.1, predictor="euler"):
    """Scalar test plant ``xdot = rate * x + u``."""
    T = float(sample_time)
    a = float(rate)
    Ad = np.array([[np.exp(a * T)]])
    Bd = np.array([[np.expm1(a * T) / a if a != 0 else T]])
    return linear_ode_plant([[a]], [[1.0]], T, predictor, lipschitz_L=abs(a) * T,
                            name="scalar", exact_matrices=(Ad, Bd))


# -- iteration -----------------------------------------------------------------


SeqLike = Union[Sequence, np.ndarray, Callable[[int], np.ndarray]]


def _value_at(seq, n0, k, dim, what):
    v = seq(k) if callable(seq) else seq[k - n0]
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise ConfigurationError(f"{what} at k={k} has shape {v.shape}, expected ({dim},)")
    return v


def _check_state(x, dim, step):
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ConfigurationError(f"state has shape {x.shape}, expected ({dim},)")
    if not np.all(np.isfinite(x)):
        raise NumericalBlowupError(step)
    return x


def _iterate(model, n0, x0, u, n, step):
    if n < n0:
        raise ConfigurationError(f"end time {n} precedes start time {n0}")
    nx, nu = model.state_dim, model.input_dim
    states = np.empty((n - n0 + 1, nx))
    inputs = np.empty((n - n0, nu))
    x = _check_state(x0, nx, n0)
    states[0] = x
    for i, k in enumerate(range(n0, n)):
        uk = _value_at(u, n0, k, nu, "input")
        inputs[i] = uk
        x = step(k, x, uk)
        if not np.all(np.isfinite(x)):
            raise NumericalBlowupError(k + 1)
        states[i + 1] = x
    return Trajectory(n0, states, inputs)


def iterate_exact(model, n0, x0, u, w, n):
    """``x(k, n0, x0, u, w)`` for ``k = n0..n``.

    ``u`` and ``w`` are either arrays indexed from ``n0`` or callables of the
    absolute time.
    """
    nx = model.state_dim

    def step(k, x, uk):
        return model.exact_step(x, uk, _value_at(w, n0, k, nx, "disturbance"))

    return _iterate(model, n0, x0, u, n, step)


def iterate_approx(model, n0, x0, u, n):
    """Predicted solution ``x~(k, n0, x0, u)`` for ``k = n0..n``."""
    return _iterate(model, n0, x0, u, n, lambda k, x, uk: model.approx_step(x, uk))


def sample_disturbance(rng, bound, dim):
    """One disturbance vector with i.i.d. entries uniform on ``[-bound, bound]``."""
    if bound < 0:
        raise ConfigurationError("disturbance bound must be non-negative")
    return rng.uniform(-bound, bound, size=dim)
