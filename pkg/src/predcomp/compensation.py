"""Prediction consistent delay compensation on the controller side.

At every computation time ``n_c`` the controller

1. takes the newest measurement ``x(n_s)`` it has received,
2. predicts the state at ``n = n_c + tau_max`` with the predictor model and
   the prediction input ``u~`` (the inputs the actuator will have applied),
3. generates ``m`` control values from that prediction and sends them,
   time-stamped with ``n``.

Consistency needs ``u~(k) = u(k)`` for every applied ``k``. Since delivered
packets always arrive by their stamp and the actuator activates the newest
stamp not in the future, the controller can reproduce the actuator's choice
from its own send log once it knows which packets were lost. Loss is
reported back at send time on an idealized lossless acknowledgement path,
and only delivered packets are committed to the ledger.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .dynamics import iterate_approx
from .errors import ConfigurationError, ConsistencyError, GenerationError
from .transport import ControlSequencePacket


class PredictionLedger:
    """Per-time record of the prediction input ``u~`` and prediction ``x~_cl``.

    ``utilde[k]`` is the value the actuator applies at ``k``; before the first
    committed packet the actuator's default input applies. ``xtilde_cl[k]``
    is the predicted state belonging to the sequence active at ``k``.
    """

    def __init__(self, default_input):
        self.default_input = np.asarray(default_input, dtype=float)
        self.utilde: Dict[int, np.ndarray] = {}
        self.xtilde_cl: Dict[int, np.ndarray] = {}
        self.first_active: Optional[int] = None

    def input_at(self, k):
        u = self.utilde.get(k)
        if u is not None:
            return u
        if self.first_active is None or k < self.first_active:
            return self.default_input
        raise ConsistencyError(k)

    def commit(self, stamp, controls, states):
        """Record a delivered sequence; it overrides older ones from ``stamp`` on."""
        for q, (u, x) in enumerate(zip(controls, states)):
            self.utilde[stamp + q] = np.array(u, dtype=float)
            self.xtilde_cl[stamp + q] = np.array(x, dtype=float)
        if self.first_active is None or stamp < self.first_active:
            self.first_active = stamp


@dataclass
class GeneratedSequence:
    controls: np.ndarray
    states: np.ndarray
    info: Dict[str, Any] = field(default_factory=dict)
    next_warm_start: Optional[np.ndarray] = None


def _along_prediction(model, xtilde, controls):
    traj = iterate_approx(model, 0, xtilde, controls, len(controls) - 1)
    return traj.states


def saturate(u, bound):
    """Radial projection onto ``{|u|_2 <= bound}``, exact in floating point."""
    u = np.asarray(u, dtype=float)
    if bound is None:
        return u
    r2 = float(u @ u)
    b2 = bound * bound
    if r2 <= b2:
        return u
    u = u * (bound / np.sqrt(r2))
    while float(u @ u) > b2:
        u = u * (1.0 - 2.0 ** -52)
    return u


def linear_feedback(gain, u_max=None):
    """State feedback ``K(x) = sat(-gain @ x)``."""
    gain = np.atleast_2d(np.asarray(gain, dtype=float))

    def law(x):
        return saturate(-(gain @ x), u_max)

    return law


class StaticFeedbackGenerator:
    """Forward-predicts a static feedback law along the predictor model.

    ``mu(x~(n), q) = K(x~(q))`` with ``x~(p+1) = f~(x~(p), K(x~(p)))``.
    """

    kind = "static_feedback"

    def __init__(self, law, m):
        if m < 2:
            raise ConfigurationError("horizon m must be > 1")
        self.law = law
        self.m = int(m)

    def generate(self, xtilde, model, warm_start=None):
        x = np.asarray(xtilde, dtype=float)
        controls = np.empty((self.m, model.input_dim))
        states = np.empty((self.m, model.state_dim))
        for q in range(self.m):
            states[q] = x
            controls[q] = self.law(x)
            if q < self.m - 1:
                x = model.approx_step(x, controls[q])
        if not (np.all(np.isfinite(controls)) and np.all(np.isfinite(states))):
            raise GenerationError("static feedback produced non-finite values")
        return GeneratedSequence(controls, states)


def predict_state(ledger, model, meas, target_n):
    """``x~(target_n, n_s, x(n_s), u~)`` from the measurement ``meas``."""
    if target_n < meas.stamp_ns:
        raise ConfigurationError(
            f"prediction target {target_n} precedes measurement stamp {meas.stamp_ns}")
    if target_n == meas.stamp_ns:
        return np.array(meas.state, dtype=float)
    traj = iterate_approx(model, meas.stamp_ns, meas.state, ledger.input_at, target_n)
    return traj.states[-1]


def generate_sequence(gen, xtilde_n, model, warm_start=None):
    if not np.all(np.isfinite(xtilde_n)):
        raise GenerationError("predicted state is not finite")
    return gen.generate(xtilde_n, model, warm_start=warm_start)


@dataclass
class SendRecord:
    """Everything the controller knows about one emitted packet."""

    packet: ControlSequencePacket
    computed_at: int
    xtilde: np.ndarray
    states: np.ndarray
    warm_start: Optional[np.ndarray] = None
    info: Dict[str, Any] = field(default_factory=dict)
    lost: Optional[bool] = None


class Controller:
    """Controller state: newest measurement, ledger and send log."""

    def __init__(self, model, generator, tau_max, default_input):
        if tau_max < 0:
            raise ConfigurationError("tau_max must be non-negative")
        self.model = model
        self.generator = generator
        self.tau_max = int(tau_max)
        self.ledger = PredictionLedger(default_input)
        self.latest = None
        self.send_log: List[SendRecord] = []
        self._warm = None

    def step(self, now, inbox=()):
        for pkt in inbox:
            if self.latest is None or pkt.stamp_ns > self.latest.stamp_ns:
                self.latest = pkt
        if self.latest is None:
            return None
        n = now + self.tau_max
        xtilde = predict_state(self.ledger, self.model, self.latest, n)
        gen = generate_sequence(self.generator, xtilde, self.model, self._warm)
        record = SendRecord(
            packet=ControlSequencePacket(n, gen.controls, self.latest.stamp_ns),
            computed_at=now,
            xtilde=xtilde,
            states=gen.states,
            warm_start=self._warm,
            info=gen.info,
        )
        self._warm = gen.next_warm_start
        return record

    def acknowledge(self, record, delivered):
        record.lost = not delivered
        if delivered:
            self.ledger.commit(record.packet.stamp_n, record.packet.sequence, record.states)
        self.send_log.append(record)


def controller_step(controller, now, inbox=()):
    """Run one computation; returns the :class:`SendRecord` or None when idle."""
    return controller.step(now, inbox)


@dataclass
class ConsistencyReport:
    checked: int
    violations: List[int]
    closed_loop_mismatches: List[int]

    @property
    def first_violation(self):
        times = self.violations + self.closed_loop_mismatches
        return min(times) if times else None

    @property
    def ok(self):
        return not self.violations and not self.closed_loop_mismatches


def reconcile_consistency(ledger, activations, applied_inputs, start=0):
    """Audit prediction consistency and the closed-loop input form.

    Parameters
    ----------
    ledger : PredictionLedger
    activations : list of (sigma, ControlSequencePacket)
        Switching times and the packets activated there.
    applied_inputs : array (K, nu)
        Inputs applied by the actuator at times ``start .. start+K-1``.

    Every applied ``u(k)`` must equal ``u~(k)`` bit for bit, and for
    ``sigma_i <= k < sigma_{i+1}`` it must equal element ``k - stamp`` of the
    packet activated at ``sigma_i``.
    """
    applied_inputs = np.asarray(applied_inputs, dtype=float)
    end = start + len(applied_inputs)
    violations = []
    for i, u in enumerate(applied_inputs):
        k = start + i
        try:
            ut = ledger.input_at(k)
        except ConsistencyError:
            violations.append(k)
            continue
        if not np.array_equal(ut, u):
            violations.append(k)

    mismatches = []
    for j, (sigma, pkt) in enumerate(activations):
        nxt = activations[j + 1][0] if j + 1 < len(activations) else end
        for k in range(max(sigma, start), min(nxt, end)):
            q = k - pkt.stamp_n
            if q >= len(pkt.sequence) or not np.array_equal(pkt.sequence[q], applied_inputs[k - start]):
                mismatches.append(k)
    return ConsistencyReport(len(applied_inputs), violations, mismatches)
