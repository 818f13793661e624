"""End-to-end closed-loop simulation and the tau_max sweep."""
from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..bounds import auxiliary_replay, check_theorem_bound, extract_v
from ..compensation import Controller, reconcile_consistency
from ..dynamics import Trajectory, sample_disturbance
from ..errors import (
    ConfigurationError,
    ConsistencyError,
    GenerationError,
    NumericalBlowupError,
    StarvationError,
)
from ..transport import ActuatorBuffer, EventQueue, MeasurementPacket, delay_record, send

log = logging.getLogger(__name__)

STATUSES = ("ok", "starvation", "solver-failure", "numerical-blowup")


def orbit_deviation(states):
    """``sqrt((|(x1, x3)| - 6)^2 + (|(x2, x4)| - 10)^2)`` per row."""
    states = np.asarray(states)
    r = np.hypot(states[:, 0], states[:, 2])
    s = np.hypot(states[:, 1], states[:, 3])
    return np.sqrt((r - 6.0) ** 2 + (s - 10.0) ** 2)


@dataclass
class RunRecord:
    scenario: Any
    status: str
    message: str
    trajectory: Trajectory
    disturbances: np.ndarray
    ledger: Any
    switch_log: list
    activations: list
    send_log: list
    delay: Any = None
    consistency: Any = None
    v: Any = None
    bound: Any = None
    deviation: Optional[np.ndarray] = None
    wall_time: float = 0.0

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def sigma0(self):
        return self.switch_log[0][0] if self.switch_log else None

    @property
    def max_deviation(self):
        if self.deviation is None or self.sigma0 is None:
            return None
        lo = self.sigma0 + self.scenario.burn_in
        seg = self.deviation[lo:]
        return float(seg.max()) if len(seg) else None

    @property
    def w_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.disturbances).tobytes()).hexdigest()

    @property
    def solver_iterations(self):
        return [r.info.get("iterations") for r in self.send_log if "iterations" in r.info]


def disturbance_sequence(scenario, rng):
    nx = len(scenario.x0)
    return np.array([sample_disturbance(rng, scenario.disturbance_bound, nx)
                     for _ in range(scenario.steps)]).reshape(scenario.steps, nx)


def run_scenario(s):
    """Simulate the networked loop of scenario ``s``.

    Within each step ``n`` the order is fixed: the sensor samples ``x(n)``
    and sends it, due measurements are delivered, the controller computes
    and sends, due control packets reach the actuator buffer, the actuator
    applies ``u(n)`` and the plant advances to ``x(n+1)``.
    """
    t0 = time.perf_counter()
    model = s.validate()
    generator = s.build_generator()
    w_ss, sensor_ss, act_ss = np.random.SeedSequence(s.seed).spawn(3)
    W = disturbance_sequence(s, np.random.default_rng(w_ss))
    sensor = s.sensor.build(s.tau_max, np.random.default_rng(sensor_ss))
    actuator = s.actuator.build(s.tau_max, np.random.default_rng(act_ss))

    default_u = s.default_u()
    controller = Controller(model, generator, s.tau_max, default_u)
    buf = ActuatorBuffer(s.m, default_u)
    meas_q, ctrl_q = EventQueue(), EventQueue()

    nx, nu = model.state_dim, model.input_dim
    states = np.empty((s.steps + 1, nx))
    inputs = np.empty((s.steps, nu))
    x = np.asarray(s.x0, dtype=float)
    states[0] = x
    status, message = "ok", ""
    n = 0
    # overflow surfaces as a numerical-blowup status, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for n in range(s.steps):
                d = send(sensor, MeasurementPacket(n, x.copy()), n)
                if d is not None:
                    meas_q.push(d)
                inbox = [d.packet for d in meas_q.pop_due(n)]
                rec = controller.step(n, inbox)
                if rec is not None:
                    d = send(actuator, rec.packet, n)
                    controller.acknowledge(rec, d is not None)
                    if d is not None:
                        if d.deliver_at > rec.packet.stamp_n:
                            raise ConfigurationError(
                                f"packet stamped {rec.packet.stamp_n} delivered at {d.deliver_at}")
                        ctrl_q.push(d)
                for d in ctrl_q.pop_due(n):
                    buf.insert(d.packet, n)
                u = buf.read(n)
                inputs[n] = u
                x = model.exact_step(x, u, W[n])
                if not np.all(np.isfinite(x)):
                    raise NumericalBlowupError(n + 1)
                states[n + 1] = x
        except StarvationError as exc:
            status, message = "starvation", str(exc)
        except ConsistencyError as exc:
            # a ledger hole after the first activation means the buffer will run dry
            status, message = "starvation", f"controller: {exc}; actuator buffer would starve"
        except GenerationError as exc:
            status, message = "solver-failure", str(exc)
        except NumericalBlowupError as exc:
            status, message = "numerical-blowup", str(exc)

    applied = n if status != "ok" else s.steps
    traj = Trajectory(0, states[: applied + 1].copy(), inputs[:applied].copy())
    record = RunRecord(
        scenario=s,
        status=status,
        message=message,
        trajectory=traj,
        disturbances=W,
        ledger=controller.ledger,
        switch_log=list(buf.switch_log),
        activations=list(buf.activations),
        send_log=controller.send_log,
    )
    if s.deviation == "orbit" and nx == 4:
        record.deviation = orbit_deviation(traj.states)
    if status == "ok":
        record.delay = delay_record(record.switch_log, end_time=s.steps)
        record.consistency = reconcile_consistency(
            controller.ledger, record.activations, traj.inputs)
        record.v = extract_v(controller.ledger, traj, record.sigma0, s.steps)
        w_sup = float(np.linalg.norm(W, axis=1).max()) if len(W) else 0.0
        record.bound = check_theorem_bound(
            record.v, record.delay, w_sup, s.bound_model(), seed=s.seed, tau_max=s.tau_max)
    else:
        log.warning("run %s (seed %d) ended with %s: %s", s.name, s.seed, status, message)
    record.wall_time = time.perf_counter() - t0
    return record


def replay_run(record):
    """Re-simulate ``record`` as the delay-free loop with extracted ``v``."""
    s = record.scenario
    model = s.build_plant()
    generator = s.build_generator()
    sigma0 = record.sigma0
    warm = {sigma: rec.warm_start for sigma, pkt in record.activations
            for rec in record.send_log if rec.packet is pkt}
    return auxiliary_replay(
        model, generator, record.trajectory.state_at(sigma0), record.v,
        record.disturbances, [sg for sg, _ in record.activations], sigma0,
        record.trajectory.end_time, warm_starts=warm)


@dataclass
class SweepRow:
    tau_max: int
    status: str
    tau_inf: Optional[int]
    delta_sigma_inf: Optional[int]
    max_deviation: Optional[float]
    v_bound: Optional[float]
    v_observed: Optional[float]

    @classmethod
    def of(cls, record):
        b = record.bound
        return cls(
            tau_max=record.scenario.tau_max,
            status=record.status,
            tau_inf=b.tau_inf if b else None,
            delta_sigma_inf=b.delta_sigma_inf if b else None,
            max_deviation=record.max_deviation,
            v_bound=b.v_bound if b else None,
            v_observed=b.v_observed if b else None,
        )


def sweep_tau_max(base, taus, jobs=1):
    """One run per ``tau_max`` with the same seed, hence the same noise realization."""
    taus = [int(t) for t in taus]
    if not taus:
        raise ConfigurationError("tau_max list is empty")
    scenarios = [base.replace(tau_max=t, name=f"{base.name}-tau{t}") for t in taus]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(run_scenario, scenarios))
    else:
        records = [run_scenario(sc) for sc in scenarios]
    return records, [SweepRow.of(r) for r in records]
