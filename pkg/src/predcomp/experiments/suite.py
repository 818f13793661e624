"""Randomized invariant checks over many generated scenarios.

Each scenario draws its generator, predictor, channel delays and loss
patterns, disturbance bound and initial state from a seeded generator, so a
suite is reproducible from its master seed. The checks:

* prediction consistency holds exactly on every run,
* the measurement-error bound holds on every run,
* the delay-free replay reproduces the delayed run bit for bit,
* with the exact predictor and no disturbance the measurement error is zero.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..mpc import MpcConfig
from .runner import replay_run, run_scenario
from .scenario import ChannelSpec, Scenario

NOMINAL_TOL = 1e-12


def _channel(rng, max_delay):
    if max_delay > 0 and rng.random() < 0.5:
        lo = int(rng.integers(0, max_delay + 1))
        delay = dict(delay_kind="uniform", delay_low=lo, delay_high=int(rng.integers(lo, max_delay + 1)))
    else:
        delay = dict(delay_kind="constant", delay_value=int(rng.integers(0, max_delay + 1)))
    r = rng.random()
    if r < 0.3:
        loss = dict(loss_kind="none")
    elif r < 0.65:
        loss = dict(loss_kind="bernoulli", loss_p=float(rng.uniform(0.0, 0.4)))
    else:
        period = int(rng.integers(1, 4))
        loss = dict(loss_kind="periodic", loss_period=period, loss_phase=int(rng.integers(0, period)))
    return ChannelSpec(**delay, **loss)


def random_scenario(rng, index, *, steps=30, mpc_iter=15, nominal=False):
    """One randomized double-integrator scenario."""
    tau_max = int(rng.integers(0, 6))
    generator = "mpc" if index % 2 else "static"
    predictor = "exact" if nominal else str(rng.choice(["exact", "euler", "rk4"]))
    x0 = np.array([6.0, 0.0, 0.0, 10.0]) + rng.uniform(-1.0, 1.0, 4)
    return Scenario(
        name=f"random-{index}",
        steps=steps,
        seed=int(rng.integers(0, 2**31)),
        tau_max=tau_max,
        m=10,
        x0=tuple(float(v) for v in x0),
        predictor=predictor,
        disturbance_bound=0.0 if nominal else float(rng.choice([0.0, 0.05, 0.1])),
        generator=generator,
        mpc=MpcConfig(state_bound=900.0, max_iter=mpc_iter),
        sensor=_channel(rng, 4),
        actuator=_channel(rng, tau_max),
        deviation="orbit",
    )


def random_scenarios(seed, count, **kw):
    rng = np.random.default_rng(seed)
    return [random_scenario(rng, i, **kw) for i in range(count)]


@dataclass
class SuiteResult:
    runs: int = 0
    not_ok: List[str] = field(default_factory=list)
    consistency_failures: List[str] = field(default_factory=list)
    bound_failures: List[str] = field(default_factory=list)
    replay_checked: int = 0
    replay_failures: List[str] = field(default_factory=list)
    nominal_checked: int = 0
    nominal_failures: List[str] = field(default_factory=list)
    nominal_max_v: float = 0.0
    elapsed: float = 0.0
    records: list = field(default_factory=list, repr=False)

    @property
    def ok(self):
        return not (self.not_ok or self.consistency_failures or self.bound_failures
                    or self.replay_failures or self.nominal_failures)

    def lines(self):
        def line(name, bad, total):
            return f"{'PASS' if not bad else 'FAIL'} {name}: {total - len(bad)}/{total}" + (
                f" failing: {', '.join(bad[:5])}" if bad else "")
        return [
            line("runs completed", self.not_ok, self.runs),
            line("prediction consistency", self.consistency_failures, self.runs),
            line("measurement-error bound", self.bound_failures, self.runs),
            line("replay equivalence", self.replay_failures, self.replay_checked),
            line("nominal exactness", self.nominal_failures, self.nominal_checked)
            + f" (max |v| = {self.nominal_max_v:.3g})",
        ]


def identical(a, b):
    return a.shape == b.shape and a.tobytes() == b.tobytes()


def run_suite(seed=0, count=100, replays=20, nominal=10, steps=60, mpc_iter=30):
    t0 = time.perf_counter()
    res = SuiteResult()
    for s in random_scenarios(seed, count, steps=steps, mpc_iter=mpc_iter):
        rec = run_scenario(s)
        res.runs += 1
        res.records.append(rec)
        label = f"{s.name}(seed={s.seed})"
        if not rec.ok:
            res.not_ok.append(f"{label}:{rec.status}")
            continue
        if not rec.consistency.ok:
            res.consistency_failures.append(label)
        if not rec.bound.satisfied:
            res.bound_failures.append(label)
        if res.replay_checked < replays:
            res.replay_checked += 1
            replay = replay_run(rec)
            lo = rec.sigma0
            if not (identical(replay.states, rec.trajectory.states[lo:])
                    and identical(replay.inputs, rec.trajectory.inputs[lo:])):
                res.replay_failures.append(label)

    for s in random_scenarios(seed + 1, nominal, steps=steps, mpc_iter=mpc_iter, nominal=True):
        rec = run_scenario(s)
        res.nominal_checked += 1
        label = f"{s.name}(seed={s.seed})"
        if not rec.ok:
            res.nominal_failures.append(f"{label}:{rec.status}")
            continue
        res.nominal_max_v = max(res.nominal_max_v, rec.v.sup_norm)
        if rec.v.sup_norm > NOMINAL_TOL:
            res.nominal_failures.append(label)
    res.elapsed = time.perf_counter() - t0
    return res
