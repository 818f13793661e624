"""Scenario description and its on-disk format.

A scenario file is flat TOML: ``key = value`` lines with dotted keys, and a
``format`` header line that must read ``"predcomp-scenario/1"``. Missing keys
take the defaults below. Example::

    format = "predcomp-scenario/1"
    name = "orbit"
    steps = 300
    seed = 2010
    tau_max = 2
    m = 10
    x0 = [6.0, 0.0, 0.0, 10.0]

    plant.kind = "double_integrator"      # or "scalar"
    plant.sample_time = 0.1
    plant.predictor = "exact"             # exact | euler | rk4
    disturbance.bound = 0.1

    generator.kind = "mpc"                # or "static"
    mpc.state_bound = 900.0

    sensor.loss.kind = "periodic"         # none | bernoulli | periodic
    sensor.loss.period = 3
    actuator.delay.kind = "tau_max"       # constant | uniform | tau_max

    bounds.lipschitz = 0.1
    bounds.h = 0.1
    bounds.euler.K = 5.0
    bounds.euler.order = 1
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..bounds import ErrorBoundModel
from ..compensation import StaticFeedbackGenerator, linear_feedback
from ..dynamics import PREDICTORS, double_integrator, scalar_plant
from ..errors import ConfigurationError
from ..mpc import MpcConfig, MpcGenerator
from ..transport import (
    ChannelModel,
    bernoulli_loss,
    constant_delay,
    no_loss,
    periodic_loss,
    uniform_delay,
)

FORMAT = "predcomp-scenario/1"
PLANTS = ("double_integrator", "scalar")


@dataclass(frozen=True)
class ChannelSpec:
    delay_kind: str = "constant"
    delay_value: int = 0
    delay_low: int = 0
    delay_high: int = 0
    loss_kind: str = "none"
    loss_p: float = 0.0
    loss_period: int = 1
    loss_phase: int = 0

    def delay_bound(self, tau_max):
        if self.delay_kind == "constant":
            return self.delay_value
        if self.delay_kind == "uniform":
            return self.delay_high
        if self.delay_kind == "tau_max":
            return tau_max
        raise ConfigurationError(f"unknown delay kind {self.delay_kind!r}")

    def build(self, tau_max, rng):
        if self.delay_kind == "constant":
            delay_fn, bound = constant_delay(self.delay_value)
        elif self.delay_kind == "uniform":
            delay_fn, bound = uniform_delay(self.delay_low, self.delay_high)
        elif self.delay_kind == "tau_max":
            delay_fn, bound = constant_delay(tau_max)
        else:
            raise ConfigurationError(f"unknown delay kind {self.delay_kind!r}")
        if self.loss_kind == "none":
            loss_fn = no_loss()
        elif self.loss_kind == "bernoulli":
            loss_fn = bernoulli_loss(self.loss_p)
        elif self.loss_kind == "periodic":
            loss_fn = periodic_loss(self.loss_period, self.loss_phase)
        else:
            raise ConfigurationError(f"unknown loss kind {self.loss_kind!r}")
        return ChannelModel(delay_fn, loss_fn, bound, rng)


@dataclass(frozen=True)
class BoundSpec:
    """Declared error-bound constants; ``K`` and ``order`` depend on the predictor."""

    lipschitz: float = 0.1
    h: float = 0.1
    growth: str = "exponential"
    rho_scale: float = 1.0
    per_predictor: Tuple[Tuple[str, float, int], ...] = (
        ("exact", 0.0, 1),
        ("euler", 5.0, 1),
        ("rk4", 1e-3, 4),
    )

    def model(self, predictor):
        for name, K, order in self.per_predictor:
            if name == predictor:
                return ErrorBoundModel(self.lipschitz, K, self.h, order, self.growth, self.rho_scale)
        raise ConfigurationError(f"no declared error constant for predictor {predictor!r}")


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    steps: int = 300
    seed: int = 0
    tau_max: int = 2
    m: int = 10
    x0: Tuple[float, ...] = (6.0, 0.0, 0.0, 10.0)
    default_input: Optional[Tuple[float, ...]] = None

    plant: str = "double_integrator"
    sample_time: float = 0.1
    predictor: str = "exact"
    plant_rate: float = 1.0

    disturbance_bound: float = 0.0

    generator: str = "mpc"
    gain: Tuple[Tuple[float, ...], ...] = ((1.0, 1.5, 0.0, 0.0), (0.0, 0.0, 1.0, 1.5))
    u_max: Optional[float] = 10.0
    mpc: MpcConfig = field(default_factory=MpcConfig)

    sensor: ChannelSpec = field(default_factory=ChannelSpec)
    actuator: ChannelSpec = field(default_factory=lambda: ChannelSpec(delay_kind="tau_max"))

    bounds: BoundSpec = field(default_factory=BoundSpec)

    deviation: str = "orbit"
    burn_in: int = 0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # -- builders -------------------------------------------------------------

    def validate(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.m < 2:
            raise ConfigurationError("m must be > 1")
        if self.tau_max < 0:
            raise ConfigurationError("tau_max must be non-negative")
        if self.plant not in PLANTS:
            raise ConfigurationError(f"unknown plant {self.plant!r}")
        if self.predictor not in PREDICTORS:
            raise ConfigurationError(f"unknown predictor {self.predictor!r}")
        if self.generator not in ("mpc", "static"):
            raise ConfigurationError(f"unknown generator {self.generator!r}")
        if self.actuator.delay_bound(self.tau_max) > self.tau_max:
            raise ConfigurationError(
                f"actuator delay bound {self.actuator.delay_bound(self.tau_max)} exceeds "
                f"tau_max={self.tau_max}; sequences could arrive after their stamp")
        model = self.build_plant()
        if len(self.x0) != model.state_dim:
            raise ConfigurationError(f"x0 has {len(self.x0)} entries, plant has {model.state_dim}")
        if self.default_input is not None and len(self.default_input) != model.input_dim:
            raise ConfigurationError("default_input dimension mismatch")
        if self.generator == "static" and np.shape(self.gain) != (model.input_dim, model.state_dim):
            raise ConfigurationError(
                f"gain has shape {np.shape(self.gain)}, expected {(model.input_dim, model.state_dim)}")
        if self.generator == "mpc":
            if self.plant != "double_integrator":
                raise ConfigurationError("the MPC generator needs the double_integrator plant")
            if self.mpc.horizon < self.m:
                raise ConfigurationError(f"MPC horizon {self.mpc.horizon} shorter than m={self.m}")
        self.bounds.model(self.predictor)
        return model

    def build_plant(self):
        if self.plant == "double_integrator":
            return double_integrator(self.sample_time, self.predictor)
        return scalar_plant(self.plant_rate, self.sample_time, self.predictor)

    def build_generator(self):
        if self.generator == "mpc":
            cfg = dataclasses.replace(self.mpc, sample_time=self.sample_time)
            return MpcGenerator(cfg, self.m)
        return StaticFeedbackGenerator(linear_feedback(np.array(self.gain), self.u_max), self.m)

    def input_dim(self):
        return 2 if self.plant == "double_integrator" else 1

    def default_u(self):
        if self.default_input is None:
            return np.zeros(self.input_dim())
        return np.asarray(self.default_input, dtype=float)

    def bound_model(self):
        return self.bounds.model(self.predictor)


# -- file format ---------------------------------------------------------------

_TOP_KEYS = {
    "name": str, "steps": int, "seed": int, "tau_max": int, "m": int,
    "burn_in": int,
}


def _channel_from(d):
    delay = d.get("delay", {})
    loss = d.get("loss", {})
    base = ChannelSpec()
    return ChannelSpec(
        delay_kind=delay.get("kind", base.delay_kind),
        delay_value=int(delay.get("value", base.delay_value)),
        delay_low=int(delay.get("low", base.delay_low)),
        delay_high=int(delay.get("high", base.delay_high)),
        loss_kind=loss.get("kind", base.loss_kind),
        loss_p=float(loss.get("p", base.loss_p)),
        loss_period=int(loss.get("period", base.loss_period)),
        loss_phase=int(loss.get("phase", base.loss_phase)),
    )


def _channel_to(prefix, c):
    lines = [f'{prefix}.delay.kind = "{c.delay_kind}"']
    if c.delay_kind == "constant":
        lines.append(f"{prefix}.delay.value = {c.delay_value}")
    elif c.delay_kind == "uniform":
        lines += [f"{prefix}.delay.low = {c.delay_low}", f"{prefix}.delay.high = {c.delay_high}"]
    lines.append(f'{prefix}.loss.kind = "{c.loss_kind}"')
    if c.loss_kind == "bernoulli":
        lines.append(f"{prefix}.loss.p = {c.loss_p!r}")
    elif c.loss_kind == "periodic":
        lines += [f"{prefix}.loss.period = {c.loss_period}", f"{prefix}.loss.phase = {c.loss_phase}"]
    return lines


def scenario_from_dict(data):
    fmt = data.get("format")
    if fmt != FORMAT:
        raise ConfigurationError(f"unsupported scenario format {fmt!r}; expected {FORMAT!r}")
    base = Scenario()
    kw = {}
    for key, typ in _TOP_KEYS.items():
        if key in data:
            kw[key] = typ(data[key])
    if "x0" in data:
        kw["x0"] = tuple(float(v) for v in data["x0"])
    if "default_input" in data:
        kw["default_input"] = tuple(float(v) for v in data["default_input"])

    plant = data.get("plant", {})
    kw["plant"] = plant.get("kind", base.plant)
    kw["sample_time"] = float(plant.get("sample_time", base.sample_time))
    kw["predictor"] = plant.get("predictor", base.predictor)
    kw["plant_rate"] = float(plant.get("rate", base.plant_rate))
    kw["disturbance_bound"] = float(data.get("disturbance", {}).get("bound", base.disturbance_bound))

    gen = data.get("generator", {})
    kw["generator"] = gen.get("kind", base.generator)
    if "gain" in gen:
        kw["gain"] = tuple(tuple(float(v) for v in row) for row in gen["gain"])
    if "u_max" in gen:
        kw["u_max"] = float(gen["u_max"]) if gen["u_max"] is not False else None

    mpc = data.get("mpc", {})
    mpc_fields = {f.name: f.type for f in dataclasses.fields(MpcConfig)}
    unknown = set(mpc) - set(mpc_fields)
    if unknown:
        raise ConfigurationError(f"unknown mpc keys: {sorted(unknown)}")
    kw["mpc"] = MpcConfig(**{
        k: (int(v) if k in ("horizon", "quadrature_substeps", "max_iter") else float(v))
        for k, v in mpc.items()
    })

    if "sensor" in data:
        kw["sensor"] = _channel_from(data["sensor"])
    if "actuator" in data:
        kw["actuator"] = _channel_from(data["actuator"])

    b = data.get("bounds", {})
    per = dict((n, (K, o)) for n, K, o in base.bounds.per_predictor)
    for pred in PREDICTORS:
        if pred in b:
            K0, o0 = per[pred]
            per[pred] = (float(b[pred].get("K", K0)), int(b[pred].get("order", o0)))
    kw["bounds"] = BoundSpec(
        lipschitz=float(b.get("lipschitz", base.bounds.lipschitz)),
        h=float(b.get("h", base.bounds.h)),
        growth=b.get("growth", base.bounds.growth),
        rho_scale=float(b.get("rho_scale", base.bounds.rho_scale)),
        per_predictor=tuple((n, K, o) for n, (K, o) in per.items()),
    )
    dev = data.get("deviation", {})
    kw["deviation"] = dev.get("kind", base.deviation)
    if "burn_in" in dev:
        kw["burn_in"] = int(dev["burn_in"])
    return Scenario(**kw)


def load_scenario(path):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return scenario_from_dict(data)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return repr(v)


def dump_scenario(s):
    """Serialize ``s`` in the flat scenario format."""
    lines = [
        f'format = "{FORMAT}"',
        f"name = {_fmt(s.name)}",
        f"steps = {s.steps}",
        f"seed = {s.seed}",
        f"tau_max = {s.tau_max}",
        f"m = {s.m}",
        f"x0 = {_fmt([float(v) for v in s.x0])}",
    ]
    if s.default_input is not None:
        lines.append(f"default_input = {_fmt([float(v) for v in s.default_input])}")
    lines += [
        "",
        f'plant.kind = "{s.plant}"',
        f"plant.sample_time = {s.sample_time!r}",
        f'plant.predictor = "{s.predictor}"',
        f"plant.rate = {s.plant_rate!r}",
        f"disturbance.bound = {s.disturbance_bound!r}",
        "",
        f'generator.kind = "{s.generator}"',
        f"generator.gain = {_fmt([list(r) for r in s.gain])}",
    ]
    lines.append(f"generator.u_max = {'false' if s.u_max is None else repr(s.u_max)}")
    for f in dataclasses.fields(MpcConfig):
        lines.append(f"mpc.{f.name} = {getattr(s.mpc, f.name)!r}")
    lines.append("")
    lines += _channel_to("sensor", s.sensor)
    lines += _channel_to("actuator", s.actuator)
    lines += [
        "",
        f"bounds.lipschitz = {s.bounds.lipschitz!r}",
        f"bounds.h = {s.bounds.h!r}",
        f'bounds.growth = "{s.bounds.growth}"',
        f"bounds.rho_scale = {s.bounds.rho_scale!r}",
    ]
    for name, K, order in s.bounds.per_predictor:
        lines += [f"bounds.{name}.K = {K!r}", f"bounds.{name}.order = {order}"]
    lines += ["", f'deviation.kind = "{s.deviation}"', f"deviation.burn_in = {s.burn_in}", ""]
    return "\n".join(lines)


def bundled_scenario(name):
    """Path of a scenario shipped with the package."""
    path = Path(__file__).resolve().parent.parent / "scenarios" / f"{name}.toml"
    if not path.exists():
        raise ConfigurationError(f"no bundled scenario named {name!r}")
    return path


def resolve_scenario(ref):
    """Load ``ref`` as a path, falling back to a bundled scenario name."""
    p = Path(ref)
    if p.exists():
        return load_scenario(p)
    return load_scenario(bundled_scenario(ref))
