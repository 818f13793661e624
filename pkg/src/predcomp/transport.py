"""Lossy delayed channels, packet ordering and the actuator buffer.

All components read one global integer clock. A channel decides at send
time whether a packet is lost and, if not, when it is delivered.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, NoMeasurementError, StarvationError


@dataclass(frozen=True)
class MeasurementPacket:
    stamp_ns: int
    state: np.ndarray

    def __post_init__(self):
        if self.stamp_ns < 0:
            raise ConfigurationError("measurement stamp must be non-negative")


@dataclass(frozen=True)
class ControlSequencePacket:
    """Control values to apply from ``stamp_n`` onward.

    ``meas_stamp`` is the time stamp of the measurement the prediction
    started from; it is carried for delay bookkeeping only.
    """

    stamp_n: int
    sequence: np.ndarray
    meas_stamp: Optional[int] = None

    def __post_init__(self):
        if len(self.sequence) < 1:
            raise ConfigurationError("control sequence must hold at least one value")

    def __len__(self):
        return len(self.sequence)


@dataclass(frozen=True)
class Delivery:
    packet: object
    send_time: int
    deliver_at: int


# -- delay and loss laws -------------------------------------------------------


def constant_delay(d):
    d = int(d)
    return (lambda send_time, rng: d), d


def uniform_delay(low, high):
    low, high = int(low), int(high)
    if not 0 <= low <= high:
        raise ConfigurationError(f"bad delay range [{low}, {high}]")
    return (lambda send_time, rng: int(rng.integers(low, high + 1))), high


def no_loss():
    return lambda send_time, rng: False


def bernoulli_loss(p):
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"loss probability {p} outside [0, 1]")
    return lambda send_time, rng: bool(rng.random() < p)


def periodic_loss(period, phase=0):
    """Only sends with ``send_time % period == phase`` get through."""
    period, phase = int(period), int(phase)
    if period < 1:
        raise ConfigurationError("loss period must be >= 1")
    return lambda send_time, rng: send_time % period != phase


@dataclass
class ChannelModel:
    delay_fn: Callable[[int, np.random.Generator], int]
    loss_fn: Callable[[int, np.random.Generator], bool]
    delay_bound: int
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @classmethod
    def ideal(cls):
        fn, bound = constant_delay(0)
        return cls(fn, no_loss(), bound)


def send(channel, packet, send_time):
    """Push ``packet`` into ``channel``; returns a :class:`Delivery` or None if lost."""
    if send_time < 0:
        raise ConfigurationError("send_time must be non-negative")
    if channel.loss_fn(send_time, channel.rng):
        return None
    delay = int(channel.delay_fn(send_time, channel.rng))
    if not 0 <= delay <= channel.delay_bound:
        raise ConfigurationError(
            f"delay {delay} at t={send_time} violates channel bound {channel.delay_bound}")
    return Delivery(packet, send_time, send_time + delay)


class EventQueue:
    """Deliveries ordered by (delivery time, send order)."""

    def __init__(self):
        self._heap: List[Tuple[int, int, Delivery]] = []
        self._counter = itertools.count()

    def push(self, delivery):
        heapq.heappush(self._heap, (delivery.deliver_at, next(self._counter), delivery))

    def pop_due(self, now):
        out = []
        while self._heap and self._heap[0][0] <= now:
            out.append(heapq.heappop(self._heap)[2])
        return out

    def __len__(self):
        return len(self._heap)


def resolve_latest(packets):
    """Measurement with the most recent time stamp."""
    packets = list(packets)
    if not packets:
        raise NoMeasurementError("no measurement received")
    return max(packets, key=lambda p: p.stamp_ns)


# -- actuator ------------------------------------------------------------------


@dataclass
class DelayRecord:
    tau_of_sigma: dict
    tau_inf: int
    delta_sigma_inf: int


class ActuatorBuffer:
    """Stores received sequences and applies the one with the newest valid stamp.

    The active packet at time ``n`` is the stored packet with the largest
    ``stamp_n <= n``. Each change of active packet is logged as a switching
    time ``sigma_i`` together with ``tau(sigma_i) = sigma_i - meas_stamp``.
    Before the first activation ``default_input`` is applied.
    """

    def __init__(self, m, default_input):
        if m < 2:
            raise ConfigurationError("buffer length m must be > 1")
        self.m = int(m)
        self.default_input = np.asarray(default_input, dtype=float)
        self.stored: List[ControlSequencePacket] = []
        self.active: Optional[ControlSequencePacket] = None
        self.switch_log: List[Tuple[int, Optional[int]]] = []
        self.activations: List[Tuple[int, ControlSequencePacket]] = []

    @property
    def active_stamp(self):
        return None if self.active is None else self.active.stamp_n

    def insert(self, pkt, now):
        self.stored.append(pkt)
        self.update(now)
        return self

    def update(self, now):
        candidates = [p for p in self.stored if p.stamp_n <= now]
        if not candidates:
            return
        newest = max(candidates, key=lambda p: p.stamp_n)
        if self.active is None or newest.stamp_n > self.active.stamp_n:
            self.active = newest
            tau = None if newest.meas_stamp is None else now - newest.meas_stamp
            self.switch_log.append((now, tau))
            self.activations.append((now, newest))
            # packets older than the active one can never become active again
            self.stored = [p for p in self.stored if p.stamp_n >= newest.stamp_n]

    def read(self, now):
        self.update(now)
        if self.active is None:
            return self.default_input.copy()
        q = now - self.active.stamp_n
        if q >= min(self.m, len(self.active.sequence)):
            raise StarvationError(
                now, f"actuator buffer starved at n={now}: active stamp "
                     f"{self.active.stamp_n} exhausted after {q} steps")
        return np.array(self.active.sequence[q], dtype=float)

    def delay_record(self, end_time=None):
        return delay_record(self.switch_log, end_time)


def buffer_insert(buf, pkt, now):
    return buf.insert(pkt, now)


def buffer_read(buf, now):
    return buf.read(now)


def delay_record(switch_log, end_time=None):
    """Worst-case prediction interval and switching gap of a switch log.

    With ``end_time`` given, the interval from the last switch to
    ``end_time`` counts as a gap as well.
    """
    sigmas = [s for s, _ in switch_log]
    taus = {s: t for s, t in switch_log}
    gaps = list(np.diff(sigmas)) if len(sigmas) > 1 else []
    if end_time is not None and sigmas:
        gaps.append(end_time - sigmas[-1])
    tau_vals = [t for t in taus.values() if t is not None]
    return DelayRecord(
        tau_of_sigma=taus,
        tau_inf=int(max(tau_vals)) if tau_vals else 0,
        delta_sigma_inf=int(max(gaps)) if gaps else 0,
    )
