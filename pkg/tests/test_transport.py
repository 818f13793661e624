import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predcomp.errors import ConfigurationError, NoMeasurementError, StarvationError
from predcomp.transport import (
    ActuatorBuffer,
    ChannelModel,
    ControlSequencePacket,
    EventQueue,
    MeasurementPacket,
    bernoulli_loss,
    buffer_insert,
    buffer_read,
    constant_delay,
    delay_record,
    no_loss,
    periodic_loss,
    resolve_latest,
    send,
    uniform_delay,
)


def meas(stamp):
    return MeasurementPacket(stamp, np.array([float(stamp)]))


def seq(stamp, values, meas_stamp=None):
    return ControlSequencePacket(stamp, np.array(values, dtype=float).reshape(len(values), 1), meas_stamp)


def test_ideal_channel_delivers_immediately():
    d = send(ChannelModel.ideal(), meas(4), 4)
    assert d.deliver_at == 4 and d.send_time == 4


def test_constant_delay_three():
    fn, bound = constant_delay(3)
    ch = ChannelModel(fn, no_loss(), bound)
    assert all(send(ch, meas(t), t).deliver_at == t + 3 for t in range(100))


def test_every_third_success_pattern():
    ch = ChannelModel(*constant_delay(0)[:1], periodic_loss(3, 0), 0)
    delivered = [t for t in range(30) if send(ch, meas(t), t) is not None]
    assert delivered == list(range(0, 30, 3))
    # with one measurement per step the newest stamp lags n_c by 0, 1, 2
    lag = [t - max(s for s in delivered if s <= t) for t in range(30)]
    assert lag == [0, 1, 2] * 10
    assert sum(1 for g in lag if g == 2) == 10


def test_uniform_delay_within_bound():
    fn, bound = uniform_delay(1, 4)
    ch = ChannelModel(fn, no_loss(), bound, np.random.default_rng(3))
    delays = [send(ch, meas(t), t).deliver_at - t for t in range(500)]
    assert min(delays) == 1 and max(delays) == 4


def test_delay_above_bound_raises():
    ch = ChannelModel(lambda t, rng: 5, no_loss(), 3)
    with pytest.raises(ConfigurationError):
        send(ch, meas(0), 0)


def test_bernoulli_loss_rate():
    ch = ChannelModel(constant_delay(0)[0], bernoulli_loss(0.25), 0, np.random.default_rng(9))
    lost = sum(send(ch, meas(t), t) is None for t in range(20000))
    assert abs(lost / 20000 - 0.25) < 0.015


def test_bad_loss_parameters():
    with pytest.raises(ConfigurationError):
        bernoulli_loss(1.5)
    with pytest.raises(ConfigurationError):
        periodic_loss(0)
    with pytest.raises(ConfigurationError):
        uniform_delay(3, 1)


def test_event_queue_orders_by_time_then_send_order():
    q = EventQueue()
    ch = ChannelModel.ideal()
    for t, due in [(0, 5), (1, 3), (2, 5), (3, 4)]:
        q.push(send(ChannelModel(constant_delay(due - t)[0], no_loss(), 10), meas(t), t))
    assert [d.packet.stamp_ns for d in q.pop_due(4)] == [1, 3]
    assert [d.packet.stamp_ns for d in q.pop_due(5)] == [0, 2]
    assert len(q) == 0


def test_resolve_latest():
    assert resolve_latest([meas(3), meas(5), meas(4)]).stamp_ns == 5
    p = meas(2)
    assert resolve_latest([p]) is p
    with pytest.raises(NoMeasurementError):
        resolve_latest([])


def test_resolve_latest_any_arrival_order():
    for order in itertools.permutations([3, 4, 5]):
        seen = []
        for s in order:
            seen.append(meas(s))
        assert resolve_latest(seen).stamp_ns == 5


def test_first_activation_waits_for_stamp():
    buf = ActuatorBuffer(3, [0.0])
    buffer_insert(buf, seq(5, [1, 2, 3], 2), 4)
    assert buf.active is None
    assert buffer_read(buf, 4)[0] == 0.0  # default input before first activation
    assert buffer_read(buf, 5)[0] == 1.0
    assert buf.switch_log == [(5, 3)]


def test_switch_to_newer_stamp():
    buf = ActuatorBuffer(5, [0.0])
    buffer_insert(buf, seq(5, [1, 2, 3, 4, 5]), 5)
    buffer_read(buf, 5)
    buffer_insert(buf, seq(8, [10, 20, 30]), 7)
    assert buffer_read(buf, 7)[0] == 3.0
    assert buffer_read(buf, 8)[0] == 10.0
    sigmas = [s for s, _ in buf.switch_log]
    assert sigmas == [5, 8] and np.diff(sigmas)[0] == 3


def test_stale_packet_never_activates():
    buf = ActuatorBuffer(5, [0.0])
    buffer_insert(buf, seq(8, [1, 2, 3]), 8)
    buffer_insert(buf, seq(3, [9, 9, 9]), 9)
    assert buf.active_stamp == 8
    assert buffer_read(buf, 9)[0] == 2.0
    assert len(buf.switch_log) == 1


def test_read_indexes():
    buf = ActuatorBuffer(3, [0.0])
    buffer_insert(buf, seq(5, [1, 2, 3]), 5)
    assert buffer_read(buf, 5)[0] == 1.0
    assert buffer_read(buf, 6)[0] == 2.0


def test_starvation():
    buf = ActuatorBuffer(3, [0.0])
    buffer_insert(buf, seq(5, [1, 2, 3, 4]), 5)
    buffer_read(buf, 7)
    with pytest.raises(StarvationError) as exc:
        buffer_read(buf, 8)
    assert exc.value.now == 8


def test_buffer_length_must_exceed_one():
    with pytest.raises(ConfigurationError):
        ActuatorBuffer(1, [0.0])


def test_delay_record_includes_tail():
    rec = delay_record([(2, 3), (3, 4), (7, 2)], end_time=9)
    assert rec.tau_inf == 4
    assert rec.delta_sigma_inf == 4
    assert delay_record([(2, 3), (3, 4), (7, 2)], end_time=20).delta_sigma_inf == 13


@settings(max_examples=60, deadline=None)
@given(events=st.lists(st.tuples(st.integers(0, 30), st.integers(0, 6)), min_size=1, max_size=25))
def test_active_stamp_monotone_and_maximal(events):
    """Random arrivals: the active packet is the newest stamp <= now, never moving back."""
    events = sorted(events)
    buf = ActuatorBuffer(50, [0.0])
    stored = []
    last = None
    for now, lead in events:
        pkt = seq(now + lead, [float(now + lead)] * 50)
        buf.insert(pkt, now)
        stored.append(pkt)
        buf.update(now)
        valid = [p.stamp_n for p in stored if p.stamp_n <= now]
        if valid:
            assert buf.active_stamp == max(valid)
        if last is not None and buf.active_stamp is not None:
            assert buf.active_stamp >= last
        last = buf.active_stamp
    sigmas = [s for s, _ in buf.switch_log]
    assert sigmas == sorted(set(sigmas))


@settings(max_examples=60, deadline=None)
@given(low=st.integers(0, 5), span=st.integers(0, 5), seed=st.integers(0, 2**32 - 1))
def test_delivery_never_exceeds_bound(low, span, seed):
    fn, bound = uniform_delay(low, low + span)
    ch = ChannelModel(fn, bernoulli_loss(0.3), bound, np.random.default_rng(seed))
    for t in range(50):
        d = send(ch, meas(t), t)
        if d is not None:
            assert 0 <= d.deliver_at - d.send_time <= bound
