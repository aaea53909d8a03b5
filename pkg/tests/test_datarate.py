import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etclab import datarate as dr
from etclab.errors import QuantizerTooCoarse, Unsupported
from oracles import etc_bound_direct, etc_bound_psi0


def test_ttc_min_rate():
    assert dr.ttc_min_rate(np.diag([1.0, -2.0, 3.0])) == pytest.approx(4 / math.log(2), abs=1e-12)
    assert dr.ttc_min_rate(-np.eye(3)) == 0.0
    assert dr.ttc_min_rate([[1.0, -2.0], [2.0, 1.0]]) == pytest.approx(2 / math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        dr.ttc_min_rate([[1.0, 2.0]])


def test_etc_bound_examples():
    expected = (1 / (math.log(2) + math.log(4))) * math.log2((math.exp(2) - 1) / 0.5)
    assert dr.etc_rate_lower_bound(1.0, 0.0, 2.0, 0.5, 2.0) == pytest.approx(expected, rel=1e-13)
    assert abs(expected - 1.768) < 1e-3
    assert dr.etc_rate_lower_bound(-1.0, 0.0, 2.0, 0.5, 2.0) == 0.0
    assert dr.etc_rate_lower_bound(1.0, 0.0, 2.0, 0.5, 1e-9) == 0.0
    with pytest.raises(ValueError):
        dr.etc_rate_lower_bound(1.0, 0.0, 1.0, 0.5, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 2.0), st.floats(1.1, 8.0), st.floats(0.05, 0.95), st.floats(0.01, 4.0))
def test_etc_bound_matches_direct_substitution(A, psi, nu, rho0, dbar):
    assert dr.etc_rate_lower_bound(A, psi, nu, rho0, dbar) == pytest.approx(
        etc_bound_direct(A, psi, nu, rho0, dbar), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("A", [0.3, 1.0, 2.5])
@pytest.mark.parametrize("nu", [1.5, 2.0, 5.0])
@pytest.mark.parametrize("rho0", [0.1, 0.5, 0.9])
def test_psi_zero_limit(A, nu, rho0):
    for dbar in (0.2, 1.0, 3.0):
        assert dr.etc_rate_lower_bound(A, 0.0, nu, rho0, dbar) == pytest.approx(
            etc_bound_psi0(A, nu, rho0, dbar), rel=1e-12, abs=1e-14)


def test_breakeven_examples():
    assert dr.breakeven_delay(1.0, 2.0, 0.5) == pytest.approx(math.log(5), abs=1e-12)
    assert dr.breakeven_delay(2.0, 2.0, 0.5) == pytest.approx(math.log(5) / 2, abs=1e-12)
    assert dr.breakeven_delay(1.0, 3.0, 0.5) > dr.breakeven_delay(1.0, 2.0, 0.5)
    with pytest.raises(Unsupported):
        dr.breakeven_delay(0.0, 2.0, 0.5)


@pytest.mark.parametrize("A", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("nu", [1.5, 2.0, 4.0])
@pytest.mark.parametrize("rho0", [0.2, 0.5, 0.8])
def test_breakeven_separates_rates(A, nu, rho0):
    d_star = dr.breakeven_delay(A, nu, rho0)
    r_ttc = dr.ttc_min_rate([[A]])
    for f in (1.05, 1.5, 3.0):
        assert dr.etc_rate_lower_bound(A, 0.0, nu, rho0, f * d_star) > r_ttc
    for f in (0.3, 0.95):
        assert dr.etc_rate_lower_bound(A, 0.0, nu, rho0, f * d_star) < r_ttc


def test_bits_per_event():
    assert dr.bits_per_event(2.0) == 2
    assert dr.bits_per_event(2.5) == 3
    assert dr.bits_per_event(4.0) == 3
    assert dr.bits_per_event(1.5) == 2


def test_channel_spec_validation():
    with pytest.raises(ValueError):
        dr.ChannelSpec(0.1, 1.0, 0.5)
    with pytest.raises(ValueError):
        dr.ChannelSpec(0.1, 2.0, 1.0)
    with pytest.raises(ValueError):
        dr.ChannelSpec(-0.1, 2.0, 0.5)
    assert dr.ChannelSpec(1.0, 2.0, 0.5, psi=0.1).contraction == pytest.approx(0.5 * math.exp(-0.1))


def test_zero_delay_inter_reception_time():
    ch = dr.ChannelSpec(0.0, 2.0, 0.5, psi=0.1, v0=1.0)
    rep = dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=30.0, delay_draw="zero")
    gaps = np.diff(rep.receive_times)
    assert np.allclose(gaps, math.log(2) / 1.1, atol=1e-6)
    # two bits per reception at one reception per ln2/1.1 seconds
    assert 2 / (math.log(2) / 1.1) == pytest.approx(3.174, abs=1e-3)
    rate = rep.bits / rep.receive_times[-1]
    assert rate == pytest.approx(2 / (math.log(2) / 1.1), rel=0.03)


def test_no_events_without_initial_error():
    ch = dr.ChannelSpec(0.3, 2.0, 0.5, psi=0.1)
    rep = dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=50.0, z0=0.0)
    assert rep.events == 0 and rep.bits == 0 and rep.empirical_rate == 0.0


def test_quantizer_too_coarse():
    ch = dr.ChannelSpec(2.0, 2.0, 0.5)
    with pytest.raises(QuantizerTooCoarse):
        dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=5.0)


@pytest.mark.parametrize("correction", ["worst", "midpoint"])
@pytest.mark.parametrize("delay", ["uniform", "max", "zero"])
def test_channel_invariants(correction, delay):
    ch = dr.ChannelSpec(0.4, 3.0, 0.5, psi=0.2)
    rep = dr.simulate_scalar_channel(1.2, 1.0, -3.0, ch, horizon=20.0, delay_draw=delay, seed=4,
                                     correction=correction)
    assert rep.events > 0
    assert np.all(rep.contraction_holds(ch))
    assert np.all(rep.growth_holds(1.2, ch))
    assert np.all(np.diff(rep.send_times) > 0)
    assert np.all(rep.receive_times - rep.send_times <= ch.delta_bar + 1e-15)


def test_callable_delay_and_determinism():
    ch = dr.ChannelSpec(0.4, 3.0, 0.5, psi=0.2)
    draw = lambda g: g.uniform(0.1, 0.4)  # noqa: E731
    a = dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=10.0, delay_draw=draw, seed=9)
    b = dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=10.0, delay_draw=draw, seed=9)
    assert np.array_equal(a.receive_times, b.receive_times)
    with pytest.raises(ValueError):
        dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=10.0, delay_draw=lambda g: 1.0)


def test_sweep_csv():
    ch = dr.ChannelSpec(0.0, 2.0, 0.5, psi=0.1)
    rep = dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch, horizon=5.0, delay_draw="zero")
    buf = io.StringIO()
    dr.write_sweep_csv([dr.sweep_row(1.0, ch, rep)], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(dr.SWEEP_COLUMNS)
    assert len(lines) == 2
