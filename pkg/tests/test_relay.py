import numpy as np
import pytest

from uavlink.links import make_realization
from uavlink.pso import PsoConfig
from uavlink.relay import (BufferPolicy, ZeroRate, buffered_rate,
                           little_delay, optimize_policy)

CFG = PsoConfig(particles=10, iterations=20)


def test_policy_mode_validation():
    with pytest.raises(ValueError):
        BufferPolicy(loc_rx=[10.0, 10.0], loc_tx=[20.0, 20.0],
                     mode="without_buffer")
    with pytest.raises(ValueError):
        BufferPolicy(loc_rx=[10.0, 10.0], loc_tx=[10.0, 10.0], mode="queued")
    ok = BufferPolicy(loc_rx=[10.0, 10.0], loc_tx=[10.0, 10.0],
                      mode="without_buffer")
    assert ok.p_hat is None


def test_buffered_rate_uses_per_hop_positions(desk_realization, p20_mw,
                                              desk_sigma2):
    rlz = desk_realization
    policy = BufferPolicy(loc_rx=[20.0, 20.0], loc_tx=[80.0, 80.0])
    report = buffered_rate(rlz, policy, p20_mw, desk_sigma2)
    assert report.r1 == rlz.rate_at([20.0, 20.0], p20_mw, desk_sigma2).r1
    assert report.r2 == rlz.rate_at([80.0, 80.0], p20_mw, desk_sigma2).r2
    assert report.r_total == 0.5 * min(report.r1, report.r2)


def test_bufferless_policy_is_single_point(desk_realization, p20_mw,
                                           desk_sigma2):
    rlz = desk_realization
    policy = BufferPolicy(loc_rx=[40.0, 60.0], loc_tx=[40.0, 60.0],
                          mode="without_buffer")
    report = buffered_rate(rlz, policy, p20_mw, desk_sigma2)
    direct = rlz.rate_at([40.0, 60.0], p20_mw, desk_sigma2)
    assert report.r_total == direct.r_total


@pytest.mark.parametrize("optimize_pa", [False, True])
def test_buffer_never_loses_on_a_realization(desk_scenario, p20_mw,
                                             desk_sigma2, optimize_pa):
    for seed in (1, 2, 3):
        rlz = make_realization(desk_scenario, seed)
        plain = optimize_policy(rlz, CFG, p20_mw, desk_sigma2, seed=seed,
                                mode="without_buffer")
        buf = optimize_policy(rlz, CFG, p20_mw, desk_sigma2, seed=seed,
                              mode="with_buffer", optimize_pa=optimize_pa)
        r_plain = buffered_rate(rlz, plain, p20_mw, desk_sigma2).r_total
        r_buf = buffered_rate(rlz, buf, p20_mw, desk_sigma2).r_total
        assert r_buf >= r_plain


def test_optimize_policy_reproducible(desk_realization, p20_mw, desk_sigma2):
    a = optimize_policy(desk_realization, CFG, p20_mw, desk_sigma2, seed=5)
    b = optimize_policy(desk_realization, CFG, p20_mw, desk_sigma2, seed=5)
    assert np.array_equal(a.loc_rx, b.loc_rx)
    assert np.array_equal(a.loc_tx, b.loc_tx)


def test_little_delay_hand_value():
    # 8-bit queue over a 16 bps bottleneck drains in half a second
    assert little_delay(16.0, 20.0, 8.0) == 0.5
    assert little_delay(20.0, 16.0, 8.0) == 0.5
    assert little_delay(4.0, 4.0, 0.0) == 0.0


def test_little_delay_decreases_with_rate():
    delays = [little_delay(r, r + 1.0, 100.0) for r in (1.0, 2.0, 4.0, 8.0)]
    assert all(a > b for a, b in zip(delays, delays[1:]))


def test_little_delay_rejects_degenerate_inputs():
    with pytest.raises(ZeroRate):
        little_delay(0.0, 10.0, 5.0)
    with pytest.raises(ValueError):
        little_delay(1.0, 1.0, -1.0)
