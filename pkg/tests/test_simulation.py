import math

import numpy as np
import pytest

from ipwmc.linalg import numerical_rank
from ipwmc.simulation import (SimulationSpec, gen_noise_and_observe, gen_target, gen_theta,
                              noise_sd, stream, target_factor_sd)


def test_spec_validation():
    with pytest.raises(ValueError):
        SimulationSpec(n1=5, n2=5, rank_m=1)
    with pytest.raises(ValueError):
        SimulationSpec(n1=3, n2=5, rank_m=5)
    with pytest.raises(ValueError):
        SimulationSpec(n1=5, n2=5, target_rate=1.0, rank_m=2, rank_a=2)
    with pytest.raises(ValueError):
        SimulationSpec(n1=5, n2=5, snr=0, rank_m=2, rank_a=2)
    with pytest.raises(ValueError):
        SimulationSpec(n1=5, n2=5, link="cauchit", rank_m=2, rank_a=2)


@pytest.mark.parametrize("link", ["logistic", "probit"])
def test_theta_hits_target_rate(link):
    spec = SimulationSpec(n1=50, n2=50, rank_m=2, rank_a=2, seed=3, link=link)
    M, theta = gen_theta(spec)
    assert abs(theta.mean() - 0.2) <= 1e-8
    assert theta.min() > 0 and theta.max() < 1
    M2, theta2 = gen_theta(spec)
    assert np.array_equal(theta, theta2) and np.array_equal(M, M2)


def test_theta_other_rate_and_shift():
    spec = SimulationSpec(n1=30, n2=40, rank_m=4, rank_a=2, seed=1, target_rate=0.65)
    M, theta, c = gen_theta(spec, return_shift=True)
    assert abs(theta.mean() - 0.65) <= 1e-8
    assert numerical_rank(M + c) == 3


def test_target_scale():
    assert target_factor_sd(2) == pytest.approx(math.sqrt(2.5), rel=1e-15)
    assert noise_sd(11, 1.0) == pytest.approx(0.5 * math.sqrt(16.25), rel=1e-15)
    assert noise_sd(11, 1.0) == pytest.approx(2.0156, abs=1e-4)
    assert noise_sd(11, 2.0) == pytest.approx(noise_sd(11, 1.0) / 2)
    assert noise_sd(11, math.inf) == 0.0


def test_target_rank_and_mean():
    spec = SimulationSpec(n1=80, n2=70, rank_m=2, rank_a=4, seed=5)
    A = gen_target(spec)
    assert numerical_rank(A - 2.5) == 3
    sd = target_factor_sd(4) ** 2 * math.sqrt(3)
    assert abs(A.mean() - 2.5) <= 3 * sd / math.sqrt(A.size) * 3


def test_observe_replicates_and_noise_free():
    spec = SimulationSpec(n1=40, n2=30, rank_m=3, rank_a=3, seed=9)
    M, theta = gen_theta(spec)
    A = gen_target(spec)
    Y0, W0 = gen_noise_and_observe(A, theta, spec, 0)
    Y0b, W0b = gen_noise_and_observe(A, theta, spec, 0)
    Y1, W1 = gen_noise_and_observe(A, theta, spec, 1)
    assert np.array_equal(Y0, Y0b) and np.array_equal(W0, W0b)
    assert not np.array_equal(W0, W1) and not np.array_equal(Y0, Y1)
    assert set(np.unique(W0)) <= {0.0, 1.0}
    clean = SimulationSpec(n1=40, n2=30, rank_m=3, rank_a=3, seed=9, snr=math.inf)
    Yc, Wc = gen_noise_and_observe(A, theta, clean, 0)
    np.testing.assert_array_equal(Yc, A)
    np.testing.assert_array_equal(Wc, W0)  # mask stream is independent of the noise
    with pytest.raises(ValueError):
        gen_noise_and_observe(A[:, :-1], theta, spec)


def test_streams_are_distinct():
    draws = {r: stream(0, r).random(4).tolist() for r in ("U", "V", "UA", "VA", "eps", "W")}
    assert len({tuple(v) for v in draws.values()}) == 6
    assert stream(0, "W", 1).random() != stream(0, "W", 2).random()
    with pytest.raises(ValueError):
        stream(0, "bogus")


def test_frozen_first_draws():
    # pins the generator and stream layout; changing either breaks reproducibility
    spec = SimulationSpec(n1=3, n2=2, rank_m=2, rank_a=2, seed=7)
    M, theta = gen_theta(spec)
    A = gen_target(spec)
    _, W = gen_noise_and_observe(A, theta, spec, 0)
    np.testing.assert_allclose(M, [[-2.383233044000679, -1.8182513036798054],
                                   [-0.284078490870858, -0.8682665390429902],
                                   [-2.1920933437864867, -1.7317499058432348]], rtol=1e-12)
    np.testing.assert_allclose(A, [[2.399731518284216, 2.4099872221461602],
                                   [-0.31329329294813, -0.02554282145846276],
                                   [3.801722565862878, 3.6685792199434566]], rtol=1e-12)
    np.testing.assert_array_equal(W, [[0, 0], [0, 1], [1, 0]])
