"""Second-phase message harmonization."""

import numpy as np
import pytest

from rhslab.bp import ClassicDecoder
from rhslab.channel import ChannelParams, llr_init, transmit_all_zero
from rhslab.harmonize import (HarmonizeConfig, two_phase_decode, vn_harmonize,
                              vn_harmonize_array)


def cfg(d=0.3, interp="lone-dissenter"):
    return HarmonizeConfig(d=d, interpretation=interp)


def test_lone_positive_dissenter_pulls_others_up():
    out = vn_harmonize([2.0, -1.0, -0.5], cfg())
    assert out == pytest.approx([2.0, -0.7, -0.2])


def test_lone_negative_dissenter_pulls_others_down():
    out = vn_harmonize([-2.0, 1.0, 0.5, 3.0], cfg())
    assert out == pytest.approx([-2.0, 0.7, 0.2, 2.7])


def test_balanced_and_unanimous_inputs_are_left_alone():
    for vals in ([1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, 2.0, 3.0],
                 [-1.0, -2.0, -3.0]):
        assert vn_harmonize(vals, cfg()) == pytest.approx(vals)


def test_zero_counts_as_positive_sign():
    # [0, -1, -2]: the zero is the lone non-negative input
    out = vn_harmonize([0.0, -1.0, -2.0], cfg())
    assert out == pytest.approx([0.0, -0.7, -1.7])


def test_degree_two_is_never_harmonized():
    assert vn_harmonize([5.0, -0.1], cfg()) == pytest.approx([5.0, -0.1])


def test_zero_offset_is_identity():
    vals = [3.0, -1.0, -2.0]
    assert vn_harmonize(vals, cfg(d=0.0)) == pytest.approx(vals)


def test_strict_singleton_reading_is_inert():
    vals = [2.0, -1.0, -0.5]
    assert vn_harmonize(vals, cfg(interp="strict-singleton")) == pytest.approx(vals)


def test_config_validation():
    with pytest.raises(ValueError):
        HarmonizeConfig(d=-0.1)
    with pytest.raises(ValueError):
        HarmonizeConfig(interpretation="majority")
    with pytest.raises(ValueError):
        HarmonizeConfig(phase2_iterations=-1)


def test_vectorized_matches_per_node_loop():
    rng = np.random.default_rng(0)
    c = cfg()
    for _ in range(20):
        degs = rng.integers(2, 7, 30)
        ptr = np.concatenate(([0], np.cumsum(degs)))
        vals = rng.normal(0, 2, ptr[-1])
        got = vn_harmonize_array(vals, ptr, c)
        want = np.concatenate([vn_harmonize(vals[ptr[i]:ptr[i + 1]], c)
                               for i in range(degs.size)])
        assert np.allclose(got, want)


def test_two_phase_decode_restores_decoder_config(g36):
    dec = ClassicDecoder(g36, L=2)
    params = ChannelParams(ebn0_db=1.0, rate=0.5)
    y = transmit_all_zero(g36, params, np.random.default_rng(5))
    out = two_phase_decode(g36, llr_init(y, params), dec,
                           HarmonizeConfig(phase2_iterations=3))
    assert dec.harmonize is None
    assert out.phase in (1, 2)
    assert out.iterations_used <= 5


def test_classic_decoder_phase2_recovers_some_failures(g36):
    params = ChannelParams(ebn0_db=1.6, rate=0.5)
    plain = ClassicDecoder(g36, L=6)
    helped = ClassicDecoder(g36, L=6,
                            harmonize=HarmonizeConfig(d=0.3,
                                                      phase2_iterations=20))
    resolved = tried = 0
    for f in range(40):
        y = transmit_all_zero(g36, params, np.random.default_rng(800 + f))
        w = llr_init(y, params)
        if plain.decode(w).converged:
            continue
        tried += 1
        out = helped.decode(w)
        if out.converged:
            assert out.phase == 2
            resolved += 1
    assert tried >= 5
    assert resolved >= 1
