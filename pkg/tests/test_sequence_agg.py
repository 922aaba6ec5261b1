from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_medoid, random_parameter_set
from svcalib.camera_model import ROLES, CameraExtrinsics
from svcalib.errors import CalibrationError
from svcalib.sequence_agg import (
    ParameterSet,
    confidence_weights,
    read_candidates,
    select_parameter_set,
    write_candidates,
)
from svcalib.synth import default_rig

RIG = default_rig()


def with_pitch(offset: float, ts: int = 0, cost: float = 1.0) -> ParameterSet:
    ext = {r: dataclasses.replace(e, pitch=e.pitch + offset) for r, e in RIG.extrinsics.items()}
    return ParameterSet(ext, cost, ts)


# -- the parameter set ------------------------------------------------------------------


def test_parameter_set_validation():
    ext = dict(RIG.extrinsics)
    with pytest.raises(ValueError):
        ParameterSet({k: v for k, v in ext.items() if k is not ROLES[0]})
    with pytest.raises(ValueError):
        ParameterSet(ext, texture_cost=-1.0)
    bad = dict(ext)
    bad[ROLES[2]] = CameraExtrinsics(45.0, 25.0, 0.0)
    with pytest.raises(ValueError):
        ParameterSet(bad)


def test_angle_vector_layout():
    ps = ParameterSet(RIG.extrinsics)
    assert ps.angles.shape == (12,)
    np.testing.assert_array_equal(ps.angles[:3], RIG.extrinsics[ROLES[0]].angles)


def test_json_lines_round_trip(tmp_path, rng):
    sets = [random_parameter_set(rng, i) for i in range(5)]
    sets[2].flags["left_texture_low_confidence"] = True
    p = tmp_path / "candidates.jsonl"
    write_candidates(p, sets)
    assert len(p.read_text().strip().splitlines()) == 5
    back = read_candidates(p)
    for a, b in zip(sets, back):
        assert b.extrinsics == a.extrinsics
        assert (b.texture_cost, b.timestamp, b.flags) == (a.texture_cost, a.timestamp, a.flags)


# -- weights ---------------------------------------------------------------------------


def test_weight_examples():
    assert confidence_weights([with_pitch(0)]).tolist() == [1.0]
    sets = [with_pitch(0, cost=1.0), with_pitch(0, cost=3.0)]
    np.testing.assert_allclose(confidence_weights(sets, "proportional"), [0.25, 0.75])
    np.testing.assert_allclose(confidence_weights(sets, "inverse"), [0.75, 0.25])


def test_all_zero_costs_give_uniform_flagged_weights():
    sets = [with_pitch(0, cost=0.0) for _ in range(4)]
    for mode in ("inverse", "proportional"):
        w, flag = confidence_weights(sets, mode, return_flag=True)
        assert flag and w.tolist() == [0.25] * 4


def test_weight_errors():
    with pytest.raises(CalibrationError):
        confidence_weights([])
    with pytest.raises(ValueError):
        confidence_weights([with_pitch(0)], "median")


@settings(max_examples=100)
@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=50), st.sampled_from(["inverse", "proportional"]))
def test_weights_sum_to_one(costs, mode):
    sets = [with_pitch(0, cost=c) for c in costs]
    w = confidence_weights(sets, mode)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all((w >= 0) & (w <= 1))


# -- medoid ------------------------------------------------------------------------------


def test_single_candidate_is_selected():
    s = with_pitch(0.3)
    assert select_parameter_set([s]) is s


def test_collinear_uniform_picks_middle():
    sets = [with_pitch(-1.0, 0), with_pitch(0.2, 1), with_pitch(1.5, 2)]
    assert select_parameter_set(sets, weights=np.full(3, 1 / 3)) is sets[1]


def test_tie_goes_to_lowest_timestamp():
    sets = [with_pitch(1.0, ts=5), with_pitch(-1.0, ts=2)]
    assert select_parameter_set(sets, weights=[0.5, 0.5]) is sets[1]
    assert select_parameter_set(sets[::-1], weights=[0.5, 0.5]) is sets[1]


def test_empty_selection_fails():
    with pytest.raises(CalibrationError):
        select_parameter_set([])


@settings(max_examples=60)
@given(st.integers(0, 2**31), st.integers(1, 50), st.sampled_from(["inverse", "proportional"]))
def test_medoid_matches_brute_force(seed, n, mode):
    rng = np.random.default_rng(seed)
    sets = [random_parameter_set(rng, i) for i in range(n)]
    w = confidence_weights(sets, mode)
    got = select_parameter_set(sets, mode=mode)
    assert got is sets[brute_medoid([s.angles for s in sets], w, [s.timestamp for s in sets])]


@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_medoid_invariant_to_weight_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    sets = [random_parameter_set(rng, i) for i in range(12)]
    w = confidence_weights(sets)
    assert select_parameter_set(sets, weights=w) is select_parameter_set(sets, weights=scale * w)


@given(st.integers(0, 2**31))
def test_medoid_invariant_to_permutation(seed):
    rng = np.random.default_rng(seed)
    sets = [random_parameter_set(rng, i) for i in range(10)]
    perm = rng.permutation(len(sets))
    assert select_parameter_set(sets) is select_parameter_set([sets[i] for i in perm])


@given(st.integers(0, 2**31))
def test_output_is_a_member(seed):
    rng = np.random.default_rng(seed)
    sets = [random_parameter_set(rng, i) for i in range(int(rng.integers(1, 15)))]
    assert any(select_parameter_set(sets) is s for s in sets)
