import warnings

import numpy as np
import pytest

from locrom.assignment import (ExtrapolationWarning, assign, criterion_name, induce_parameter_clusters,
                               is_extrapolation, scores, switch_points)
from locrom.errors import InvalidInputError


def pc_of(groups):
    thetas = np.concatenate(groups)
    labels = np.concatenate([[k] * len(g) for k, g in enumerate(groups)])
    return induce_parameter_clusters(thetas, labels)


def test_induced_statistics():
    pc = pc_of([np.array([10.0, 20.0, 30.0])])
    assert pc.means[0, 0] == 20.0 and pc.midranges[0, 0] == 20.0 and pc.radii[0] == 10.0
    skew = pc_of([np.array([10.0, 10.0, 30.0]), np.array([42.0])])
    assert skew.midranges[0, 0] == 20.0
    assert skew.means[0, 0] == pytest.approx(50.0 / 3.0)
    assert skew.midranges[1, 0] == 42.0 and skew.radii[1] == 0.0


def test_criteria_disagree():
    pc = pc_of([np.array([10.0, 20.0, 30.0]), np.array([40.0, 50.0])])
    np.testing.assert_allclose(scores(34.0, pc, "midrange"), [4.0, 6.0])
    np.testing.assert_allclose(scores(34.0, pc, "mean"), [14.0, 11.0])
    assert assign(34.0, pc, "midrange") == 0
    assert assign(34.0, pc, "mean") == 1
    assert scores(25.0, pc, "midrange")[0] < 0


def test_training_points_map_to_own_cluster():
    groups = [np.linspace(0, 10, 7), np.linspace(11, 12, 4), np.linspace(20, 40, 9)]
    pc = pc_of(groups)
    for k, g in enumerate(groups):
        for t in g:
            assert assign(t, pc, "midrange") == k
    # ties resolve to the lowest index
    tie = pc_of([np.array([0.0]), np.array([2.0])])
    assert assign(1.0, tie, "mean") == 0


def test_extrapolation_clamps_and_warns():
    pc = pc_of([np.array([0.0, 1.0]), np.array([2.0, 3.0])])
    with pytest.warns(ExtrapolationWarning):
        assert assign(-5.0, pc, "midrange") == 0
    with pytest.warns(ExtrapolationWarning):
        assert assign(99.0, pc, "mean") == 1
    assert is_extrapolation(3.5, pc) and not is_extrapolation(2.5, pc)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assign(1.5, pc, "midrange")


def test_switch_points_and_scale_equivariance():
    groups = [np.array([10.0, 12.0, 14.0, 20.0]), np.array([30.0, 31.0]), np.array([50.0, 70.0])]
    pc = pc_of(groups)
    for crit in ("mean", "midrange"):
        sw = switch_points(pc, crit)
        assert len(sw) <= 2
        grid = np.linspace(10, 70, 601)
        labels = [assign(t, pc, crit) for t in grid]
        assert sum(a != b for a, b in zip(labels, labels[1:])) == len(sw)
        scaled = pc_of([3.0 * g - 7.0 for g in groups])
        assert all(assign(t, pc, crit) == assign(3.0 * t - 7.0, scaled, crit) for t in grid)
    mid = switch_points(pc, "midrange")
    assert mid[0] == pytest.approx(25.0, abs=1e-6)  # |t-15|-5 = |t-30.5|-0.5


def test_criterion_names():
    assert criterion_name("mean") == "parameter_mean"
    assert criterion_name("midrange_radius") == "midrange_radius"
    with pytest.raises(InvalidInputError):
        criterion_name("nearest")
    with pytest.raises(InvalidInputError):
        induce_parameter_clusters(np.arange(3.0), np.array([0, 1]))
