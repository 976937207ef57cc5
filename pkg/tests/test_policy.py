import itertools
import json
import math

import numpy as np
import pytest

from simscope.controls import (
    BackgroundControl,
    ControlDescriptor,
    OrientationControl,
    TextureSwapControl,
    validate_instantiation,
)
from simscope.errors import BudgetError, PolicyError
from simscope.policy import (
    GridPolicy,
    HistoryEntry,
    Policy,
    PolicyProposal,
    RandomPolicy,
    build_space,
    continuous_grid_values,
    make_policy,
    point_to_instantiations,
    register_policy,
)


def drain(policy):
    out = []
    while True:
        batch = policy.next_batch([])
        if not batch:
            return out
        out.extend(batch)


def cont(name, params):
    return ControlDescriptor(name=name, kind="rendered",
                             continuous_params=params)


def disc(name, params):
    return ControlDescriptor(name=name, kind="rendered",
                             discrete_params=params)


class TestBuildSpace:
    def test_dimension_count(self):
        space = build_space([
            cont("orientation", {"yaw": (-math.pi, math.pi)}),
            disc("background", {"environment": ("a", "b", "c")}),
        ])
        assert space.names() == ["orientation.yaw", "background.environment"]

    def test_empty_space_grid_has_one_point(self):
        space = build_space([])
        policy = GridPolicy(space, counts={})
        proposals = drain(policy)
        assert len(proposals) == 1
        assert proposals[0].point == ()

    def test_grid_cardinality_product(self):
        # mirrors the texture x environment scale of the full study:
        # 8 textures x 408 environments = 3264 grid points
        space = build_space([
            disc("texture_swap", {"texture": tuple(f"t{i}" for i in range(8))}),
            disc("background",
                 {"environment": tuple(f"e{i}" for i in range(408))}),
        ])
        assert space.grid_cardinality({}) == 3264

    def test_duplicate_pair_rejected(self):
        d = cont("orientation", {"yaw": (0.0, 1.0)})
        with pytest.raises(PolicyError, match="duplicate"):
            build_space([d, d])

    def test_pinned_param_excluded_from_dimensions(self):
        space = build_space(
            [cont("orientation", {"yaw": (0.0, 1.0), "pitch": (0.0, 1.0)})],
            pinned={"orientation.pitch": 0.25},
        )
        assert space.names() == ["orientation.yaw"]
        assert space.pinned_map == {"orientation.pitch": 0.25}

    def test_pinned_out_of_range(self):
        with pytest.raises(PolicyError, match="outside"):
            build_space([cont("orientation", {"yaw": (0.0, 1.0)})],
                        pinned={"orientation.yaw": 2.0})

    def test_pinned_unknown_param(self):
        with pytest.raises(PolicyError, match="not declared"):
            build_space([cont("orientation", {"yaw": (0.0, 1.0)})],
                        pinned={"scale.factor": 1.0})


class TestGridPolicy:
    def test_even_spacing_includes_endpoints(self):
        assert continuous_grid_values(0.0, 1.0, 3) == [0.0, 0.5, 1.0]

    def test_count_one_is_midpoint(self):
        assert continuous_grid_values(0.0, 1.0, 1) == [0.5]

    def test_lexicographic_product(self):
        space = build_space([
            cont("a", {"p": (0.0, 1.0)}),
            disc("b", {"q": ("x", "y")}),
        ])
        proposals = drain(GridPolicy(space, counts={"a.p": 3}))
        assert len(proposals) == 6
        assert [p.point for p in proposals] == [
            (0.0, 0), (0.0, 1), (0.5, 0), (0.5, 1), (1.0, 0), (1.0, 1),
        ]
        assert [p.configuration_id for p in proposals] == list(range(6))

    def test_two_by_two_matches_enumeration_oracle(self):
        space = build_space([cont("a", {"p": (0.0, 1.0), "q": (0.0, 1.0)})])
        proposals = drain(GridPolicy(space, counts={"a.p": 2, "a.q": 2}))
        oracle = list(itertools.product([0.0, 1.0], [0.0, 1.0]))
        assert [p.point for p in proposals] == oracle

    def test_budget_error(self):
        space = build_space([disc("b", {"q": tuple(range(100))})])
        with pytest.raises(BudgetError, match="budget"):
            GridPolicy(space, counts={}, budget=99)

    def test_missing_count_rejected(self):
        space = build_space([cont("a", {"p": (0.0, 1.0)})])
        with pytest.raises(PolicyError, match="no count"):
            GridPolicy(space, counts={})

    def test_history_ignored(self):
        space = build_space([disc("b", {"q": ("x", "y", "z")})])
        quiet = GridPolicy(space, counts={})
        noisy = GridPolicy(space, counts={})
        history = [HistoryEntry(PolicyProposal(0, (0,)), True, 1.0)]
        a = [p.point for p in quiet.next_batch([])]
        b = [p.point for p in noisy.next_batch(history)]
        assert a == b

    def test_done_after_exhaustion(self):
        space = build_space([disc("b", {"q": ("x", "y")})])
        policy = GridPolicy(space, counts={})
        assert len(drain(policy)) == 2
        assert policy.next_batch([]) == []


class TestRandomPolicy:
    def test_n_zero_empty(self):
        space = build_space([cont("a", {"p": (0.0, 1.0)})])
        assert drain(RandomPolicy(space, n=0, seed=1)) == []

    def test_same_seed_identical_streams(self):
        space = build_space([
            cont("a", {"p": (0.0, 1.0)}),
            disc("b", {"q": ("x", "y", "z")}),
        ])
        one = drain(RandomPolicy(space, n=50, seed=42))
        two = drain(RandomPolicy(space, n=50, seed=42))
        assert json.dumps([p.to_json() for p in one]) == json.dumps(
            [p.to_json() for p in two]
        )

    def test_uniform_mean(self):
        space = build_space([cont("a", {"p": (0.0, 1.0)})])
        points = [p.point[0] for p in drain(RandomPolicy(space, n=10_000,
                                                         seed=7))]
        assert abs(np.mean(points) - 0.5) < 0.02

    def test_ids_sequential(self):
        space = build_space([cont("a", {"p": (0.0, 1.0)})])
        proposals = drain(RandomPolicy(space, n=10, seed=0))
        assert [p.configuration_id for p in proposals] == list(range(10))

    def test_points_always_in_range(self):
        space = build_space([
            cont("a", {"p": (-2.0, 3.0)}),
            disc("b", {"q": tuple(range(5))}),
        ])
        for proposal in drain(RandomPolicy(space, n=200, seed=3)):
            space.validate_point(proposal.point)


class TestPointMapping:
    def test_round_trip_without_range_violations(self):
        orientation = OrientationControl()
        background = BackgroundControl(environment=("a", "b", "c"))
        swap = TextureSwapControl(texture=("t1", "t2"), include_original=True)
        descriptors = [orientation.descriptor, background.descriptor,
                       swap.descriptor]
        space = build_space(descriptors)
        for proposal in drain(RandomPolicy(space, n=100, seed=11)):
            insts = point_to_instantiations(space, descriptors, proposal.point)
            assert [i.control for i in insts] == ["orientation", "background",
                                                  "texture_swap"]
            for control, i in zip((orientation, background, swap), insts):
                validate_instantiation(control.descriptor, i)

    def test_pinned_values_injected(self):
        orientation = OrientationControl()
        space = build_space([orientation.descriptor],
                            pinned={"orientation.pitch": 0.5,
                                    "orientation.roll": 0.0})
        assert space.names() == ["orientation.yaw"]
        (inst,) = point_to_instantiations(space, [orientation.descriptor],
                                          (0.25,))
        assert inst.assignments == {"yaw": 0.25, "pitch": 0.5, "roll": 0.0}

    def test_bad_point_length(self):
        space = build_space([cont("a", {"p": (0.0, 1.0)})])
        with pytest.raises(PolicyError, match="length"):
            space.validate_point((0.5, 0.5))


class TestPolicyInterface:
    def test_threshold_policy_stops_early(self):
        # a feedback policy that stops as soon as observed accuracy > 0.9;
        # on an all-correct history it must stop after its first batch
        class ThresholdPolicy(Policy):
            def __init__(self, space, params, instance_seed):
                self.space = space
                self._inner = GridPolicy(space, counts=params["counts"],
                                         batch_size=params["batch_size"])

            def next_batch(self, history):
                if history:
                    accuracy = sum(e.is_correct for e in history) / len(history)
                    if accuracy > 0.9:
                        return []
                return self._inner.next_batch(history)

        register_policy("threshold_test", ThresholdPolicy)
        space = build_space([disc("b", {"q": tuple(range(20))})])
        policy = make_policy("threshold_test", space,
                             {"counts": {}, "batch_size": 5}, instance_seed=0)
        first = policy.next_batch([])
        assert len(first) == 5
        history = [HistoryEntry(p, True, 1.0) for p in first]
        assert policy.next_batch(history) == []

    def test_unknown_policy_lists_known(self):
        space = build_space([])
        with pytest.raises(PolicyError, match="grid"):
            make_policy("simulated_annealing", space, {}, instance_seed=0)


class TestGridPropertyRandomSchemas:
    def test_fifty_random_schemas_match_oracle(self):
        # count == closed-form product and enumeration == Cartesian oracle
        rng = np.random.default_rng(2024)
        for trial in range(50):
            descriptors, axes, counts = [], [], {}
            for d in range(rng.integers(1, 4)):
                name = f"c{trial}_{d}"
                if rng.random() < 0.5:
                    lo = float(rng.uniform(-5, 0))
                    hi = float(rng.uniform(0.1, 5))
                    count = int(rng.integers(1, 5))
                    descriptors.append(cont(name, {"p": (lo, hi)}))
                    counts[f"{name}.p"] = count
                    axes.append(continuous_grid_values(lo, hi, count))
                else:
                    k = int(rng.integers(1, 6))
                    descriptors.append(disc(name, {"p": tuple(range(k))}))
                    axes.append(list(range(k)))
            space = build_space(descriptors)
            proposals = drain(GridPolicy(space, counts=counts,
                                         batch_size=17))
            oracle = [tuple(p) for p in itertools.product(*axes)]
            assert len(proposals) == space.grid_cardinality(counts)
            assert len(proposals) == int(np.prod([len(a) for a in axes]))
            assert [p.point for p in proposals] == oracle
