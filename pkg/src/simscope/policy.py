"""Search-space construction and the policies that propose points in it.

A policy instance is a stateful iterator owned by the orchestrator (one per
environment/mesh pair); ``next_batch`` receives the history of finished
results so custom policies can adapt, while the built-in grid and random
policies are open-loop and ignore it. An empty batch means the policy is
exhausted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .controls import ControlDescriptor, ControlInstantiation
from .errors import BudgetError, PolicyError

DEFAULT_BATCH_SIZE = 32
DEFAULT_PROPOSAL_BUDGET = 1_000_000


@dataclass(frozen=True)
class Dimension:
    control: str
    param: str
    kind: str  # "continuous" | "discrete"
    lo: float | None = None
    hi: float | None = None
    cardinality: int | None = None
    values: tuple | None = None  # discrete labels, for reports/dashboards

    def __post_init__(self):
        if self.kind == "continuous":
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise PolicyError(f"dimension {self.name}: needs lo < hi")
        elif self.kind == "discrete":
            if not self.cardinality or self.cardinality < 1:
                raise PolicyError(f"dimension {self.name}: cardinality must be >= 1")
        else:
            raise PolicyError(f"dimension {self.name}: bad kind {self.kind!r}")

    @property
    def name(self) -> str:
        return f"{self.control}.{self.param}"

    def contains(self, value) -> bool:
        if self.kind == "continuous":
            return self.lo <= value <= self.hi
        return isinstance(value, (int, np.integer)) and 0 <= value < self.cardinality

    def to_json(self) -> dict:
        out = {"control": self.control, "param": self.param, "kind": self.kind}
        if self.kind == "continuous":
            out.update(lo=self.lo, hi=self.hi)
        else:
            out.update(cardinality=self.cardinality,
                       values=list(self.values) if self.values else None)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Dimension":
        return cls(
            control=data["control"], param=data["param"], kind=data["kind"],
            lo=data.get("lo"), hi=data.get("hi"),
            cardinality=data.get("cardinality"),
            values=tuple(data["values"]) if data.get("values") else None,
        )


@dataclass(frozen=True)
class SearchSpace:
    """Ordered dimensions plus pinned (fixed, unsearched) assignments keyed
    by "control.param"."""

    dimensions: tuple[Dimension, ...]
    pinned: tuple = ()  # sorted (name, raw value) pairs

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise PolicyError("duplicate (control, param) dimension")

    @property
    def pinned_map(self) -> dict:
        return dict(self.pinned)

    def grid_cardinality(self, counts: dict[str, int]) -> int:
        total = 1
        for dim in self.dimensions:
            total *= counts[dim.name] if dim.kind == "continuous" else dim.cardinality
        return total

    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def validate_point(self, point) -> None:
        if len(point) != len(self.dimensions):
            raise PolicyError(
                f"point length {len(point)} != {len(self.dimensions)} dimensions"
            )
        for dim, value in zip(self.dimensions, point):
            if not dim.contains(value):
                raise PolicyError(f"dimension {dim.name}: value {value!r} out of range")

    def to_json(self) -> dict:
        return {
            "dimensions": [d.to_json() for d in self.dimensions],
            "pinned": {k: v for k, v in self.pinned},
        }

    @classmethod
    def from_json(cls, data: dict) -> "SearchSpace":
        return cls(
            dimensions=tuple(Dimension.from_json(d) for d in data["dimensions"]),
            pinned=tuple(sorted(data.get("pinned", {}).items())),
        )


@dataclass(frozen=True)
class PolicyProposal:
    configuration_id: int  # local to the issuing policy instance
    point: tuple  # one raw value per dimension: float, or index for discrete

    def to_json(self) -> dict:
        return {"id": self.configuration_id, "point": list(self.point)}


@dataclass(frozen=True)
class HistoryEntry:
    proposal: PolicyProposal
    is_correct: bool | None
    score: float = 0.0


def build_space(descriptors, pinned: dict | None = None) -> SearchSpace:
    """Dimensions in control-declaration order, each control's params in
    schema order; params named in ``pinned`` are fixed instead of searched."""
    pinned = dict(pinned or {})
    dims: list[Dimension] = []
    seen = set()
    for desc in descriptors:
        if not isinstance(desc, ControlDescriptor):
            raise PolicyError(f"not a control descriptor: {desc!r}")
        for pname, (lo, hi) in desc.continuous_params.items():
            key = f"{desc.name}.{pname}"
            if key in seen:
                raise PolicyError(f"duplicate (control, param) pair {key}")
            seen.add(key)
            if key in pinned:
                value = float(pinned[key])
                if not lo <= value <= hi:
                    raise PolicyError(f"pinned {key}={value} outside [{lo}, {hi}]")
                continue
            dims.append(Dimension(desc.name, pname, "continuous", lo=lo, hi=hi))
        for pname, values in desc.discrete_params.items():
            key = f"{desc.name}.{pname}"
            if key in seen:
                raise PolicyError(f"duplicate (control, param) pair {key}")
            seen.add(key)
            if key in pinned:
                idx = pinned[key]
                if not isinstance(idx, (int, np.integer)) or not 0 <= idx < len(values):
                    raise PolicyError(f"pinned {key}={idx!r} is not a valid index")
                continue
            dims.append(Dimension(desc.name, pname, "discrete",
                                  cardinality=len(values), values=tuple(values)))
    unknown = set(pinned) - seen
    if unknown:
        raise PolicyError(f"pinned params not declared by any control: {sorted(unknown)}")
    return SearchSpace(
        dimensions=tuple(dims),
        pinned=tuple(sorted(pinned.items())),
    )


def point_to_instantiations(space: SearchSpace, descriptors, point) -> list[ControlInstantiation]:
    """Map a raw proposal point (plus the space's pinned values) back to one
    instantiation per control, in descriptor order. Values are re-validated
    by instantiation, so a policy bug cannot smuggle an out-of-range value."""
    space.validate_point(point)
    by_name = dict(space.pinned)
    for dim, value in zip(space.dimensions, point):
        by_name[dim.name] = (
            int(value) if dim.kind == "discrete" else float(value)
        )
    insts = []
    for desc in descriptors:
        assignments = {}
        for pname in desc.param_names:
            key = f"{desc.name}.{pname}"
            if key not in by_name:
                raise PolicyError(f"no value for declared param {key}")
            assignments[pname] = by_name[key]
        insts.append(ControlInstantiation(control=desc.name, assignments=assignments))
    return insts


def continuous_grid_values(lo: float, hi: float, count: int) -> list[float]:
    """Evenly spaced sweep including both endpoints; count 1 is the midpoint."""
    if count < 1:
        raise PolicyError(f"grid count must be >= 1, got {count}")
    if count == 1:
        return [(lo + hi) / 2.0]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count - 1)] + [hi]


class Policy:
    """Contract: ``next_batch`` returns newly proposed configurations (empty
    list when done) and must never reissue a configuration id."""

    def next_batch(self, history: list[HistoryEntry]) -> list[PolicyProposal]:
        raise NotImplementedError


class GridPolicy(Policy):
    """Exhaustive sweep in lexicographic order, last dimension fastest."""

    def __init__(self, space: SearchSpace, counts: dict[str, int],
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 budget: int = DEFAULT_PROPOSAL_BUDGET):
        for dim in space.dimensions:
            if dim.kind == "continuous" and dim.name not in counts:
                raise PolicyError(f"grid policy: no count for continuous dim {dim.name}")
        self.space = space
        self.counts = dict(counts)
        self.total = space.grid_cardinality(self.counts)
        if self.total > budget:
            raise BudgetError(
                f"grid would emit {self.total} proposals, over the budget of {budget}"
            )
        self.batch_size = batch_size
        axes = []
        for dim in space.dimensions:
            if dim.kind == "continuous":
                axes.append(continuous_grid_values(dim.lo, dim.hi, self.counts[dim.name]))
            else:
                axes.append(list(range(dim.cardinality)))
        self._iter = itertools.product(*axes)
        self._next_id = 0

    def next_batch(self, history):
        batch = []
        for point in itertools.islice(self._iter, self.batch_size):
            batch.append(PolicyProposal(self._next_id, tuple(point)))
            self._next_id += 1
        return batch


class RandomPolicy(Policy):
    """n independent uniform samples; bit-identical streams per seed."""

    def __init__(self, space: SearchSpace, n: int, seed: int,
                 batch_size: int = DEFAULT_BATCH_SIZE):
        if n < 0:
            raise PolicyError(f"random policy: n must be >= 0, got {n}")
        self.space = space
        self.total = int(n)
        self._rng = np.random.default_rng(seed)
        self.batch_size = batch_size
        self._next_id = 0

    def _sample(self):
        point = []
        for dim in self.space.dimensions:
            if dim.kind == "continuous":
                point.append(float(self._rng.uniform(dim.lo, dim.hi)))
            else:
                point.append(int(self._rng.integers(0, dim.cardinality)))
        return tuple(point)

    def next_batch(self, history):
        batch = []
        while self._next_id < self.total and len(batch) < self.batch_size:
            batch.append(PolicyProposal(self._next_id, self._sample()))
            self._next_id += 1
        return batch


_policy_types = {}


def register_policy(name: str, factory) -> None:
    if name in _policy_types:
        raise PolicyError(f"policy {name!r} already registered")
    _policy_types[name] = factory


def make_policy(name: str, space: SearchSpace, params: dict,
                instance_seed: int) -> Policy:
    """Build one policy instance; ``instance_seed`` already mixes the
    experiment seed with the instance index so replays are bit-identical."""
    params = dict(params or {})
    if name == "grid":
        return GridPolicy(
            space,
            counts=dict(params.get("counts", {})),
            batch_size=int(params.get("batch_size", DEFAULT_BATCH_SIZE)),
            budget=int(params.get("budget", DEFAULT_PROPOSAL_BUDGET)),
        )
    if name == "random":
        return RandomPolicy(
            space,
            n=int(params.get("n", 0)),
            seed=instance_seed,
            batch_size=int(params.get("batch_size", DEFAULT_BATCH_SIZE)),
        )
    if name in _policy_types:
        return _policy_types[name](space=space, params=params,
                                   instance_seed=instance_seed)
    known = ["grid", "random"] + sorted(_policy_types)
    raise PolicyError(f"unknown policy {name!r}; known: {known}")
