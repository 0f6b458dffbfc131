"""Fatigue-aware dependent click model.

A user scans a slate top-down. The item at a position is clicked with
probability ``z = f(h) * u`` where ``u`` is its intrinsic relevance and
``h`` counts the items of the same category shown earlier in the slate.
After a click the user keeps browsing with probability ``g``, after a skip
with probability ``q`` (``q <= g``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Slate = tuple[int, ...]


class ModelError(ValueError):
    """Base class for invalid model inputs."""


class InvalidSlateError(ModelError):
    pass


class DimensionError(ModelError):
    pass


class ModelDegenerateError(ModelError):
    pass


def _as_vector(values: Iterable[float], name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Catalog:
    """Items ``0..N-1`` with a category label each.

    Every category ``0..K-1`` must own at least one item.
    """

    categories: np.ndarray
    n_categories: int = field(init=False)

    def __post_init__(self):
        cats = np.array(self.categories, dtype=np.int64)
        if cats.ndim != 1 or cats.size == 0:
            raise ModelError("catalog needs a non-empty 1-d list of category ids")
        if cats.min() < 0:
            raise ModelError("category ids must be non-negative")
        k = int(cats.max()) + 1
        missing = set(range(k)) - set(cats.tolist())
        if missing:
            raise ModelError(f"categories without items: {sorted(missing)}")
        cats.setflags(write=False)
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "n_categories", k)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "Catalog":
        """Contiguous catalog: the first ``sizes[0]`` items form category 0, etc."""
        if any(s < 1 for s in sizes):
            raise ModelError("every category needs at least one item")
        return cls(np.repeat(np.arange(len(sizes)), sizes))

    @property
    def n_items(self) -> int:
        return int(self.categories.size)

    @property
    def items(self) -> list[tuple[int, int]]:
        return [(i, int(c)) for i, c in enumerate(self.categories)]

    def category(self, item: int) -> int:
        return int(self.categories[item])

    def validate_slate(self, slate: Iterable[int]) -> Slate:
        order = tuple(int(i) for i in slate)
        n = self.n_items
        for i in order:
            if not 0 <= i < n:
                raise InvalidSlateError(f"unknown item id {i} (catalog has {n} items)")
        if len(set(order)) != len(order):
            raise InvalidSlateError(f"slate has duplicate items: {order}")
        return order


@dataclass(frozen=True)
class Relevance:
    """Intrinsic click probabilities ``u``; entries must lie in [0, 1]."""

    u: np.ndarray

    def __post_init__(self):
        u = _as_vector(self.u, "relevance")
        if np.any(u < 0) or np.any(u > 1):
            raise ModelError("relevance entries must lie in [0, 1]")
        object.__setattr__(self, "u", u)

    def __len__(self):
        return self.u.size


@dataclass(frozen=True)
class DiscountCurve:
    """Non-increasing discount ``f(0)=1 >= f(1) >= ... >= f(M)``.

    Queries past the plateau index ``M`` return ``f(M)``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = _as_vector(self.values, "discount")
        if v.size == 0:
            raise ModelError("discount curve needs at least f(0)")
        if not np.isclose(v[0], 1.0, rtol=0, atol=1e-12):
            raise ModelError(f"discount curve must start at f(0)=1, got {v[0]}")
        if np.any(v < 0) or np.any(v > 1 + 1e-12):
            raise ModelError("discount values must lie in [0, 1]")
        if np.any(np.diff(v) > 0):
            raise ModelError("discount curve must be non-increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def exponential(cls, rate: float, plateau_index: int) -> "DiscountCurve":
        """``f(h) = exp(-rate * h)`` for ``h = 0..plateau_index``."""
        if rate < 0:
            raise ModelError("discount rate must be non-negative")
        return cls(np.exp(-rate * np.arange(plateau_index + 1)))

    @classmethod
    def constant(cls, plateau_index: int = 0) -> "DiscountCurve":
        return cls(np.ones(plateau_index + 1))

    @property
    def plateau_index(self) -> int:
        return self.values.size - 1

    def __call__(self, r):
        if np.isscalar(r):
            return float(self.values[min(int(r), self.plateau_index)])
        return self.values[np.minimum(np.asarray(r, dtype=np.int64), self.plateau_index)]


@dataclass(frozen=True)
class BehaviorParams:
    g: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= self.g <= 1.0:
            raise ModelError(f"need 0 <= q <= g <= 1, got g={self.g}, q={self.q}")


@dataclass(frozen=True)
class ModelParams:
    catalog: Catalog
    relevance: Relevance
    discount: DiscountCurve
    behavior: BehaviorParams

    def __post_init__(self):
        if len(self.relevance) != self.catalog.n_items:
            raise DimensionError(
                f"relevance has {len(self.relevance)} entries for {self.catalog.n_items} items"
            )

    @classmethod
    def build(cls, categories, u, f, g: float, q: float) -> "ModelParams":
        catalog = categories if isinstance(categories, Catalog) else Catalog(categories)
        discount = f if isinstance(f, DiscountCurve) else DiscountCurve(f)
        return cls(catalog, Relevance(u), discount, BehaviorParams(g, q))

    @property
    def u(self) -> np.ndarray:
        return self.relevance.u

    @property
    def g(self) -> float:
        return self.behavior.g

    @property
    def q(self) -> float:
        return self.behavior.q


def prefix_counts(slate: Sequence[int], categories: np.ndarray) -> np.ndarray:
    """Unchecked core of :func:`same_category_prefix_counts`."""
    seen: dict[int, int] = {}
    out = np.empty(len(slate), dtype=np.int64)
    for p, item in enumerate(slate):
        c = categories[item]
        k = seen.get(c, 0)
        out[p] = k
        seen[c] = k + 1
    return out


def same_category_prefix_counts(slate: Iterable[int], catalog: Catalog) -> np.ndarray:
    """For each position, the number of earlier items sharing its category."""
    return prefix_counts(catalog.validate_slate(slate), catalog.categories)


def attractiveness_profile(slate: Iterable[int], params: ModelParams) -> np.ndarray:
    """Per-position click probability given examination, ``f(h) * u``."""
    order = params.catalog.validate_slate(slate)
    h = prefix_counts(order, params.catalog.categories)
    return params.discount(h) * params.u[list(order)]


def click_probability(slate: Iterable[int], position: int, params: ModelParams) -> float:
    """Unconditional probability that the item at ``position`` is clicked."""
    z = attractiveness_profile(slate, params)
    if not 0 <= position < z.size:
        raise IndexError(f"position {position} out of range for slate of length {z.size}")
    g, q = params.g, params.q
    reach = 1.0
    for k in range(position):
        reach *= g * z[k] + q * (1.0 - z[k])
    return float(reach * z[position])


def reward_from_attractiveness(z: np.ndarray, g: float, q: float) -> float:
    """Expected clicks of a slate whose per-position attractiveness is ``z``.

    One pass: the examination probability is carried along as a running product.
    """
    total = 0.0
    reach = 1.0
    for zk in z.tolist():
        total += reach * zk
        reach *= q + (g - q) * zk
    return total


def expected_reward(slate: Iterable[int], params: ModelParams) -> float:
    """Expected number of clicks on ``slate``."""
    return reward_from_attractiveness(attractiveness_profile(slate, params), params.g, params.q)


def slate_reward(slate: Sequence[int], categories: np.ndarray, u: np.ndarray,
                 f_values: np.ndarray, g: float, q: float) -> float:
    """Validation-free variant of :func:`expected_reward` for inner loops.

    ``u`` may be any non-negative vector (e.g. optimistic estimates).
    """
    h = prefix_counts(slate, categories)
    z = f_values[np.minimum(h, f_values.size - 1)] * u[np.asarray(slate, dtype=np.int64)]
    return reward_from_attractiveness(z, g, q)
