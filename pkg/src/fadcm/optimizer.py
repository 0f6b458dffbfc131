"""Offline slate optimization.

:func:`optimal_slate` ranks items by discounted attractiveness: each item's
relevance is discounted by its rank within its own category, then all items
are sorted globally. :func:`brute_force_slate` enumerates every ordering and
is only meant as a testing oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (Catalog, DimensionError, DiscountCurve, ModelError, ModelParams, Slate,
                    expected_reward)


class CapacityError(ModelError):
    """Raised when exhaustive enumeration would be too large."""


DEFAULT_MAX_ORDERINGS = math.factorial(8)


@dataclass(frozen=True)
class RankedScore:
    item_id: int
    lam: float


def _discount_values(f) -> np.ndarray:
    if isinstance(f, DiscountCurve):
        return f.values
    return np.asarray(f, dtype=float)


def discounted_scores(catalog: Catalog, u, f) -> np.ndarray:
    """``lambda_j = u_j * f(rank of j among its category by u, descending)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (catalog.n_items,):
        raise DimensionError(f"u has shape {u.shape}, catalog has {catalog.n_items} items")
    fv = _discount_values(f)
    cats = catalog.categories
    ids = np.arange(u.size)
    by_cat = np.lexsort((ids, -u, cats))
    sorted_cats = cats[by_cat]
    starts = np.searchsorted(sorted_cats, sorted_cats, side="left")
    rank = np.empty(u.size, dtype=np.int64)
    rank[by_cat] = np.arange(u.size) - starts
    return u * fv[np.minimum(rank, fv.size - 1)]


def ranked_scores(catalog: Catalog, u, f) -> list[RankedScore]:
    lam = discounted_scores(catalog, u, f)
    return [RankedScore(int(j), float(lam[j])) for j in np.lexsort((np.arange(lam.size), -lam))]


def optimal_slate(catalog: Catalog, u, f, max_len: Optional[int] = None) -> Slate:
    """Reward-maximizing slate for relevance ``u`` and discount ``f``.

    The result does not depend on the resume probabilities. Ties in the
    discounted score go to the smaller item id. ``max_len`` keeps the first
    ``max_len`` entries of the full ordering.
    """
    lam = discounted_scores(catalog, u, f)
    order = np.lexsort((np.arange(lam.size), -lam))
    if max_len is not None:
        if not 0 <= max_len <= catalog.n_items:
            raise ValueError(f"max_len must be in [0, {catalog.n_items}], got {max_len}")
        order = order[:max_len]
    return tuple(order.tolist())


def batch_rewards(perms: np.ndarray, params: ModelParams) -> np.ndarray:
    """Expected reward of every row of ``perms`` (shape ``(P, L)``), vectorized."""
    perms = np.asarray(perms, dtype=np.int64)
    n_rows, length = perms.shape
    if length == 0:
        return np.zeros(n_rows)
    cats = params.catalog.categories[perms]
    onehot = cats[:, :, None] == np.arange(params.catalog.n_categories)[None, None, :]
    seen = np.cumsum(onehot, axis=1) - onehot
    h = np.take_along_axis(seen, cats[:, :, None], axis=2)[:, :, 0]
    z = params.discount(h) * params.u[perms]
    stay = params.q + (params.g - params.q) * z
    reach = np.ones_like(z)
    reach[:, 1:] = np.cumprod(stay[:, :-1], axis=1)
    return np.sum(reach * z, axis=1)


def brute_force_slate(catalog: Catalog, params: ModelParams, max_len: Optional[int] = None,
                      max_orderings: int = DEFAULT_MAX_ORDERINGS,
                      chunk: int = 50_000) -> tuple[Slate, float]:
    """Exhaustive search over all ordered selections of ``max_len`` items.

    Returns the lexicographically first maximizer and its reward.
    """
    if catalog is not params.catalog and not np.array_equal(catalog.categories,
                                                            params.catalog.categories):
        raise DimensionError("catalog does not match params.catalog")
    n = catalog.n_items
    length = n if max_len is None else max_len
    if not 0 <= length <= n:
        raise ValueError(f"max_len must be in [0, {n}], got {length}")
    count = math.perm(n, length)
    if count > max_orderings:
        raise CapacityError(f"{count} orderings exceed the cap of {max_orderings}")

    best_slate: Slate = ()
    best = -math.inf
    perms = itertools.permutations(range(n), length)
    while True:
        block = list(itertools.islice(perms, chunk))
        if not block:
            break
        rewards = batch_rewards(np.array(block, dtype=np.int64).reshape(len(block), length), params)
        k = int(np.argmax(rewards))
        if rewards[k] > best:
            best = float(rewards[k])
            best_slate = tuple(block[k])
    return best_slate, best


def random_instance(rng: np.random.Generator, max_n: int = 7, max_k: int = 3) -> ModelParams:
    """Random small model: every category non-empty, non-increasing f, 0 <= q <= g <= 1."""
    n = int(rng.integers(1, max_n + 1))
    k = int(rng.integers(1, min(max_k, n) + 1))
    cats = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
    rng.shuffle(cats)
    f = np.concatenate([[1.0], np.sort(rng.random(n))[::-1]])
    g = float(rng.random())
    q = float(rng.uniform(0.0, g))
    return ModelParams.build(cats, rng.random(n), f, g, q)


@dataclass
class OracleCheckResult:
    passed: int
    failed: int
    worst_gap: float

    @property
    def ok(self) -> bool:
        return self.failed == 0


def oracle_check(n_instances: int = 1000, max_n: int = 7, seed: int = 0, tol: float = 1e-12,
                 corrupt: bool = False) -> OracleCheckResult:
    """Compare :func:`optimal_slate` against exhaustive search on random instances.

    ``corrupt`` drops the discount from the ranking scores; it exists so the
    check can be seen to fail.
    """
    if max_n > 8:
        raise CapacityError(f"max_n={max_n} exceeds 8; exhaustive search would be too slow")
    rng = np.random.default_rng(seed)
    passed = failed = 0
    worst = 0.0
    for _ in range(n_instances):
        params = random_instance(rng, max_n)
        f = np.ones(1) if corrupt else params.discount
        slate = optimal_slate(params.catalog, params.u, f)
        _, best = brute_force_slate(params.catalog, params)
        gap = abs(best - expected_reward(slate, params))
        worst = max(worst, gap)
        if gap <= tol:
            passed += 1
        else:
            failed += 1
    return OracleCheckResult(passed, failed, worst)
