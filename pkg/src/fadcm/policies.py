"""Learning policies.

Every policy exposes ``select_slate(t)`` for round ``t = 1, 2, ...`` and
``observe(record, t)`` with the feedback of that round.

* :class:`FaDcmP` learns relevance when the discount curve is known.
* :class:`FaDcm` learns relevance and discount jointly, with forced
  exploration of under-sampled items and a monotone repair of the
  optimistic discount curve.
* :class:`ExploreThenExploit` is the random-exploration benchmark.
* :class:`OraclePolicy` always plays the true optimum.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .model import Catalog, DiscountCurve, ModelDegenerateError, ModelParams, Slate
from .optimizer import optimal_slate
from .simulator import InteractionRecord, extract_events


def _log(t: float) -> float:
    return math.log(t) if t > 1 else 0.0


def monotone_repair(f_ucb) -> np.ndarray:
    """Forward clip so that every entry is at most its predecessor."""
    return np.minimum.accumulate(np.asarray(f_ucb, dtype=float))


class Policy:
    name = "policy"

    def select_slate(self, t: int) -> Slate:
        raise NotImplementedError

    def observe(self, record: InteractionRecord, t: int) -> None:
        pass

    def to_dict(self) -> dict:
        return {"policy": self.name}


class OraclePolicy(Policy):
    """Plays the optimal slate for the true parameters every round."""

    name = "oracle"

    def __init__(self, truth: ModelParams, max_len: Optional[int] = None):
        self.slate = optimal_slate(truth.catalog, truth.u, truth.discount, max_len)

    def select_slate(self, t: int) -> Slate:
        return self.slate

    def to_dict(self) -> dict:
        return {"policy": self.name, "slate": list(self.slate)}


class FaDcmP(Policy):
    """UCB on relevance with a known discount curve.

    Each examined item contributes ``click / f(h)`` to its relevance
    estimate, which makes the estimate unbiased whatever its position.
    ``exploration_scale`` multiplies the confidence bonus (1 = textbook width).
    """

    name = "fadcmp"

    def __init__(self, catalog: Catalog, discount: DiscountCurve, max_len: Optional[int] = None,
                 exploration_scale: float = 1.0):
        self.catalog = catalog
        self.discount = discount
        self.max_len = max_len
        self.exploration_scale = exploration_scale
        n = catalog.n_items
        self.counts = np.zeros(n, dtype=np.int64)
        self.sums = np.zeros(n)
        self.u_ucb = np.ones(n)
        self.t = 0

    def ucb(self, t: float) -> np.ndarray:
        seen = self.counts > 0
        out = np.ones(self.counts.size)
        n = self.counts[seen]
        out[seen] = self.sums[seen] / n + self.exploration_scale * np.sqrt(2.0 * _log(t) / n)
        return out

    def estimates(self) -> np.ndarray:
        return np.divide(self.sums, self.counts, out=np.full(self.sums.size, np.nan),
                         where=self.counts > 0)

    def select_slate(self, t: int) -> Slate:
        return optimal_slate(self.catalog, self.u_ucb, self.discount, self.max_len)

    def observe(self, record: InteractionRecord, t: int) -> None:
        for ev in extract_events(record, self.catalog):
            f = self.discount(ev.discount_index)
            if f <= 0:
                raise ModelDegenerateError(f"f({ev.discount_index}) = 0; relevance is unidentifiable")
            self.counts[ev.item_id] += 1
            self.sums[ev.item_id] += ev.click / f
        self.t = t
        self.u_ucb = self.ucb(t)

    def to_dict(self) -> dict:
        return {
            "policy": self.name,
            "t": self.t,
            "counts": self.counts.tolist(),
            "reweighted_click_sums": self.sums.tolist(),
            "u_ucb": self.u_ucb.tolist(),
        }


class _EventTable:
    """Counts ``T[i, j]`` and clicks ``C[i, j]`` of item ``j`` seen at discount index ``i``.

    Indices at or beyond the plateau ``M`` are pooled into row ``M``.
    """

    def __init__(self, n_items: int, plateau_index: int):
        self.plateau_index = plateau_index
        self.T = np.zeros((plateau_index + 1, n_items), dtype=np.int64)
        self.C = np.zeros((plateau_index + 1, n_items), dtype=np.int64)

    def add(self, i: int, j: int, z: int) -> None:
        i = min(i, self.plateau_index)
        self.T[i, j] += 1
        self.C[i, j] += z

    def add_record(self, record: InteractionRecord, catalog: Catalog) -> int:
        events = extract_events(record, catalog)
        for ev in events:
            self.add(ev.discount_index, ev.item_id, ev.click)
        return len(events)

    @property
    def first_counts(self) -> np.ndarray:
        return self.T[0]

    @property
    def index_totals(self) -> np.ndarray:
        return self.T.sum(axis=1)

    def relevance_means(self) -> tuple[np.ndarray, np.ndarray]:
        """Click rate over first-of-category exposures, and a mask of where it is defined."""
        t0 = self.T[0]
        seen = t0 > 0
        mean = np.zeros(t0.size)
        mean[seen] = self.C[0, seen] / t0[seen]
        return mean, seen


class FaDcm(Policy):
    """UCB on relevance and discount, both unknown.

    Relevance is estimated from first-of-category exposures only. The
    discount at index ``i`` is estimated by reweighting the clicks seen at
    that index with the inverse relevance estimate; its bonus carries the
    relevance uncertainty through the ``1/u`` map.

    ``threshold`` selects the forced-exploration level: ``"anytime"`` uses
    ``alpha * t**(2/3)``, ``"horizon"`` uses ``alpha * T**(2/3)``.
    ``exploration_count`` is ``"first"`` (first-of-category exposures) or
    ``"all"`` (every exposure). ``delta_form="printed"`` swaps the default
    ``(1 - eps/u)**-1`` factor of the bonus for ``(1 - eps/u)``.
    ``exploration_scale`` multiplies both confidence bonuses (1 = textbook width).
    """

    name = "fadcm"

    def __init__(self, catalog: Catalog, horizon: int, alpha: float = 0.3,
                 plateau_index: Optional[int] = None, threshold: str = "anytime",
                 exploration_count: str = "first", delta_form: str = "inverse",
                 max_len: Optional[int] = None, exploration_scale: float = 1.0):
        if threshold not in ("anytime", "horizon"):
            raise ValueError(f"threshold must be 'anytime' or 'horizon', got {threshold!r}")
        if exploration_count not in ("first", "all"):
            raise ValueError(f"exploration_count must be 'first' or 'all', got {exploration_count!r}")
        if delta_form not in ("inverse", "printed"):
            raise ValueError(f"delta_form must be 'inverse' or 'printed', got {delta_form!r}")
        self.catalog = catalog
        self.horizon = horizon
        self.alpha = alpha
        self.threshold = threshold
        self.exploration_count = exploration_count
        self.delta_form = delta_form
        self.max_len = max_len
        self.exploration_scale = exploration_scale
        n = catalog.n_items
        m = n if plateau_index is None else plateau_index
        self.events = _EventTable(n, m)
        self.u_ucb = np.ones(n)
        self.f_ucb = np.ones(m + 1)
        self.t = 0
        self.forced: Optional[int] = None

    @property
    def plateau_index(self) -> int:
        return self.events.plateau_index

    def relevance_estimates(self) -> tuple[np.ndarray, np.ndarray]:
        return self.events.relevance_means()

    def discount_estimates(self) -> np.ndarray:
        """Plug-in discount estimate per index (NaN where nothing was observed)."""
        return self._discount_parts(1.0)[0]

    def _discount_parts(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        T, C = self.events.T, self.events.C
        t0 = T[0]
        u_hat, seen = self.events.relevance_means()
        usable = seen & (u_hat > 0)
        inv_u = np.zeros(u_hat.size)
        inv_u[usable] = 1.0 / u_hat[usable]
        totals = T.sum(axis=1)
        observed = totals > 0

        f_hat = np.full(totals.size, np.nan)
        f_hat[observed] = (C[observed] @ inv_u) / totals[observed]

        eps = np.full(u_hat.size, np.inf)
        eps[seen] = np.sqrt(_log(t) / t0[seen])
        if self.delta_form == "inverse":
            gate = usable & (u_hat > eps)
            factor = np.zeros(u_hat.size)
            factor[gate] = 1.0 / (1.0 - eps[gate] * inv_u[gate])
        else:
            gate = usable & (u_hat >= eps)
            factor = np.zeros(u_hat.size)
            factor[gate] = 1.0 - eps[gate] * inv_u[gate]
        weights = np.zeros(u_hat.size)
        weights[gate] = inv_u[gate] ** 2 * factor[gate] * eps[gate]

        delta = np.full(totals.size, np.nan)
        delta[observed] = ((C[observed] @ weights) / totals[observed]
                           + np.sqrt(_log(t) / totals[observed]))
        return f_hat, delta

    def ucb(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Optimistic relevance and (unrepaired) discount vectors at round ``t``."""
        t0 = self.events.first_counts
        u_hat, seen = self.events.relevance_means()
        u_ucb = np.ones(t0.size)
        c = self.exploration_scale
        u_ucb[seen] = u_hat[seen] + c * np.sqrt(2.0 * _log(t) / t0[seen])

        f_hat, delta = self._discount_parts(t)
        f_ucb = np.where(np.isnan(f_hat), 1.0, f_hat + c * np.nan_to_num(delta))
        f_ucb[0] = 1.0
        return u_ucb, f_ucb

    def exploration_counts(self) -> np.ndarray:
        if self.exploration_count == "first":
            return self.events.first_counts
        return self.events.T.sum(axis=0)

    def exploration_threshold(self, t: int) -> float:
        base = t if self.threshold == "anytime" else self.horizon
        return self.alpha * base ** (2.0 / 3.0)

    def select_slate(self, t: int) -> Slate:
        slate = optimal_slate(self.catalog, self.u_ucb, self.f_ucb, self.max_len)
        counts = self.exploration_counts()
        deficient = counts < self.exploration_threshold(t)
        self.forced = None
        if not deficient.any():
            return slate
        j = int(np.argmin(np.where(deficient, counts, np.iinfo(np.int64).max)))
        self.forced = j
        rest = [i for i in slate if i != j]
        if self.max_len is not None and len(rest) == len(slate):
            rest = rest[: self.max_len - 1]
        return (j, *rest)

    def observe(self, record: InteractionRecord, t: int) -> None:
        self.events.add_record(record, self.catalog)
        self.t = t
        u_ucb, f_ucb = self.ucb(t)
        self.u_ucb = u_ucb
        self.f_ucb = monotone_repair(f_ucb)

    def lemma_statistic(self, u_true) -> np.ndarray:
        """Discount estimate with the true relevance plugged in (NaN where unobserved)."""
        T, C = self.events.T, self.events.C
        totals = T.sum(axis=1)
        out = np.full(totals.size, np.nan)
        observed = totals > 0
        out[observed] = (C[observed] @ (1.0 / np.asarray(u_true, dtype=float))) / totals[observed]
        return out

    def to_dict(self) -> dict:
        return {
            "policy": self.name,
            "t": self.t,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "exploration_count": self.exploration_count,
            "delta_form": self.delta_form,
            "event_counts": self.events.T.tolist(),
            "event_clicks": self.events.C.tolist(),
            "u_ucb": self.u_ucb.tolist(),
            "f_ucb": self.f_ucb.tolist(),
        }


class ExploreThenExploit(Policy):
    """Random slates until ``beta * log t`` exploration rounds are banked, else greedy.

    Round 1 always explores. The greedy slate uses empirical relevance
    (first-of-category click rates) and a plug-in discount estimate; anything
    not yet observed defaults to 1.
    """

    name = "ete"

    def __init__(self, catalog: Catalog, rng: np.random.Generator, beta: float = 50.0,
                 plateau_index: Optional[int] = None, floor: float = 1e-6,
                 max_len: Optional[int] = None):
        self.catalog = catalog
        self.rng = rng
        self.beta = beta
        self.floor = floor
        self.max_len = max_len
        n = catalog.n_items
        self.events = _EventTable(n, n if plateau_index is None else plateau_index)
        self.n_explore = 0
        self.t = 0

    def is_exploration_round(self, t: int) -> bool:
        return t <= 1 or self.n_explore < self.beta * _log(t)

    def empirical_params(self) -> tuple[np.ndarray, np.ndarray]:
        u_hat, seen = self.events.relevance_means()
        u = np.where(seen, u_hat, 1.0)
        T, C = self.events.T, self.events.C
        totals = T.sum(axis=1)
        observed = totals > 0
        f = np.ones(totals.size)
        f[observed] = (C[observed] @ (1.0 / np.maximum(u, self.floor))) / totals[observed]
        f = np.clip(f, 0.0, 1.0)
        f[0] = 1.0
        return u, monotone_repair(f)

    def select_slate(self, t: int) -> Slate:
        if self.is_exploration_round(t):
            self.n_explore += 1
            order = self.rng.permutation(self.catalog.n_items)
            if self.max_len is not None:
                order = order[: self.max_len]
            return tuple(order.tolist())
        u, f = self.empirical_params()
        return optimal_slate(self.catalog, u, f, self.max_len)

    def observe(self, record: InteractionRecord, t: int) -> None:
        self.events.add_record(record, self.catalog)
        self.t = t

    def to_dict(self) -> dict:
        u, f = self.empirical_params()
        return {
            "policy": self.name,
            "t": self.t,
            "beta": self.beta,
            "exploration_rounds": self.n_explore,
            "event_counts": self.events.T.tolist(),
            "event_clicks": self.events.C.tolist(),
            "u_hat": u.tolist(),
            "f_hat": f.tolist(),
        }
