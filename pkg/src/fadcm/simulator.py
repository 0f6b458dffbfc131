"""Session sampling under the true model and extraction of observed events."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, TextIO

import numpy as np

from .model import Catalog, ModelParams, Slate, prefix_counts


class ExitCause(str, Enum):
    ABANDONED_AFTER_CLICK = "abandoned_after_click"
    ABANDONED_AFTER_SKIP = "abandoned_after_skip"
    EXHAUSTED_SLATE = "exhausted_slate"


@dataclass(frozen=True)
class InteractionRecord:
    """Feedback from one user: clicks on the examined prefix only."""

    slate: Slate
    examined_len: int
    clicks: tuple[int, ...]
    exit_cause: ExitCause

    def __post_init__(self):
        if len(self.clicks) != self.examined_len or self.examined_len > len(self.slate):
            raise ValueError("clicks must cover exactly the examined prefix of the slate")
        exhausted = self.examined_len == len(self.slate)
        if exhausted != (self.exit_cause is ExitCause.EXHAUSTED_SLATE):
            raise ValueError("exit_cause is exhausted_slate iff the whole slate was examined")

    @property
    def realized_clicks(self) -> int:
        return sum(self.clicks)

    def to_dict(self) -> dict:
        return {
            "slate": list(self.slate),
            "examined_len": self.examined_len,
            "clicks": list(self.clicks),
            "exit_cause": self.exit_cause.value,
            "realized_clicks": self.realized_clicks,
        }


@dataclass(frozen=True)
class EventObservation:
    """Item ``item_id`` examined after ``discount_index`` same-category items."""

    discount_index: int
    item_id: int
    click: int


def sample_session(slate: Slate, z: np.ndarray, g: float, q: float,
                   rng: np.random.Generator) -> InteractionRecord:
    """Sample a session given the slate's attractiveness vector ``z``.

    Always consumes ``2 * len(slate)`` uniforms so the stream position after a
    session depends only on the slate length.
    """
    n = len(slate)
    if n == 0:
        return InteractionRecord(slate, 0, (), ExitCause.EXHAUSTED_SLATE)
    draws = rng.random((2, n))
    click_u = draws[0].tolist()
    stay_u = draws[1].tolist()
    z = z.tolist()
    clicks = []
    for p in range(n):
        c = 1 if click_u[p] < z[p] else 0
        clicks.append(c)
        if p == n - 1:
            break
        if stay_u[p] >= (g if c else q):
            cause = ExitCause.ABANDONED_AFTER_CLICK if c else ExitCause.ABANDONED_AFTER_SKIP
            return InteractionRecord(slate, p + 1, tuple(clicks), cause)
    return InteractionRecord(slate, n, tuple(clicks), ExitCause.EXHAUSTED_SLATE)


def simulate_session(slate: Iterable[int], truth: ModelParams,
                     rng: np.random.Generator) -> InteractionRecord:
    """Draw one user's clicks and exit on ``slate`` under the true parameters."""
    order = truth.catalog.validate_slate(slate)
    h = prefix_counts(order, truth.catalog.categories)
    z = truth.discount(h) * truth.u[list(order)]
    return sample_session(order, z, truth.g, truth.q, rng)


def extract_events(record: InteractionRecord, catalog: Catalog) -> list[EventObservation]:
    examined = record.slate[: record.examined_len]
    h = prefix_counts(examined, catalog.categories)
    return [EventObservation(int(i), int(j), int(z))
            for i, j, z in zip(h.tolist(), examined, record.clicks)]


def write_ndjson(records: Iterable[InteractionRecord], fh: TextIO) -> None:
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), separators=(",", ":")))
        fh.write("\n")
