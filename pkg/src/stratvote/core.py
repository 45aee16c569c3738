"""Election primitives: polls, utility functions, and the Plurality rule.

Candidates are integer indices ``0 .. m-1``.  The Plurality rule with ties
returns the full set of co-winners, and a voter facing a tied winner set
values it at the mean utility of its members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

Candidate = int
WinnerSet = frozenset


@dataclass(frozen=True)
class Poll:
    """Observed Plurality scores for ``m >= 2`` candidates.

    ``n`` is the reported participant count.  :meth:`from_scores` sets it to
    the score total, which is the canonical case; loaders may carry a
    differing reported ``n`` (published polls are sometimes rounded), and all
    consumers normalize against the appropriate total themselves.
    """

    scores: tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        scores = tuple(int(s) for s in self.scores)
        if len(scores) < 2:
            raise ValueError("a poll needs at least two candidates")
        if any(s < 0 for s in scores) or any(s != t for s, t in zip(scores, self.scores)):
            raise ValueError(f"poll scores must be non-negative integers, got {self.scores!r}")
        n = int(self.n)
        if n != self.n or n < 0:
            raise ValueError(f"participant count must be a non-negative integer, got {self.n!r}")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_scores(cls, scores: Iterable[int]) -> "Poll":
        scores = tuple(int(s) for s in scores)
        return cls(scores, sum(scores))

    @property
    def m(self) -> int:
        return len(self.scores)

    def with_vote(self, c: Candidate) -> "Poll":
        """The poll after one additional vote for ``c``."""
        self._check_candidate(c)
        scores = list(self.scores)
        scores[c] += 1
        return Poll(tuple(scores), self.n + 1)

    def _check_candidate(self, c: Candidate) -> None:
        if not 0 <= c < self.m:
            raise ValueError(f"candidate index {c} out of range for m={self.m}")


@dataclass(frozen=True)
class UtilityFunction:
    """Non-negative finite utility per candidate, in candidate order."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if len(values) < 2:
            raise ValueError("need utilities for at least two candidates")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ValueError(f"utilities must be finite and non-negative, got {self.values!r}")
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return len(self.values)

    def __getitem__(self, c: Candidate) -> float:
        return self.values[c]


def plurality_winners(poll: Poll) -> WinnerSet:
    """All candidates attaining the maximum score (co-winners on ties)."""
    top = max(poll.scores)
    return frozenset(c for c, s in enumerate(poll.scores) if s == top)


def outcome_with_vote(poll: Poll, c: Candidate) -> WinnerSet:
    """Winner set after casting one additional vote for ``c``."""
    return plurality_winners(poll.with_vote(c))


def winner_set_utility(u: UtilityFunction, winners: frozenset) -> float:
    """Mean utility over a (non-empty) winner set: ties resolve uniformly."""
    if not winners:
        raise ValueError("winner set must be non-empty")
    for c in winners:
        if not 0 <= c < u.m:
            raise ValueError(f"winner {c} out of range for m={u.m}")
    return sum(u[c] for c in winners) / len(winners)


def preference_order(values: Sequence[float]) -> tuple[int, ...]:
    """Candidates sorted most-preferred first; equal values break by lower index."""
    return tuple(sorted(range(len(values)), key=lambda c: (-values[c], c)))


def poll_ranking(scores: Sequence[int]) -> tuple[int, ...]:
    """Candidates sorted by descending score; equal scores break by lower index."""
    return tuple(sorted(range(len(scores)), key=lambda c: (-scores[c], c)))
