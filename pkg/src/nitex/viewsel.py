"""Greedy next-view selection over precomputed candidate footprints.

Two ranking metrics: mean residual uncertainty over a candidate's texel
footprint, or the count of footprint texels nothing covers yet. Ties break
toward the lower view id so selection is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .uncertainty import UncertaintyMap


@dataclass
class SelectionState:
    """Inputs to one selection round.

    ``candidate_footprints`` maps a candidate view id to the boolean texel
    mask that view could cover (geometric coverage on the same atlas).
    """

    residual_uncertainty: UncertaintyMap
    coverage: np.ndarray  # (N, N) bool
    candidate_footprints: dict[int, np.ndarray]
    used: set[int] = field(default_factory=set)


def score_view_uq(
    candidate: int, state: SelectionState, *, mode: str = "mean"
) -> float:
    """Mean (or raw sum) of per-texel uncertainty over the candidate footprint.

    Uncovered texels count as uncertainty 1; an empty footprint scores 0.
    """
    footprint = _footprint(candidate, state)
    count = int(np.count_nonzero(footprint))
    if count == 0:
        return 0.0
    u = np.where(state.coverage, state.residual_uncertainty.values, 1.0)
    total = float(u[footprint].sum())
    if mode == "sum":
        return total
    if mode == "mean":
        return total / count
    raise ValueError(f"unknown uq score mode {mode!r}")


def score_view_cvg(candidate: int, state: SelectionState) -> float:
    """Number of footprint texels not covered by any acquired view."""
    footprint = _footprint(candidate, state)
    return float(np.count_nonzero(footprint & ~state.coverage))


def _footprint(candidate: int, state: SelectionState) -> np.ndarray:
    try:
        return state.candidate_footprints[candidate]
    except KeyError:
        raise ValueError(f"unknown candidate view {candidate}")


def rank_candidates(
    state: SelectionState, strategy: str, *, uq_score_mode: str = "mean"
) -> list[tuple[int, float]]:
    """Score every unused candidate, best first; ties favor the lower id."""
    if strategy == "uq":
        scorer = lambda vid: score_view_uq(vid, state, mode=uq_score_mode)
    elif strategy == "coverage":
        scorer = lambda vid: score_view_cvg(vid, state)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    candidates = sorted(
        vid for vid in state.candidate_footprints if vid not in state.used
    )
    scored = [(vid, scorer(vid)) for vid in candidates]
    return sorted(scored, key=lambda pair: (-pair[1], pair[0]))


def greedy_select(
    state: SelectionState,
    strategy: str,
    max_views: int,
    threshold: float,
    *,
    uq_score_mode: str = "mean",
) -> list[int]:
    """Pick views greedily without acquiring new images.

    Picks are simulated as fully resolving their footprint: coverage grows
    and footprint uncertainty drops to 0, so later rounds chase whatever
    remains. The uq strategy stops when the best score falls below the
    threshold; the coverage strategy stops at zero gain; both stop at
    ``max_views`` total (counting already-used views).
    """
    if max_views < len(state.used):
        raise ValueError("max_views smaller than the number of used views")
    coverage = state.coverage.copy()
    residual = state.residual_uncertainty.values.copy()
    used = set(state.used)
    picked: list[int] = []

    while len(used) < max_views:
        rolling = SelectionState(
            residual_uncertainty=UncertaintyMap(values=residual),
            coverage=coverage,
            candidate_footprints=state.candidate_footprints,
            used=used,
        )
        ranking = rank_candidates(rolling, strategy, uq_score_mode=uq_score_mode)
        if not ranking:
            break
        best_id, best_score = ranking[0]
        if strategy == "uq" and best_score < threshold:
            break
        if strategy == "coverage" and best_score <= 0:
            break
        picked.append(best_id)
        used.add(best_id)
        footprint = state.candidate_footprints[best_id]
        coverage = coverage | footprint
        residual = np.where(footprint, 0.0, residual)

    return picked
