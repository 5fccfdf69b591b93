"""Subset-dominance filtering of candidate parent sets.

A parent set can be discarded when one of its strict subsets scores at
least as well: swapping the superset for the subset only removes arcs, so
it can never create a cycle, and the graph score does not decrease.  The
default follows the strict reading (drop only when a subset scores
strictly higher); ``prune_ties=True`` additionally drops supersets that
are merely tied.
"""

from __future__ import annotations

from .scoring import ScoreTable, ScoreTableError

PrunedScoreTable = ScoreTable  # same shape; distinguished by the `pruned` flag


def prune(scores: ScoreTable, prune_ties: bool = False) -> PrunedScoreTable:
    """Keep only parent sets no strict subset of which dominates them.

    Requires a complete table: every subset of every entry must be present
    (dropped sets still act as dominators, which the size-ordered sweep
    handles by tracking the best score over all strict subsets).
    """
    if scores.pruned:
        raise ScoreTableError("score table is already pruned")
    kept_entries: list[dict[tuple[int, ...], float]] = []
    kept_counts: list[int] = []
    dropped_counts: list[int] = []
    for child, entry in enumerate(scores.entries):
        if () not in entry:
            raise ScoreTableError(
                f"child {scores.names[child]!r} is missing the empty parent set"
            )
        # best score over all strict subsets, built up in order of set size
        best_strict: dict[tuple[int, ...], float] = {(): float("-inf")}
        for pa in sorted(entry, key=len):
            if pa:
                cands = []
                for drop in range(len(pa)):
                    sub = pa[:drop] + pa[drop + 1 :]
                    if sub not in entry:
                        raise ScoreTableError(
                            f"table incomplete: {scores.names[child]!r} has no score for a "
                            f"subset of {pa}"
                        )
                    cands.append(entry[sub])
                    cands.append(best_strict[sub])
                best_strict[pa] = max(cands)
        kept: dict[tuple[int, ...], float] = {}
        for pa, s in entry.items():
            if not pa:
                kept[pa] = s
                continue
            b = best_strict[pa]
            if b > s or (prune_ties and b == s):
                continue
            kept[pa] = s
        kept_entries.append(kept)
        kept_counts.append(len(kept))
        dropped_counts.append(len(entry) - len(kept))
    return PrunedScoreTable(
        names=scores.names,
        arities=scores.arities,
        alpha=scores.alpha,
        max_parents=scores.max_parents,
        entries=kept_entries,
        dataset_digest=scores.dataset_digest,
        pruned=True,
        prune_ties=prune_ties,
        kept=tuple(kept_counts),
        dropped=tuple(dropped_counts),
    )
