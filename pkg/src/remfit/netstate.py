"""Evolving collaboration-count state with incremental updates.

Tracks the symmetric pair-count process (joint patents per dyad), per-actor
patent totals including single-ownership patents, and the binarized
neighbor structure.  A per-record contribution log supports rolling-window
expiry with exact rebuild semantics.
"""

from __future__ import annotations

from collections import deque

from .errors import DataValidationError
from .ingest import canonical_pair


class NetworkState:
    """Sparse symmetric count process over actor pairs.

    ``pair_counts[(i, j)]`` (i < j) counts joint patents of i and j,
    ``self_counts[i]`` counts all patents listing i, and
    ``neighbor_sets[i]`` holds every j with a positive pair count.
    """

    def __init__(self):
        self.pair_counts = {}
        self.self_counts = {}
        self.neighbor_sets = {}
        self.as_of_month = None
        self._log = deque()

    def apply_record(self, record) -> None:
        """Fold one patent into the counts; records must arrive in time order."""
        if self.as_of_month is not None and record.filing_month < self.as_of_month:
            raise DataValidationError(
                f"out-of-order record {record.patent_id}: month {record.filing_month} "
                f"< state month {self.as_of_month}"
            )
        for inv in record.inventors:
            self.self_counts[inv] = self.self_counts.get(inv, 0) + 1
        for a_idx in range(len(record.inventors)):
            for b_idx in range(a_idx + 1, len(record.inventors)):
                i, j = canonical_pair(record.inventors[a_idx], record.inventors[b_idx])
                self.pair_counts[(i, j)] = self.pair_counts.get((i, j), 0) + 1
                self.neighbor_sets.setdefault(i, set()).add(j)
                self.neighbor_sets.setdefault(j, set()).add(i)
        self.as_of_month = record.filing_month
        self._log.append(record)

    def expire_history(self, window_start_month: int) -> int:
        """Remove contributions of records filed before the window start.

        Returns the number of records expired.  The log is in filing order,
        so expiry pops from the front.
        """
        n = 0
        while self._log and self._log[0].filing_month < window_start_month:
            self._unapply(self._log.popleft())
            n += 1
        return n

    def _unapply(self, record) -> None:
        for inv in record.inventors:
            c = self.self_counts[inv] - 1
            if c:
                self.self_counts[inv] = c
            else:
                del self.self_counts[inv]
        for a_idx in range(len(record.inventors)):
            for b_idx in range(a_idx + 1, len(record.inventors)):
                i, j = canonical_pair(record.inventors[a_idx], record.inventors[b_idx])
                c = self.pair_counts[(i, j)] - 1
                if c:
                    self.pair_counts[(i, j)] = c
                else:
                    del self.pair_counts[(i, j)]
                    self.neighbor_sets[i].discard(j)
                    self.neighbor_sets[j].discard(i)
                    if not self.neighbor_sets[i]:
                        del self.neighbor_sets[i]
                    if not self.neighbor_sets[j]:
                        del self.neighbor_sets[j]

    # -- queries -------------------------------------------------------

    def pair_count(self, i, j) -> int:
        if i == j:
            raise DataValidationError("pair_count requires two distinct actors")
        return self.pair_counts.get(canonical_pair(i, j), 0)

    def self_count(self, i) -> int:
        return self.self_counts.get(i, 0)

    def neighbors(self, i) -> frozenset:
        return frozenset(self.neighbor_sets.get(i, ()))

    def degree(self, i) -> int:
        return len(self.neighbor_sets.get(i, ()))

    def __eq__(self, other):
        if not isinstance(other, NetworkState):
            return NotImplemented
        return (
            self.pair_counts == other.pair_counts
            and self.self_counts == other.self_counts
            and self.neighbor_sets == other.neighbor_sets
        )

    def __repr__(self):
        return (
            f"NetworkState(actors={len(self.self_counts)}, "
            f"pairs={len(self.pair_counts)}, as_of={self.as_of_month})"
        )


def snapshot_at(records, grid, d: int, history_start: int | None = None) -> NetworkState:
    """State strictly before the d-th event time (1-based index into grid).

    Folds every record with ``history_start <= month < grid[d-1]``; records
    at the event time itself are excluded so covariates never see the events
    they explain.
    """
    if not 1 <= d <= len(grid):
        raise DataValidationError(f"event-time index {d} outside 1..{len(grid)}")
    t_d = grid[d - 1]
    state = NetworkState()
    for r in sorted(records, key=lambda r: (r.filing_month, r.patent_id)):
        if r.filing_month >= t_d:
            break
        if history_start is not None and r.filing_month < history_start:
            continue
        state.apply_record(r)
    return state
