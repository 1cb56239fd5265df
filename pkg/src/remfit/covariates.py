"""Network-history covariates and per-event-time design assembly.

Five covariates per dyad, all computed from the state strictly before each
event time: combined patent totals of the two actors, their joint-patent
count, the 2-star count (collaborators of either actor, excluding the
other), the triangle count (shared collaborators), and geographic distance
in units of 100 km, truncated.

The design is kept in a compact per-event-time form: per-actor aggregate
vectors for the separable covariates plus sparse corrections for the
pair-local ones.  Dense covariate matrices are materialized per event time
on demand, so the full design never lives in memory at once.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError
from .ingest import active_actors, canonical_pair, expand_dyads
from .netstate import NetworkState

log = logging.getLogger(__name__)

COVARIATE_NAMES = ("patents_ij", "joint_patent", "two_star", "triangle", "distance")
N_COVARIATES = 5

EARTH_RADIUS_KM = 6371.0


class LocationTracker:
    """Most-recent known address per actor.

    Actors keep their last reported location until a newer patent supplies
    one; locations are never expired with the count history.
    """

    def __init__(self):
        self._loc = {}

    def update(self, record) -> None:
        for inv, loc in record.locations.items():
            self._loc[inv] = loc

    def get(self, i):
        return self._loc.get(i)

    def known(self, i) -> bool:
        return i in self._loc


# -- scalar per-pair statistics -----------------------------------------


def patents_ij(state: NetworkState, i, j) -> int:
    """Combined patent totals of the two actors before the event time."""
    return state.self_count(i) + state.self_count(j)


def joint_patents(state: NetworkState, i, j) -> int:
    """Number of patents the two actors hold together."""
    return state.pair_count(i, j)


def two_star(state: NetworkState, i, j) -> int:
    """Collaborators of i excluding j, plus collaborators of j excluding i."""
    ni = state.neighbor_sets.get(i, ())
    nj = state.neighbor_sets.get(j, ())
    return len(ni) - (j in ni) + len(nj) - (i in nj)


def triangle(state: NetworkState, i, j) -> int:
    """Actors holding a joint patent with both i and j, each counted once."""
    ni = state.neighbor_sets.get(i)
    nj = state.neighbor_sets.get(j)
    if not ni or not nj:
        return 0
    return len((ni & nj) - {i, j})


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km; accepts scalars or arrays (degrees)."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=float)) for v in (lat1, lon1, lat2, lon2))
    s_lat = np.sin((lat2 - lat1) / 2.0)
    s_lon = np.sin((lon2 - lon1) / 2.0)
    a = s_lat * s_lat + np.cos(lat1) * np.cos(lat2) * s_lon * s_lon
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def flat_km(lat1, lon1, lat2, lon2):
    """Equirectangular-projection distance in km, for sensitivity checks."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=float)) for v in (lat1, lon1, lat2, lon2))
    dx = (lon2 - lon1) * np.cos((lat1 + lat2) / 2.0)
    dy = lat2 - lat1
    return EARTH_RADIUS_KM * np.hypot(dx, dy)


@dataclass(frozen=True)
class DistanceConfig:
    """Distance covariate policy: cap, missing-location handling, metric."""

    cap_km: float = 1000.0
    missing_policy: str = "cap"  # "cap" | "zero" | "drop"
    method: str = "greatcircle"  # "greatcircle" | "flat"

    def __post_init__(self):
        if self.missing_policy not in ("cap", "zero", "drop"):
            raise DataValidationError(f"unknown missing policy {self.missing_policy!r}")
        if self.method not in ("greatcircle", "flat"):
            raise DataValidationError(f"unknown distance method {self.method!r}")
        if self.cap_km <= 0:
            raise DataValidationError("cap_km must be positive")

    @property
    def metric(self):
        return haversine_km if self.method == "greatcircle" else flat_km


def distance(locations: LocationTracker, i, j, config: DistanceConfig = DistanceConfig()):
    """Truncated pair distance in units of 100 km.

    Returns None under the "drop" policy when either location is unknown.
    """
    a, b = locations.get(i), locations.get(j)
    if a is None or b is None:
        if config.missing_policy == "cap":
            return config.cap_km / 100.0
        if config.missing_policy == "zero":
            return 0.0
        return None
    km = config.metric(a[0], a[1], b[0], b[1])
    return float(np.minimum(km, config.cap_km)) / 100.0


# -- per-event-time design ----------------------------------------------


@dataclass(frozen=True)
class DesignRow:
    """One option-set dyad at one event time, for small-scale inspection."""

    d: int
    i: str
    j: str
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    is_event: bool


@dataclass
class DesignBlock:
    """Compact design for one event time.

    Separable covariates live in per-actor vectors (``self_counts``,
    ``degrees``); pair-local covariates are kept as sparse flat-position
    scatters.  ``event_pos`` lists the event dyads with multiplicity.
    """

    d: int
    month: int
    self_counts: np.ndarray
    degrees: np.ndarray
    edge_pos: np.ndarray
    edge_joint: np.ndarray
    tri_pos: np.ndarray
    tri_count: np.ndarray
    x5: np.ndarray
    event_pos: np.ndarray
    keep_mask: np.ndarray | None = None
    n_missing: int = 0

    @property
    def n_events(self) -> int:
        return int(self.event_pos.size)

    def event_count_vector(self, n_pairs: int) -> np.ndarray:
        return np.bincount(self.event_pos, minlength=n_pairs)


@dataclass
class DesignSet:
    """Streamed design over the study grid for a fixed active-actor set."""

    actor_ids: tuple
    grid: list
    blocks: list
    window: object
    distance_config: DistanceConfig
    pair_index: tuple = field(repr=False, default=None)

    def __post_init__(self):
        if self.pair_index is None:
            n = len(self.actor_ids)
            self.pair_index = np.triu_indices(n, k=1)

    @property
    def n_actors(self) -> int:
        return len(self.actor_ids)

    @property
    def n_pairs(self) -> int:
        n = len(self.actor_ids)
        return n * (n - 1) // 2

    def materialize(self, block: DesignBlock) -> np.ndarray:
        """Dense (n_pairs, 5) covariate matrix for one event time."""
        iu, ju = self.pair_index
        x = np.empty((self.n_pairs, N_COVARIATES))
        x[:, 0] = block.self_counts[iu] + block.self_counts[ju]
        x[:, 1] = 0.0
        x[block.edge_pos, 1] = block.edge_joint
        x[:, 2] = block.degrees[iu] + block.degrees[ju]
        x[block.edge_pos, 2] -= 2.0
        x[:, 3] = 0.0
        x[block.tri_pos, 3] = block.tri_count
        x[:, 4] = block.x5
        return x

    def iter_rows(self, block: DesignBlock):
        """Yield DesignRow objects for one event time (small problems only)."""
        x = self.materialize(block)
        counts = block.event_count_vector(self.n_pairs)
        iu, ju = self.pair_index
        for l in range(self.n_pairs):
            if block.keep_mask is not None and not block.keep_mask[l]:
                continue
            yield DesignRow(
                d=block.d,
                i=self.actor_ids[iu[l]],
                j=self.actor_ids[ju[l]],
                x1=x[l, 0],
                x2=x[l, 1],
                x3=x[l, 2],
                x4=x[l, 3],
                x5=x[l, 4],
                is_event=bool(counts[l]),
            )


def _flat_pos(li: np.ndarray, lj: np.ndarray, n: int) -> np.ndarray:
    """Flat upper-triangle position of local pairs (li < lj), row-major."""
    return li * (2 * n - li - 1) // 2 + (lj - li - 1)


def build_design(records, window, *, distance_config: DistanceConfig = DistanceConfig(),
                 active=None, events=None, grid=None, max_inventors=None) -> DesignSet:
    """Single-pass design construction over the event stream.

    Walks records in filing order, maintaining the count state and the
    location tracker; at each grid month the state strictly before that
    month is frozen into a DesignBlock.  Pre-window records feed only the
    location tracker; counts accumulate from the window's history start.
    """
    records = sorted(records, key=lambda r: (r.filing_month, r.patent_id))
    if active is None:
        active = active_actors(records, window)
    if events is None or grid is None:
        events, grid = expand_dyads(records, active, window)
    if not grid:
        raise DataValidationError("no event times: no in-period events among active pairs")

    ids = tuple(sorted(active))
    local = {a: ix for ix, a in enumerate(ids)}
    n = len(ids)

    events_by_d: dict[int, list] = {}
    for ev in events:
        if ev.d is not None:
            events_by_d.setdefault(ev.d, []).append(
                _flat_pos(np.intp(local[ev.i]), np.intp(local[ev.j]), n)
            )

    state = NetworkState()
    locations = LocationTracker()
    rec_iter = iter(records)
    pending = next(rec_iter, None)

    blocks = []
    prev_x5 = None
    locations_dirty = True
    iu, ju = np.triu_indices(n, k=1)

    for d, month in enumerate(grid, start=1):
        # fold everything strictly before this event time
        while pending is not None and pending.filing_month < month:
            if pending.filing_month >= window.history_start:
                state.apply_record(pending)
            if pending.locations:
                locations.update(pending)
                locations_dirty = True
            pending = next(rec_iter, None)

        if locations_dirty or prev_x5 is None:
            x5, n_missing, keep = _distance_vector(locations, ids, iu, ju, distance_config)
            prev_x5 = (x5, n_missing, keep)
            locations_dirty = False
        x5, n_missing, keep = prev_x5

        event_pos = np.asarray(events_by_d[d], dtype=np.intp)
        if keep is not None:
            event_pos = event_pos[keep[event_pos]]
            if event_pos.size == 0:
                log.warning("event time %d lost all events to the drop policy; skipped", d)
                continue

        blocks.append(
            DesignBlock(
                d=d,
                month=month,
                self_counts=np.array([state.self_count(a) for a in ids], dtype=float),
                degrees=np.array([state.degree(a) for a in ids], dtype=float),
                event_pos=event_pos,
                keep_mask=keep,
                n_missing=n_missing,
                x5=x5,
                **_sparse_pair_stats(state, local, n),
            )
        )

    total_missing = sum(b.n_missing for b in blocks)
    if total_missing:
        log.info(
            "distance policy %r applied to %d dyad-time pairs with missing locations",
            distance_config.missing_policy, total_missing,
        )
    return DesignSet(
        actor_ids=ids,
        grid=list(grid),
        blocks=blocks,
        window=window,
        distance_config=distance_config,
        pair_index=(iu, ju),
    )


def _sparse_pair_stats(state: NetworkState, local: dict, n: int) -> dict:
    """Edge (joint-patent) and triangle scatters over active pairs."""
    e_pos, e_val = [], []
    for (i, j), c in state.pair_counts.items():
        li, lj = local.get(i), local.get(j)
        if li is None or lj is None:
            continue
        if li > lj:
            li, lj = lj, li
        e_pos.append(_flat_pos(li, lj, n))
        e_val.append(c)

    tri: dict[int, int] = {}
    for k, nbrs in state.neighbor_sets.items():
        act = sorted(local[a] for a in nbrs if a in local)
        for li, lj in itertools.combinations(act, 2):
            p = _flat_pos(li, lj, n)
            tri[p] = tri.get(p, 0) + 1

    return {
        "edge_pos": np.asarray(e_pos, dtype=np.intp),
        "edge_joint": np.asarray(e_val, dtype=float),
        "tri_pos": np.asarray(sorted(tri), dtype=np.intp),
        "tri_count": np.asarray([tri[p] for p in sorted(tri)], dtype=float),
    }


def _distance_vector(locations, ids, iu, ju, config):
    """Capped pair distances (100 km units) with the missing-value policy."""
    lat = np.empty(len(ids))
    lon = np.empty(len(ids))
    known = np.zeros(len(ids), dtype=bool)
    for ix, a in enumerate(ids):
        loc = locations.get(a)
        if loc is not None:
            lat[ix], lon[ix] = loc
            known[ix] = True
    pair_known = known[iu] & known[ju]
    n_missing = int(np.count_nonzero(~pair_known))

    x5 = np.full(iu.shape, config.cap_km / 100.0)
    if pair_known.any():
        ki, kj = iu[pair_known], ju[pair_known]
        km = config.metric(lat[ki], lon[ki], lat[kj], lon[kj])
        x5[pair_known] = np.minimum(km, config.cap_km) / 100.0

    keep = None
    if n_missing:
        if config.missing_policy == "zero":
            x5[~pair_known] = 0.0
        elif config.missing_policy == "drop":
            keep = pair_known
    return x5, n_missing, keep


def full_pass_design(records, window, *, distance_config: DistanceConfig = DistanceConfig(),
                     active=None, events=None, grid=None):
    """Exact reference design: per-pair scalar statistics on fresh snapshots.

    Rebuilds the state from scratch for every event time and evaluates every
    covariate dyad by dyad.  Intended for cross-checking the incremental
    builder on small problems; returns a list of dense matrices aligned with
    ``build_design``'s blocks.
    """
    records = sorted(records, key=lambda r: (r.filing_month, r.patent_id))
    if active is None:
        active = active_actors(records, window)
    if events is None or grid is None:
        events, grid = expand_dyads(records, active, window)
    ids = tuple(sorted(active))

    matrices = []
    for d, month in enumerate(grid, start=1):
        state = NetworkState()
        locations = LocationTracker()
        for r in records:
            if r.filing_month >= month:
                break
            if r.filing_month >= window.history_start:
                state.apply_record(r)
            locations.update(r)
        rows = []
        for a, b in itertools.combinations(ids, 2):
            i, j = canonical_pair(a, b)
            x5 = distance(locations, i, j, distance_config)
            if x5 is None:
                continue
            rows.append(
                [
                    patents_ij(state, i, j),
                    joint_patents(state, i, j),
                    two_star(state, i, j),
                    triangle(state, i, j),
                    x5,
                ]
            )
        matrices.append(np.asarray(rows, dtype=float))
    return matrices
