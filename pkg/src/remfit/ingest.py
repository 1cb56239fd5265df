"""Raw event parsing, filtering, and dyadic expansion.

Input data is a long-format CSV with one row per (patent, inventor):
``patent_id, filing_month, inventor_id, lat, lon``.  Filing months are
integer indices on a monthly grid.  Multi-inventor patents are expanded
into one relational event per unordered inventor pair.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field

from .errors import DataValidationError, ParseError

log = logging.getLogger(__name__)

CSV_HEADER = ("patent_id", "filing_month", "inventor_id", "lat", "lon")
POISSON_HEADER = ("d", "month", "i", "j", "y", "x1", "x2", "x3", "x4", "x5")


@dataclass(frozen=True)
class PatentRecord:
    """One patent submission: a time stamp, an inventor list, locations.

    ``locations`` maps inventor id to (lat, lon) in degrees for the
    inventors whose address is known on this record.
    """

    patent_id: str
    filing_month: int
    inventors: tuple[str, ...]
    locations: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.inventors:
            raise DataValidationError(f"patent {self.patent_id}: empty inventor list")
        if len(set(self.inventors)) != len(self.inventors):
            raise DataValidationError(f"patent {self.patent_id}: duplicate inventor ids")


@dataclass(frozen=True)
class DyadEvent:
    """A pairwise relational event: one inventor pair on one patent.

    ``d`` is the 1-based event-time index on the study grid, or None for
    events that do not enter the likelihood (an inactive endpoint, or a
    month outside the study period).  ``i < j`` canonically.
    """

    month: int
    i: str
    j: str
    patent_id: str
    d: int | None = None


@dataclass(frozen=True)
class StudyWindow:
    """Study period plus the covariate look-back configuration.

    The period is the inclusive month range [period_start, period_end].
    Covariates at any event time use network history accumulated from
    ``period_start - history_months`` onward.  ``burn_in_months`` records
    how much pre-period data the dataset is expected to carry; it never
    contributes events to the likelihood.
    """

    period_start: int
    period_end: int
    history_months: int = 24
    burn_in_months: int = 24

    def __post_init__(self):
        if self.period_start >= self.period_end:
            raise DataValidationError("period_start must be < period_end")
        if self.history_months < 0:
            raise DataValidationError("history_months must be >= 0")

    @property
    def history_start(self) -> int:
        return self.period_start - self.history_months

    def in_period(self, month: int) -> bool:
        return self.period_start <= month <= self.period_end


def canonical_pair(a, b):
    """Order a dyad under the fixed total order on actor ids."""
    if a == b:
        raise DataValidationError(f"self-pair ({a!r}, {a!r}) is not a dyad")
    return (a, b) if a < b else (b, a)


def parse_events(source, delimiter: str = ",") -> list[PatentRecord]:
    """Parse a long-format event CSV into patent records.

    ``source`` may be a path, a text file object, or bytes.  Rows sharing a
    patent_id are grouped into one record; rows with missing lat/lon yield
    inventors without a location.  Raises ParseError (with line number) on
    malformed rows and DataValidationError on duplicate (patent, inventor)
    pairs or inconsistent months within one patent.
    """
    if isinstance(source, (bytes, bytearray)):
        fh = io.StringIO(source.decode("utf-8"))
        close = False
    elif hasattr(source, "read"):
        fh = source
        close = False
    else:
        fh = open(source, "r", encoding="utf-8", newline="")
        close = True
    try:
        return _parse_stream(fh, delimiter)
    finally:
        if close:
            fh.close()


def _parse_stream(fh, delimiter):
    reader = csv.reader(_strip_comments(fh), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input", line=1) from None
    header = [h.strip() for h in header]
    if header != list(CSV_HEADER):
        raise ParseError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}", line=1)

    months: dict[str, int] = {}
    inventors: dict[str, list[str]] = {}
    locations: dict[str, dict] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 fields, got {len(row)}", line=lineno)
        pid, month_s, inv, lat_s, lon_s = (c.strip() for c in row)
        if not pid or not inv:
            raise ParseError("empty patent_id or inventor_id", line=lineno)
        try:
            month = int(month_s)
        except ValueError:
            raise ParseError(f"non-integer filing_month {month_s!r}", line=lineno) from None
        if pid in months:
            if months[pid] != month:
                raise DataValidationError(
                    f"patent {pid}: inconsistent filing_month ({months[pid]} vs {month})"
                )
            if inv in inventors[pid]:
                raise DataValidationError(f"duplicate (patent, inventor) pair ({pid}, {inv})")
        else:
            months[pid] = month
            inventors[pid] = []
            locations[pid] = {}
        inventors[pid].append(inv)
        if lat_s or lon_s:
            try:
                locations[pid][inv] = (float(lat_s), float(lon_s))
            except ValueError:
                raise ParseError(f"non-numeric coordinates ({lat_s!r}, {lon_s!r})", line=lineno) from None

    records = [
        PatentRecord(pid, months[pid], tuple(inventors[pid]), locations[pid])
        for pid in months
    ]
    records.sort(key=lambda r: (r.filing_month, r.patent_id))
    return records


def _strip_comments(fh):
    for line in fh:
        if not line.lstrip().startswith("#"):
            yield line


def filter_records(records, max_inventors: int = 20) -> list[PatentRecord]:
    """Drop records with more than ``max_inventors`` inventors (strict)."""
    if max_inventors < 2:
        raise DataValidationError("max_inventors must be >= 2")
    kept = [r for r in records if len(r.inventors) <= max_inventors]
    removed = len(records) - len(kept)
    if removed:
        log.info("filtered %d record(s) with more than %d inventors", removed, max_inventors)
    return kept


def active_actors(records, window: StudyWindow) -> set:
    """Actors eligible for the option set.

    An actor is active with at least one patent inside the period, or with
    patents both strictly before and strictly after it.
    """
    inside, before, after = set(), set(), set()
    for r in records:
        if window.in_period(r.filing_month):
            inside.update(r.inventors)
        elif r.filing_month < window.period_start:
            before.update(r.inventors)
        else:
            after.update(r.inventors)
    return inside | (before & after)


def expand_dyads(records, active: set, window: StudyWindow):
    """Expand in-period patents into dyad events and build the time grid.

    Returns ``(events, grid)`` where ``grid`` is the sorted list of months
    carrying at least one event with both endpoints active.  Each k-inventor
    record yields k(k-1)/2 events; events with an inactive endpoint keep
    ``d=None`` and never enter an event set, though their patent still
    updates the network history elsewhere.
    """
    raw = []
    for r in records:
        if not window.in_period(r.filing_month):
            continue
        for a, b in itertools.combinations(r.inventors, 2):
            i, j = canonical_pair(a, b)
            raw.append((r.filing_month, r.patent_id, i, j))
    raw.sort()

    grid = sorted({m for m, _, i, j in raw if i in active and j in active})
    d_of_month = {m: d for d, m in enumerate(grid, start=1)}
    events = [
        DyadEvent(
            month=m,
            i=i,
            j=j,
            patent_id=pid,
            d=d_of_month[m] if (i in active and j in active) else None,
        )
        for m, pid, i, j in raw
    ]
    return events, grid


def records_to_csv(records, out, provenance: str | None = None) -> None:
    """Write records in the canonical long-format CSV schema."""
    fh, close = _open_out(out)
    try:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            for inv in r.inventors:
                loc = r.locations.get(inv)
                lat = repr(loc[0]) if loc else ""
                lon = repr(loc[1]) if loc else ""
                writer.writerow([r.patent_id, r.filing_month, inv, lat, lon])
    finally:
        if close:
            fh.close()


def export_poisson_long(design, out, provenance: str | None = None) -> int:
    """Write the design in long format for external count-model fitting.

    One row per (event time, option-set dyad) with the response ``y`` equal
    to the dyad's event count at that time (0 almost everywhere).  Fitting a
    log-linear count model with per-time intercepts on this file reproduces
    the native coefficient estimates.  Returns the number of data rows.
    """
    fh, close = _open_out(out)
    n_rows = 0
    try:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(POISSON_HEADER)
        for block in design.blocks:
            x = design.materialize(block)
            counts = block.event_count_vector(design.n_pairs)
            ids = design.actor_ids
            iu, ju = design.pair_index
            for l in range(design.n_pairs):
                writer.writerow(
                    [
                        block.d,
                        block.month,
                        ids[iu[l]],
                        ids[ju[l]],
                        int(counts[l]),
                        repr(float(x[l, 0])),
                        repr(float(x[l, 1])),
                        repr(float(x[l, 2])),
                        repr(float(x[l, 3])),
                        repr(float(x[l, 4])),
                    ]
                )
                n_rows += 1
    finally:
        if close:
            fh.close()
    return n_rows


def _open_out(out):
    if hasattr(out, "write"):
        return out, False
    return open(out, "w", encoding="utf-8", newline=""), True
