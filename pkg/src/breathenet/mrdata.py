"""Measurement-report batches: generation from simulated users, the
signal/attenuation domain switch, redundancy deletion, per-antenna lookup
tables and CSV persistence.

A record lists the ``top_m`` strongest antennas for one user, strongest first,
so the first entry is the main service antenna. Batches are stored as padded
arrays: ``ids`` holds 1-based antenna ids with 0 padding, ``values`` holds
received strength (dBm) or attenuation (dB) with NaN padding.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .traffic import UserBatch

_PAD_SENTINEL = np.iinfo(np.int32).max


@dataclass(frozen=True)
class MrRecord:
    """One measurement report: ((antenna_id, value), ...) strongest first."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a record needs at least one entry")
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate antenna ids in record: {ids}")

    @property
    def serving(self) -> int:
        return self.entries[0][0]


@dataclass
class MrDataset:
    """Padded-array batch of measurement records.

    ``raw_count`` preserves the pre-deduplication record count. ``per_antenna``
    maps antenna id -> (record indices, values) ranked by attenuation
    ascending with ties by record index; it is only present after
    ``build_per_antenna_tables`` and only meaningful in the attenuation
    domain. Treat datasets as immutable once tables are attached.
    """

    ids: np.ndarray
    values: np.ndarray
    domain: str
    n_antennas: int
    recorded_powers: np.ndarray | None = None
    raw_count: int | None = None
    per_antenna: dict[int, tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        if self.domain not in ("signal", "attenuation"):
            raise ValueError(f"unknown record domain {self.domain!r}")
        if self.ids.shape != self.values.shape:
            raise ValueError("ids/values shape mismatch")
        if self.raw_count is None:
            self.raw_count = len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def top_m(self) -> int:
        return self.ids.shape[1]

    def entry_mask(self) -> np.ndarray:
        return self.ids > 0

    def serving(self) -> np.ndarray:
        """Main service antenna id per record."""
        if len(self.ids) == 0:
            return np.zeros(0, dtype=np.int64)
        return self.ids[:, 0].astype(np.int64)

    def serving_indices(self, i: int) -> np.ndarray:
        """Record indices whose main service antenna is i."""
        return np.flatnonzero(self.serving() == i)

    def relevant_indices(self, i: int) -> np.ndarray:
        """Record indices mentioning antenna i anywhere."""
        return np.flatnonzero((self.ids == i).any(axis=1))

    def record(self, idx: int) -> MrRecord:
        m = self.ids[idx] > 0
        return MrRecord(tuple(zip(self.ids[idx, m].tolist(),
                                  self.values[idx, m].tolist())))


def dataset_from_records(records, domain: str, n_antennas: int,
                         recorded_powers=None) -> MrDataset:
    width = max((len(r.entries) for r in records), default=1)
    k = len(records)
    ids = np.zeros((k, width), dtype=np.int32)
    values = np.full((k, width), np.nan)
    for row, rec in enumerate(records):
        for col, (aid, val) in enumerate(rec.entries):
            ids[row, col] = aid
            values[row, col] = val
    powers = None if recorded_powers is None else np.asarray(recorded_powers, float)
    return MrDataset(ids, values, domain, n_antennas, recorded_powers=powers)


def generate_mr(users: UserBatch, powers: np.ndarray, top_m: int = 6) -> MrDataset:
    """Record the top_m strongest antennas for every user under ``powers``.

    Entries are sorted by received strength descending with exact ties broken
    by ascending antenna id, so entry 0 agrees with ``assign_users``.
    """
    if top_m < 1:
        raise ValueError("top_m must be at least 1")
    powers = np.asarray(powers, dtype=float)
    n = users.n_antennas
    if powers.shape != (n,):
        raise ValueError("power vector length does not match antenna count")
    m = min(top_m, n)
    u = len(users)
    if u == 0:
        return MrDataset(np.zeros((0, m), np.int32), np.zeros((0, m)),
                         "signal", n, recorded_powers=powers.copy())
    received = powers[None, :] - users.attenuation
    if m < n:
        part = np.argpartition(-received, m - 1, axis=1)[:, :m]
    else:
        part = np.broadcast_to(np.arange(n), (u, n)).copy()
    vals = np.take_along_axis(received, part, axis=1)
    order = np.lexsort((part, -vals), axis=1)
    ids = np.take_along_axis(part, order, axis=1).astype(np.int32) + 1
    vals = np.take_along_axis(vals, order, axis=1)
    return MrDataset(ids, vals, "signal", n, recorded_powers=powers.copy())


def to_attenuation(ds: MrDataset, powers: np.ndarray) -> MrDataset:
    """Switch a signal-domain batch to attenuation: each entry becomes
    a = p_entry_antenna - s, with ``powers`` recorded on the result."""
    if ds.domain != "attenuation" and ds.domain != "signal":
        raise ValueError(f"unknown domain {ds.domain!r}")
    if ds.domain == "attenuation":
        raise ValueError("batch is already in the attenuation domain")
    return _flip_domain(ds, powers, "attenuation")


def to_signal(ds: MrDataset, powers: np.ndarray) -> MrDataset:
    """Inverse of ``to_attenuation``: s = p - a under the same power vector."""
    if ds.domain == "signal":
        raise ValueError("batch is already in the signal domain")
    return _flip_domain(ds, powers, "signal")


def _flip_domain(ds: MrDataset, powers, domain: str) -> MrDataset:
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (ds.n_antennas,):
        raise ValueError("power vector length does not match antenna count")
    mask = ds.entry_mask()
    safe_ids = np.where(mask, ds.ids, 1)
    values = np.where(mask, powers[safe_ids - 1] - ds.values, np.nan)
    return MrDataset(ds.ids.copy(), values, domain, ds.n_antennas,
                     recorded_powers=powers.copy(), raw_count=ds.raw_count)


def remove_redundant(ds: MrDataset) -> MrDataset:
    """Delete records made redundant for coverage purposes.

    Record B is redundant when some record A lists a subset of B's antennas
    with entrywise greater-or-equal attenuation on the shared antennas: if A
    is covered then B is covered automatically. Applied to a fixpoint;
    mutually redundant (identical) records keep the earliest. Survivor order
    is preserved; ``raw_count`` keeps the pre-deletion count.
    """
    if ds.domain != "attenuation":
        raise ValueError("redundancy deletion operates on attenuation batches")
    k = len(ds)
    if k <= 1:
        return MrDataset(ds.ids.copy(), ds.values.copy(), ds.domain,
                         ds.n_antennas, recorded_powers=ds.recorded_powers,
                         raw_count=ds.raw_count)

    mask = ds.entry_mask()
    sort_ids = np.where(mask, ds.ids, _PAD_SENTINEL)
    order = np.argsort(sort_ids, axis=1, kind="stable")
    sids = np.take_along_axis(sort_ids, order, axis=1)
    svals = np.take_along_axis(ds.values, order, axis=1)
    sizes = mask.sum(axis=1)

    uniq, inverse = np.unique(sids, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    by_group = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(uniq))
    bounds = np.concatenate([[0], np.cumsum(counts)])
    group_rows = [by_group[bounds[g]:bounds[g + 1]] for g in range(len(uniq))]
    group_key = [tuple(int(x) for x in row[row != _PAD_SENTINEL]) for row in uniq]
    key_index = {key: g for g, key in enumerate(group_key)}
    sizes_present = sorted({len(key) for key in group_key})

    deleted = np.zeros(k, dtype=bool)
    for g, key in enumerate(group_key):
        rows_b = group_rows[g]
        width = len(key)
        vb = svals[rows_b][:, :width]
        if len(rows_b) > 1:
            deleted[rows_b] |= _same_set_redundant(vb, rows_b)
        for t in sizes_present:
            if t >= width:
                break
            for sub in combinations(key, t):
                ga = key_index.get(sub)
                if ga is None:
                    continue
                rows_a = group_rows[ga]
                va = svals[rows_a][:, :t]
                cols = np.searchsorted(np.asarray(key), np.asarray(sub))
                deleted[rows_b] |= _has_dominator(va, vb[:, cols])
    keep = ~deleted
    return MrDataset(ds.ids[keep].copy(), ds.values[keep].copy(), ds.domain,
                     ds.n_antennas, recorded_powers=ds.recorded_powers,
                     raw_count=ds.raw_count)


def _same_set_redundant(vb: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Within one antenna-set group: mark rows with a dominating peer.

    Strict dominators always delete; for identical value vectors only the
    earliest record (by original index) survives.
    """
    g, m = vb.shape
    out = np.zeros(g, dtype=bool)
    block = max(1, int(4e6) // max(1, g * m))
    for lo in range(0, g, block):
        hi = min(g, lo + block)
        ge_ab = (vb[:, None, :] >= vb[None, lo:hi, :]).all(axis=2)
        ge_ba = (vb[None, lo:hi, :] >= vb[:, None, :]).all(axis=2)
        strict = ge_ab & ~ge_ba
        equal = ge_ab & ge_ba
        earlier = rows[:, None] < rows[None, lo:hi]
        out[lo:hi] = strict.any(axis=0) | (equal & earlier).any(axis=0)
    return out


def _has_dominator(va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """True per vb row when some va row is >= entrywise."""
    a, t = va.shape
    b = len(vb)
    out = np.zeros(b, dtype=bool)
    block = max(1, int(4e6) // max(1, a * t))
    for lo in range(0, b, block):
        hi = min(b, lo + block)
        out[lo:hi] = (va[None, :, :] >= vb[lo:hi, None, :]).all(axis=2).any(axis=1)
    return out


def build_per_antenna_tables(ds: MrDataset) -> MrDataset:
    """Attach per-antenna ranked tables: record indices sorted by the record's
    attenuation for that antenna, ascending, ties by record index."""
    if ds.domain != "attenuation":
        raise ValueError("per-antenna tables are ranked by attenuation")
    tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    rows, cols = np.nonzero(ds.ids > 0)
    aids = ds.ids[rows, cols]
    vals = ds.values[rows, cols]
    order = np.lexsort((rows, vals, aids))
    aids, rows, vals = aids[order], rows[order], vals[order]
    bounds = np.flatnonzero(np.diff(aids)) + 1
    for chunk_rows, chunk_vals, aid in zip(
            np.split(rows, bounds), np.split(vals, bounds),
            aids[np.concatenate([[0], bounds])] if len(aids) else []):
        tables[int(aid)] = (chunk_rows.astype(np.int64), chunk_vals)
    ds.per_antenna = tables
    return ds


def sample_for_jacobian(ds: MrDataset, i: int, n_s: int, seed: int = 0) -> np.ndarray:
    """Uniformly sample up to n_s serving-record indices of antenna i.

    Without replacement, deterministic given (seed, i); returns the full set
    (in order) when it has at most n_s records.
    """
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    rows = ds.serving_indices(i)
    if len(rows) <= n_s:
        return rows
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
    pick = rng.choice(len(rows), size=n_s, replace=False)
    pick.sort()
    return rows[pick]


def co_neighbours(ds: MrDataset) -> list[set[int]]:
    """Antennas are neighbours when they appear in the same record."""
    n = ds.n_antennas
    sets: list[set[int]] = [set() for _ in range(n)]
    m = ds.top_m
    pairs = []
    for c1 in range(m):
        for c2 in range(c1 + 1, m):
            a, b = ds.ids[:, c1], ds.ids[:, c2]
            ok = (a > 0) & (b > 0)
            if ok.any():
                pairs.append(np.stack([a[ok], b[ok]], axis=1))
    if pairs:
        uniq = np.unique(np.concatenate(pairs), axis=0)
        for a, b in uniq:
            sets[int(a) - 1].add(int(b))
            sets[int(b) - 1].add(int(a))
    return sets


@dataclass(frozen=True)
class LoadReport:
    kept: int
    rejected: int


def save_csv(ds: MrDataset, path) -> None:
    """Persist as (record_id, rank, antenna_id, value, domain) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "rank", "antenna_id", "value", "domain"])
        mask = ds.entry_mask()
        for row in range(len(ds)):
            rank = 1
            for col in range(ds.top_m):
                if not mask[row, col]:
                    continue
                w.writerow([row + 1, rank, int(ds.ids[row, col]),
                            repr(float(ds.values[row, col])), ds.domain])
                rank += 1


def load_csv(path, n_antennas: int, powers=None) -> tuple[MrDataset, LoadReport]:
    """Load a record batch, enforcing the main-service invariant.

    Rows of a record are sorted by rank; a record is rejected when it has
    duplicate antenna ids, out-of-range ids, non-finite values, or its first
    entry is not the strongest (signal domain; for attenuation batches the
    recording ``powers`` are required to reconstruct received strengths).
    """
    by_record: dict[int, list[tuple[int, int, float]]] = {}
    domain = None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rid = int(row["record_id"])
            dom = row["domain"]
            if domain is None:
                domain = dom
            elif domain != dom:
                raise ValueError("mixed record domains in one batch")
            by_record.setdefault(rid, []).append(
                (int(row["rank"]), int(row["antenna_id"]), float(row["value"])))
    if domain is None:
        domain = "signal"
    if domain == "attenuation" and powers is None:
        raise ValueError("attenuation batches need the recording power vector")
    pvec = None if powers is None else np.asarray(powers, dtype=float)

    kept_records = []
    rejected = 0
    for rid in sorted(by_record):
        entries = sorted(by_record[rid])
        aids = [aid for _, aid, _ in entries]
        vals = [val for _, _, val in entries]
        if (len(set(aids)) != len(aids)
                or any(not 1 <= a <= n_antennas for a in aids)
                or any(not np.isfinite(v) for v in vals)):
            rejected += 1
            continue
        received = (vals if domain == "signal"
                    else [pvec[a - 1] - v for a, v in zip(aids, vals)])
        if any(received[0] < s for s in received[1:]):
            rejected += 1
            continue
        kept_records.append(MrRecord(tuple(zip(aids, vals))))
    if not kept_records:
        warnings.warn("loaded batch has no valid records")
    ds = dataset_from_records(kept_records, domain, n_antennas,
                              recorded_powers=pvec)
    return ds, LoadReport(kept=len(kept_records), rejected=rejected)


def subsample(ds: MrDataset, cap: int, seed: int = 0) -> MrDataset:
    """Uniform record subsample (without replacement) used to cap the
    coverage pipeline; cap=0 keeps everything."""
    if cap <= 0 or len(ds) <= cap:
        return ds
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(len(ds),)))
    pick = rng.choice(len(ds), size=cap, replace=False)
    pick.sort()
    return MrDataset(ds.ids[pick].copy(), ds.values[pick].copy(), ds.domain,
                     ds.n_antennas, recorded_powers=ds.recorded_powers,
                     raw_count=ds.raw_count)
