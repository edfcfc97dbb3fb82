"""Purchase-log ingestion, category maps, recency lookups, and splitting.

The central object is a :class:`PurchaseLog`: a deduplicated, lexicographically
sorted set of (user, item, slot) triplets with dense integer ids.  Slots are
time bins of configurable granularity.  A :class:`RecencyIndex` answers "how
many slots since user i last purchased anything in category c strictly before
slot k", which is the time feature the solver and the predictor consume.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from datetime import date
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DataFormatError

TIMESTAMP_FORMATS = ("days", "iso")


def _sorted_labels(labels):
    """Deterministic label order: numeric when every label parses as an
    integer, plain lexicographic otherwise.  Independent of input order."""
    uniq = sorted(set(labels))
    try:
        uniq.sort(key=int)
    except ValueError:
        pass
    return uniq


class PairStructure(NamedTuple):
    """Distinct (user, item) pairs of a log plus the triplet -> pair map."""

    index: np.ndarray  # len nnz, pair id of each triplet
    users: np.ndarray  # len n_pairs
    items: np.ndarray  # len n_pairs
    counts: np.ndarray  # len n_pairs, purchases per pair


@dataclass(eq=False)
class PurchaseLog:
    """Sorted unique purchase triplets with dense ids.

    ``users``, ``items``, ``slots`` are parallel int64 arrays sorted by
    (user, item, slot).  ``user_labels`` / ``item_labels`` retain the original
    external ids when the log came from a CSV file.
    """

    users: np.ndarray
    items: np.ndarray
    slots: np.ndarray
    m: int
    n: int
    l: int
    user_labels: list | None = None
    item_labels: list | None = None
    _pairs: PairStructure | None = field(default=None, repr=False)

    @property
    def nnz(self) -> int:
        return self.users.shape[0]

    def pairs(self) -> PairStructure:
        """Distinct (user, item) pairs; cached after the first call."""
        if self._pairs is None:
            boundary = np.empty(self.nnz, dtype=bool)
            boundary[0] = True
            boundary[1:] = (self.users[1:] != self.users[:-1]) | (
                self.items[1:] != self.items[:-1]
            )
            starts = np.nonzero(boundary)[0]
            self._pairs = PairStructure(
                index=np.cumsum(boundary) - 1,
                users=self.users[starts],
                items=self.items[starts],
                counts=np.diff(np.append(starts, self.nnz)),
            )
        return self._pairs

    def user_ranges(self) -> np.ndarray:
        """Offsets of each user's triplet block; shape (m + 1,)."""
        return np.searchsorted(self.users, np.arange(self.m + 1))


def _build_log(users, items, slots, m, n, user_labels=None, item_labels=None):
    """Sort lexicographically, drop duplicate triplets, infer l."""
    if users.shape[0] == 0:
        raise DataFormatError("purchase log contains no records")
    order = np.lexsort((slots, items, users))
    users = users[order]
    items = items[order]
    slots = slots[order]
    keep = np.empty(users.shape[0], dtype=bool)
    keep[0] = True
    keep[1:] = (
        (users[1:] != users[:-1])
        | (items[1:] != items[:-1])
        | (slots[1:] != slots[:-1])
    )
    users = users[keep]
    items = items[keep]
    slots = slots[keep]
    return PurchaseLog(
        users=users,
        items=items,
        slots=slots,
        m=int(m),
        n=int(n),
        l=int(slots.max()) + 1,
        user_labels=user_labels,
        item_labels=item_labels,
    )


def _parse_timestamp(text, timestamp_format, where):
    if timestamp_format == "days":
        try:
            return int(text)
        except ValueError:
            raise DataFormatError(f"{where}: bad epoch-day timestamp {text!r}") from None
    try:
        return date.fromisoformat(text).toordinal()
    except ValueError:
        raise DataFormatError(f"{where}: bad ISO date {text!r}") from None


def ingest_purchases(path, granularity=1.0, timestamp_format="days") -> PurchaseLog:
    """Read a ``user_id,item_id,timestamp`` CSV into a :class:`PurchaseLog`.

    Timestamps are either integer epoch-days or ISO dates depending on
    ``timestamp_format``.  They are shifted so the earliest becomes slot 0 and
    binned by ``granularity`` (in days).  Ids may be arbitrary strings; they
    are re-indexed densely in a deterministic, input-order-independent way.
    Duplicate (user, item, slot) rows collapse to a single triplet.
    """
    if granularity <= 0:
        raise DataFormatError(f"granularity must be positive, got {granularity}")
    if timestamp_format not in TIMESTAMP_FORMATS:
        raise DataFormatError(
            f"timestamp_format must be one of {TIMESTAMP_FORMATS}, got {timestamp_format!r}"
        )
    raw_users = []
    raw_items = []
    stamps = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataFormatError(
                    f"{path}:{lineno}: expected user_id,item_id,timestamp, got {len(row)} fields"
                )
            raw_users.append(row[0].strip())
            raw_items.append(row[1].strip())
            stamps.append(
                _parse_timestamp(row[2].strip(), timestamp_format, f"{path}:{lineno}")
            )
    if not raw_users:
        raise DataFormatError(f"{path}: no purchase records")

    user_labels = _sorted_labels(raw_users)
    item_labels = _sorted_labels(raw_items)
    user_code = {lab: i for i, lab in enumerate(user_labels)}
    item_code = {lab: i for i, lab in enumerate(item_labels)}
    users = np.fromiter((user_code[u] for u in raw_users), dtype=np.int64)
    items = np.fromiter((item_code[i] for i in raw_items), dtype=np.int64)
    stamps = np.asarray(stamps, dtype=np.int64)
    slots = np.floor((stamps - stamps.min()) / float(granularity)).astype(np.int64)
    return _build_log(
        users,
        items,
        slots,
        m=len(user_labels),
        n=len(item_labels),
        user_labels=user_labels,
        item_labels=item_labels,
    )


def export_log(log: PurchaseLog, path) -> None:
    """Write the canonical text form: header ``m n l nnz``, then sorted
    ``user item slot`` rows with dense ids."""
    with open(path, "w") as fh:
        fh.write(f"{log.m} {log.n} {log.l} {log.nnz}\n")
        chunk = 1_000_000
        for a in range(0, log.nnz, chunk):
            b = min(a + chunk, log.nnz)
            rows = [
                f"{u} {i} {k}"
                for u, i, k in zip(
                    log.users[a:b].tolist(),
                    log.items[a:b].tolist(),
                    log.slots[a:b].tolist(),
                )
            ]
            fh.write("\n".join(rows))
            fh.write("\n")


def load_log(path) -> PurchaseLog:
    """Read a log written by :func:`export_log` back, verbatim."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise DataFormatError(f"{path}: bad header, expected 'm n l nnz'")
        try:
            m, n, l, nnz = (int(x) for x in header)
        except ValueError:
            raise DataFormatError(f"{path}: bad header, expected 'm n l nnz'") from None
        body = fh.read().split()
    if len(body) != 3 * nnz:
        raise DataFormatError(
            f"{path}: expected {3 * nnz} triplet fields, found {len(body)}"
        )
    try:
        flat = np.array(body, dtype=np.int64)
    except ValueError:
        raise DataFormatError(f"{path}: non-integer triplet field") from None
    triplets = flat.reshape(nnz, 3)
    users, items, slots = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    if nnz == 0:
        raise DataFormatError(f"{path}: empty log")
    if (
        users.min() < 0
        or users.max() >= m
        or items.min() < 0
        or items.max() >= n
        or slots.min() < 0
        or slots.max() >= l
    ):
        raise DataFormatError(f"{path}: triplet out of declared bounds")
    log = _build_log(users, items, slots, m=m, n=n)
    if log.nnz != nnz:
        raise DataFormatError(f"{path}: duplicate triplets in exported log")
    log.l = l  # trailing empty slots are allowed in the declared horizon
    return log


@dataclass(eq=False)
class CategoryMap:
    """Dense item -> category assignment for r categories."""

    assignment: np.ndarray  # int64, len n
    r: int
    category_labels: list | None = None

    def __post_init__(self):
        if self.assignment.shape[0] and (
            self.assignment.min() < 0 or self.assignment.max() >= self.r
        ):
            raise DataFormatError("category assignment out of range")


def ingest_categories(path, log: PurchaseLog) -> CategoryMap:
    """Read an ``item_id,category_id`` CSV covering every item of ``log``.

    Category ids are re-indexed densely like item/user ids.  Rows for items
    the log does not know are counted and warned about; items the file does
    not cover are an error.
    """
    item_labels = log.item_labels or [str(i) for i in range(log.n)]
    item_code = {lab: i for i, lab in enumerate(item_labels)}
    raw = {}
    unknown = 0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected item_id,category_id, got {len(row)} fields"
                )
            item, cat = row[0].strip(), row[1].strip()
            if item not in item_code:
                unknown += 1
                continue
            prev = raw.get(item)
            if prev is not None and prev != cat:
                raise DataFormatError(
                    f"{path}:{lineno}: conflicting categories for item {item!r}"
                )
            raw[item] = cat
    missing = [lab for lab in item_labels if lab not in raw]
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DataFormatError(f"{path}: items without category: {shown}{more}")
    if unknown:
        warnings.warn(f"{path}: ignored {unknown} rows for items not in the log")
    cat_labels = _sorted_labels(raw.values())
    cat_code = {lab: i for i, lab in enumerate(cat_labels)}
    assignment = np.fromiter(
        (cat_code[raw[lab]] for lab in item_labels), dtype=np.int64
    )
    return CategoryMap(assignment=assignment, r=len(cat_labels), category_labels=cat_labels)


class RecencyIndex:
    """Per (user, category) sorted purchase slots, with strict-predecessor
    gap queries.

    Built once per (log, categories) pairing.  Also precomputes, for every
    triplet of the log itself, the gap to the user's closest strictly earlier
    purchase in the item's category (``inf`` when there is none); the solver
    consumes that array on every iteration.
    """

    def __init__(self, log: PurchaseLog, cats: CategoryMap):
        if cats.assignment.shape[0] != log.n:
            raise DataFormatError(
                f"category map covers {cats.assignment.shape[0]} items, log has {log.n}"
            )
        self.log = log
        self.cats = cats
        self.r = cats.r
        trip_cats = cats.assignment[log.items]
        order = np.lexsort((log.slots, trip_cats, log.users))
        su = log.users[order]
        sc = trip_cats[order]
        sk = log.slots[order]
        new_group = np.empty(log.nnz, dtype=bool)
        new_group[0] = True
        new_group[1:] = (su[1:] != su[:-1]) | (sc[1:] != sc[:-1])
        gaps = kernels.strict_prev_gap(sk, new_group)
        self._trip_recency = np.empty(log.nnz)
        self._trip_recency[order] = gaps
        self._trip_cats = trip_cats

        # unique (user, category, slot) events in CSR-ish form
        ev_mask = new_group.copy()
        ev_mask[1:] |= sk[1:] != sk[:-1]
        self._event_slots = sk[ev_mask]
        group_start = new_group[ev_mask]
        starts = np.nonzero(group_start)[0]
        self._group_keys = su[ev_mask][starts] * self.r + sc[ev_mask][starts]
        self._offsets = np.append(starts, self._event_slots.shape[0])
        self._cat_order = None
        self._cat_bounds = None

    def triplet_recency(self) -> np.ndarray:
        """Strict-predecessor gap for each triplet of the source log,
        aligned with the log's storage order.  float64 with inf."""
        return self._trip_recency

    def triplet_categories(self) -> np.ndarray:
        """Category of each triplet of the source log."""
        return self._trip_cats

    def category_slices(self):
        """(order, bounds): triplet indices grouped by category and the
        per-category offsets into that order."""
        if self._cat_order is None:
            self._cat_order = np.argsort(self._trip_cats, kind="stable")
            counts = np.bincount(self._trip_cats, minlength=self.r)
            self._cat_bounds = np.append(0, np.cumsum(counts))
        return self._cat_order, self._cat_bounds

    def user_cat_slots(self, user: int, cat: int) -> np.ndarray:
        """Sorted slots where ``user`` purchased anything in ``cat``
        (possibly empty)."""
        key = user * self.r + cat
        g = np.searchsorted(self._group_keys, key)
        if g == self._group_keys.shape[0] or self._group_keys[g] != key:
            return self._event_slots[:0]
        return self._event_slots[self._offsets[g] : self._offsets[g + 1]]

    def query(self, user: int, cat: int, slot: int) -> float:
        """Slots since the user's last purchase in ``cat`` strictly before
        ``slot``; ``inf`` when there is no earlier purchase."""
        slots = self.user_cat_slots(user, cat)
        pos = np.searchsorted(slots, slot)
        if pos == 0:
            return math.inf
        return float(slot - slots[pos - 1])


def build_recency_index(log: PurchaseLog, cats: CategoryMap) -> RecencyIndex:
    return RecencyIndex(log, cats)


@dataclass(eq=False)
class SplitSpec:
    """Per-user holdout split.  ``train`` keeps the full log's dimensions."""

    train: PurchaseLog
    test_users: np.ndarray
    test_items: np.ndarray
    test_slots: np.ndarray
    fraction: float
    seed: int

    @property
    def n_test(self) -> int:
        return self.test_users.shape[0]


def split_train_test(log: PurchaseLog, fraction: float, seed: int) -> SplitSpec:
    """Hold out round(fraction * count) of each user's triplets, chosen
    uniformly per user, never leaving a user empty.  Deterministic in seed."""
    if not 0.0 <= fraction < 1.0:
        raise DataFormatError(f"split fraction must be in [0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    ranges = log.user_ranges()
    held_mask = np.zeros(log.nnz, dtype=bool)
    for u in range(log.m):
        lo, hi = ranges[u], ranges[u + 1]
        cnt = hi - lo
        if cnt <= 1:
            continue
        held = min(int(fraction * cnt + 0.5), cnt - 1)
        if held == 0:
            continue
        held_mask[lo + rng.choice(cnt, size=held, replace=False)] = True

    tu, ti, tk = log.users[held_mask], log.items[held_mask], log.slots[held_mask]
    order = np.lexsort((tk, ti, tu))
    train = PurchaseLog(
        users=log.users[~held_mask],
        items=log.items[~held_mask],
        slots=log.slots[~held_mask],
        m=log.m,
        n=log.n,
        l=log.l,
        user_labels=log.user_labels,
        item_labels=log.item_labels,
    )
    return SplitSpec(
        train=train,
        test_users=tu[order],
        test_items=ti[order],
        test_slots=tk[order],
        fraction=fraction,
        seed=seed,
    )
