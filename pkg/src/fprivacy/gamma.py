"""Candidate lists of two-size bucket settings and their search regions.

For a table of n records and bucket sizes s1 < s2, every way of covering the
table exactly is a pair of bucket counts (b1, b2) with s1*b1 + s2*b2 = n.  The
non-negative solutions form an arithmetic progression, stored compactly as
:class:`GammaList`.  Information loss is strictly increasing along the list,
so a search can restrict itself to a prefix once it holds a candidate loss,
and the privacy constraints carve the prefix into at most a few index
intervals that binary searches locate without touching every pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ConfigError, PrivacySpec, SaHistogram, value_slots

__all__ = [
    "GammaList",
    "IndexRegion",
    "RegionStats",
    "build_gamma",
    "loss_prefix",
    "fc_region",
    "pc_region",
    "valid_region",
]


@dataclass(frozen=True)
class GammaList:
    """Arithmetic progression of (b1, b2) pairs covering a fixed table size.

    Position i holds the pair (b1_first - i*step1, b2_first + i*step2) for
    i in 0..last_index.  Seven integers determine the whole list; the table
    size is recoverable as ``n``.
    """

    size1: int
    size2: int
    b1_first: int
    b2_first: int
    step1: int
    step2: int
    last_index: int

    @property
    def n(self) -> int:
        return self.size1 * self.b1_first + self.size2 * self.b2_first

    def __len__(self) -> int:
        return self.last_index + 1

    def pair_at(self, i: int) -> tuple[int, int]:
        """Bucket-count pair at position i."""
        if not 0 <= i <= self.last_index:
            raise IndexError(f"position {i} outside 0..{self.last_index}")
        return self.b1_first - i * self.step1, self.b2_first + i * self.step2

    def loss_at(self, i: int) -> int:
        b1, b2 = self.pair_at(i)
        return b1 * (self.size1 - 1) ** 2 + b2 * (self.size2 - 1) ** 2

    def pairs(self) -> list[tuple[int, int]]:
        """All pairs in position order (small lists only; len == last_index+1)."""
        return [self.pair_at(i) for i in range(self.last_index + 1)]


def build_gamma(n: int, size1: int, size2: int) -> GammaList | None:
    """Enumerate all exact two-size coverings of n records, or None if none exist.

    size2 may exceed n; the list is then empty or degenerate but the call is
    still well-defined (sub-table searches rely on this).
    """
    if n < 1:
        raise ConfigError(f"table size must be positive, got {n}")
    if not 1 <= size1 < size2:
        raise ConfigError(f"need 1 <= size1 < size2, got ({size1}, {size2})")
    common = math.lcm(size1, size2)
    step1 = common // size1
    step2 = common // size2
    for b2 in range(step2):
        rem = n - size2 * b2
        if rem >= 0 and rem % size1 == 0:
            b1_first = rem // size1
            return GammaList(size1, size2, b1_first, b2, step1, step2,
                             b1_first // step1)
    return None


def loss_prefix(gamma: GammaList, best_loss: float) -> int:
    """Length of the prefix whose loss is strictly below best_loss.

    Loss grows by the constant step2*(size2-1)^2 - step1*(size1-1)^2 (> 0)
    per position, so the cut-off is a division, not a scan.
    """
    if best_loss == math.inf:
        return gamma.last_index + 1
    first = gamma.loss_at(0)
    best = int(best_loss)
    if best <= first:
        return 0
    diff = (gamma.step2 * (gamma.size2 - 1) ** 2
            - gamma.step1 * (gamma.size1 - 1) ** 2)
    return min(gamma.last_index, (best - first - 1) // diff) + 1


@dataclass(frozen=True)
class IndexRegion:
    """Union of disjoint, ascending inclusive position intervals."""

    intervals: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        prev_hi = None
        for lo, hi in self.intervals:
            if lo > hi:
                raise ConfigError(f"empty interval ({lo}, {hi}) in region")
            if prev_hi is not None and lo <= prev_hi + 1:
                raise ConfigError("region intervals overlap or touch")
            prev_hi = hi

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def first(self) -> int:
        if not self.intervals:
            raise ConfigError("empty region has no first position")
        return self.intervals[0][0]

    def contains(self, pos: int) -> bool:
        return any(lo <= pos <= hi for lo, hi in self.intervals)

    def positions(self) -> list[int]:
        out: list[int] = []
        for lo, hi in self.intervals:
            out.extend(range(lo, hi + 1))
        return out

    def intersect(self, other: "IndexRegion") -> "IndexRegion":
        merged = []
        for alo, ahi in self.intervals:
            for blo, bhi in other.intervals:
                lo, hi = max(alo, blo), min(ahi, bhi)
                if lo <= hi:
                    merged.append((lo, hi))
        return IndexRegion(tuple(merged))


@dataclass
class RegionStats:
    """Accumulates constraint-evaluation counts across region computations."""

    cond_evals: int = 0
    pc_splits: int = 0


def _kernel_args(gamma: GammaList, hist: SaHistogram, spec: PrivacySpec):
    u1 = value_slots(spec, gamma.size1)
    u2 = value_slots(spec, gamma.size2)
    o = hist.counts.astype(np.int64)
    return (gamma.b1_first, gamma.step1, gamma.b2_first, gamma.step2,
            gamma.size1, gamma.size2, u1, u2, o)


def fc_region(gamma: GammaList, hist: SaHistogram, spec: PrivacySpec,
              prefix_len: int, stats: RegionStats | None = None) -> IndexRegion:
    """Positions in the prefix where both fill constraints hold.

    Always a single interval: the small-size constraint holds on a suffix of
    positions and the large-size one on a prefix.
    """
    if prefix_len <= 0:
        return IndexRegion()
    kp = min(prefix_len, gamma.last_index + 1) - 1
    b1f, d1, b2f, d2, s1, s2, u1, u2, o = _kernel_args(gamma, hist, spec)
    lo, hi, probes = _kernels.fc_bounds(kp, b1f, d1, b2f, d2, s1, s2, u1, u2, o)
    if stats is not None:
        stats.cond_evals += int(probes)
    if lo > hi:
        return IndexRegion()
    return IndexRegion(((int(lo), int(hi)),))


def pc_region(gamma: GammaList, hist: SaHistogram, spec: PrivacySpec,
              prefix_len: int, value: int,
              stats: RegionStats | None = None) -> IndexRegion:
    """Positions in the prefix where one value's allocation condition holds.

    The failure set is one run, so the result is at most two intervals.
    """
    if not 0 <= value < hist.m:
        raise ConfigError(f"value code {value} outside 0..{hist.m - 1}")
    if prefix_len <= 0:
        return IndexRegion()
    kp = min(prefix_len, gamma.last_index + 1) - 1
    b1f, d1, b2f, d2, s1, s2, u1, u2, o = _kernel_args(gamma, hist, spec)
    glo, ghi, probes = _kernels.pc_gap(kp, b1f, d1, b2f, d2,
                                       u1[value], u2[value], o[value])
    if stats is not None:
        stats.cond_evals += int(probes)
    if glo > ghi:
        return IndexRegion(((0, kp),))
    parts = []
    if glo > 0:
        parts.append((0, int(glo) - 1))
    if ghi < kp:
        parts.append((int(ghi) + 1, kp))
    return IndexRegion(tuple(parts))


def valid_region(gamma: GammaList, hist: SaHistogram, spec: PrivacySpec,
                 best_loss: float = math.inf,
                 stats: RegionStats | None = None) -> IndexRegion:
    """Positions holding a fully valid setting with loss below best_loss.

    Intersects the fill-constraint interval with every value's allocation
    region inside the strict-improvement prefix.  Cost is O(m log len) probes.
    """
    prefix_len = loss_prefix(gamma, best_loss)
    if prefix_len <= 0:
        return IndexRegion()
    kp = prefix_len - 1
    b1f, d1, b2f, d2, s1, s2, u1, u2, o = _kernel_args(gamma, hist, spec)
    lo, hi, probes = _kernels.fc_bounds(kp, b1f, d1, b2f, d2, s1, s2, u1, u2, o)
    total = int(probes)
    gaps = []
    splits = 0
    if lo <= hi:
        for i in range(hist.m):
            glo, ghi, pr = _kernels.pc_gap(kp, b1f, d1, b2f, d2,
                                           u1[i], u2[i], o[i])
            total += int(pr)
            if glo <= ghi:
                gaps.append((int(glo), int(ghi)))
                if glo > 0 and ghi < kp:
                    splits += 1
    if stats is not None:
        stats.cond_evals += total
        stats.pc_splits += splits
    if lo > hi:
        return IndexRegion()
    lo, hi = int(lo), int(hi)
    intervals = []
    cur = lo
    for glo, ghi in sorted(gaps):
        if glo > hi:
            break
        if ghi < cur:
            continue
        if glo > cur:
            intervals.append((cur, glo - 1))
        cur = max(cur, ghi + 1)
        if cur > hi:
            break
    if cur <= hi:
        intervals.append((cur, hi))
    return IndexRegion(tuple(intervals))
