"""Emit anonymized table pairs and harden them against exclusion attacks.

A bucketized release is two tables: one mapping each record's QI values to a
bucket id, one holding the bucket's sensitive values in scrambled order.  This
module writes and reads that pair, optionally pads every bucket with fake
sensitive values so an adversary who can exclude known records still faces
ambiguity, learns which (QI value, SA value) pairs are conspicuously absent
(an exclusion channel of its own), and simulates the corruption attack.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ConfigError, IngestionError, MicrodataTable
from .validate import Assignment

__all__ = [
    "PublishedTables",
    "NegAssociationModel",
    "BucketInference",
    "CorruptionReport",
    "publish",
    "inject_fakes",
    "learn_negative_associations",
    "corruption_attack_sim",
    "published_max_ratios",
    "check_published_privacy",
    "write_published",
    "read_published",
]


@dataclass(frozen=True)
class PublishedTables:
    """The released pair of tables plus the publisher's private fake map.

    Bucket ids are 1-based.  qi_codes/qit_bids follow original record order;
    st_bids ascend and st_codes are shuffled within each bucket.  The arrays
    are treated as immutable.  fake_map holds, per bucket, the injected fake
    SA codes; it never leaves the publisher's side.
    """

    qi_names: tuple[str, ...]
    sa_name: str
    qi_codes: np.ndarray   # (n, d) int32
    qit_bids: np.ndarray   # (n,) int32
    st_bids: np.ndarray    # (n + sigma*B,) int32, ascending
    st_codes: np.ndarray   # same length as st_bids, int32 SA codes
    qi_domains: tuple[tuple[str, ...], ...]
    sa_domain: tuple[str, ...]
    bucket_count: int
    sigma: int = 0
    fake_map: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.bucket_count < 1:
            raise ConfigError("published tables need at least one bucket")
        if len(self.qi_codes) != len(self.qit_bids):
            raise ConfigError("QIT row arrays disagree in length")
        if len(self.st_bids) != len(self.st_codes):
            raise ConfigError("ST row arrays disagree in length")
        if np.any(np.diff(self.st_bids) < 0):
            raise ConfigError("ST rows must be grouped by ascending bucket id")
        if (self.qit_bids.max(initial=1) > self.bucket_count
                or self.st_bids.max(initial=1) > self.bucket_count):
            raise ConfigError("bucket id exceeds the bucket count")
        qit_per = np.bincount(self.qit_bids, minlength=self.bucket_count + 1)
        st_per = np.bincount(self.st_bids, minlength=self.bucket_count + 1)
        if qit_per[0] or st_per[0]:
            raise ConfigError("bucket ids are 1-based")
        if np.any(qit_per[1:] + self.sigma != st_per[1:]):
            raise ConfigError(
                "each bucket must hold its record count plus sigma ST rows")
        if len(self.fake_map) != self.bucket_count:
            raise ConfigError("fake map must cover every bucket")

    def __len__(self) -> int:
        return len(self.qit_bids)

    @property
    def m(self) -> int:
        return len(self.sa_domain)

    def st_slice(self, bid: int) -> np.ndarray:
        """SA codes of one bucket's ST rows (fakes included)."""
        lo = np.searchsorted(self.st_bids, bid, side="left")
        hi = np.searchsorted(self.st_bids, bid, side="right")
        return self.st_codes[lo:hi]

    def qit_rows_of(self, bid: int) -> np.ndarray:
        """Record indices assigned to one bucket."""
        return np.nonzero(self.qit_bids == bid)[0]


def publish(table: MicrodataTable, assignment: Assignment,
            seed: int = 0) -> PublishedTables:
    """Split a table into its published pair under a record assignment.

    QIT rows keep original record order; each bucket's ST rows are shuffled
    with a per-bucket stream derived from the seed, so output is deterministic
    and buckets are independent.
    """
    n = len(table)
    if len(assignment.bucket_of) != n:
        raise ConfigError("assignment does not cover the table")
    bucket_count = assignment.bucket_count
    qit_bids = assignment.bucket_of.astype(np.int32) + 1
    st_bids = []
    st_codes = []
    root = np.random.SeedSequence(seed)
    streams = root.spawn(bucket_count)
    for b in range(bucket_count):
        codes = table.sa_codes[qit_bids == b + 1].copy()
        np.random.default_rng(streams[b]).shuffle(codes)
        st_bids.append(np.full(len(codes), b + 1, dtype=np.int32))
        st_codes.append(codes)
    return PublishedTables(
        qi_names=tuple(table.qi_names),
        sa_name=table.sa_name,
        qi_codes=table.qi_codes.copy(),
        qit_bids=qit_bids,
        st_bids=np.concatenate(st_bids),
        st_codes=np.concatenate(st_codes).astype(np.int32),
        qi_domains=tuple(tuple(d) for d in table.qi_domains),
        sa_domain=tuple(table.sa_domain),
        bucket_count=bucket_count,
        sigma=0,
        fake_map=tuple(() for _ in range(bucket_count)),
    )


def inject_fakes(pt: PublishedTables, sigma: int, seed: int = 0,
                 model: Optional["NegAssociationModel"] = None,
                 thresholds: Optional[dict[str, float]] = None,
                 ) -> PublishedTables:
    """Pad every bucket with sigma distinct fake SA values.

    Fakes are drawn uniformly without replacement from the SA domain, never
    collide with the bucket's real values, and, when an association model is
    supplied, avoid values an adversary could strike out as implausible for
    the bucket's QI values.  Buckets holding duplicate real values are
    refused: the distinct-value analysis behind the defense does not cover
    them.

    thresholds (SA label -> cap) additionally restricts fakes to values whose
    in-bucket weight 1/(s+sigma) stays under their own cap.  Real values only
    get diluted by padding, but a fake copy of a tightly capped value would
    raise its inference probability above the cap in that bucket, so such
    values are never picked as fakes when the caps are supplied.
    """
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return pt
    if pt.sigma > 0:
        raise ConfigError("fake values are already present; start from a "
                          "plain published pair")
    all_codes = np.arange(pt.m, dtype=np.int32)
    caps = None
    if thresholds is not None:
        try:
            caps = np.array([float(thresholds[label]) for label in pt.sa_domain])
        except KeyError as missing:
            raise ConfigError(f"no threshold for SA value {missing}") from None
    root = np.random.SeedSequence(seed)
    streams = root.spawn(pt.bucket_count)
    new_bids = []
    new_codes = []
    fake_map = []
    for b in range(1, pt.bucket_count + 1):
        real = pt.st_slice(b)
        if len(np.unique(real)) != len(real):
            raise ConfigError(
                f"bucket {b} holds duplicate sensitive values; fake "
                f"injection requires distinct values per bucket")
        eligible = np.setdiff1d(all_codes, real, assume_unique=False)
        if caps is not None:
            fake_weight = 1.0 / (len(real) + sigma)
            eligible = eligible[caps[eligible] + 1e-12 >= fake_weight]
        if model is not None:
            rows = pt.qit_rows_of(b)
            banned = set()
            for j in range(len(pt.qi_names)):
                for z in np.unique(pt.qi_codes[rows, j]):
                    for x in eligible:
                        if model.is_flagged(j, int(z), int(x)):
                            banned.add(int(x))
            if banned:
                eligible = np.array(
                    [c for c in eligible if int(c) not in banned],
                    dtype=np.int32)
        if len(eligible) < sigma:
            raise ConfigError(
                f"bucket {b} has only {len(eligible)} admissible fake values "
                f"but sigma={sigma}")
        rng = np.random.default_rng(streams[b - 1])
        fakes = rng.choice(eligible, size=sigma, replace=False)
        merged = np.concatenate([real, fakes.astype(np.int32)])
        rng.shuffle(merged)
        new_bids.append(np.full(len(merged), b, dtype=np.int32))
        new_codes.append(merged)
        fake_map.append(tuple(sorted(int(c) for c in fakes)))
    return replace(
        pt,
        st_bids=np.concatenate(new_bids),
        st_codes=np.concatenate(new_codes),
        sigma=sigma,
        fake_map=tuple(fake_map),
    )


@dataclass(frozen=True)
class NegAssociationModel:
    """Pairs (QI attribute, QI value, SA value) that rarely share a bucket.

    A pair is flagged when its bucket-level co-occurrence count falls below
    threshold times the count expected under independence.
    """

    threshold: float
    flagged: frozenset

    def is_flagged(self, attr: int, qi_code: int, sa_code: int) -> bool:
        return (attr, qi_code, sa_code) in self.flagged

    def __len__(self) -> int:
        return len(self.flagged)


def learn_negative_associations(pt: PublishedTables,
                                threshold: float) -> NegAssociationModel:
    """Mine the published pair for QI/SA values that avoid each other."""
    if not 0 < threshold <= 1:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    B = pt.bucket_count
    sa_present = np.zeros((B, pt.m), dtype=bool)
    sa_present[pt.st_bids - 1, pt.st_codes] = True
    n_x = sa_present.sum(axis=0)
    flagged = set()
    for j, domain in enumerate(pt.qi_domains):
        qi_present = np.zeros((B, len(domain)), dtype=bool)
        qi_present[pt.qit_bids - 1, pt.qi_codes[:, j]] = True
        observed = qi_present.T.astype(np.int64) @ sa_present.astype(np.int64)
        expected = np.outer(qi_present.sum(axis=0), n_x) / B
        hits = np.nonzero(observed < threshold * expected)
        for z, x in zip(*hits):
            flagged.add((j, int(z), int(x)))
    return NegAssociationModel(threshold=threshold, flagged=frozenset(flagged))


@dataclass(frozen=True)
class BucketInference:
    """What an adversary can conclude about one bucket after exclusions.

    value_probs maps each residual SA code to the probability that a given
    surviving record carries it; real_certainty is the probability that a
    given residual value is real rather than fake.
    """

    bid: int
    remaining_real: int
    value_probs: tuple[tuple[int, float], ...]
    real_certainty: float

    @property
    def max_prob(self) -> float:
        return max((p for _, p in self.value_probs), default=0.0)


@dataclass(frozen=True)
class CorruptionReport:
    buckets: tuple[BucketInference, ...]
    max_record_prob: float

    def bucket(self, bid: int) -> BucketInference:
        for b in self.buckets:
            if b.bid == bid:
                return b
        raise ConfigError(f"no bucket {bid} in the report")


def corruption_attack_sim(pt: PublishedTables,
                          corrupted: dict[int, int]) -> CorruptionReport:
    """Residual inference probabilities after excluding known records.

    corrupted maps record indices to their true SA codes.  Each bucket's
    known values are struck from its ST rows; the survivors are rated under
    within-bucket symmetry.  Fake rows (if any) stay in, which is exactly the
    ambiguity they were injected to provide.
    """
    exclusions: dict[int, list[int]] = {}
    for idx, code in corrupted.items():
        if not 0 <= idx < len(pt):
            raise ConfigError(f"corrupted record {idx} is outside the table")
        bid = int(pt.qit_bids[idx])
        exclusions.setdefault(bid, []).append(int(code))
    buckets = []
    worst = 0.0
    for bid in range(1, pt.bucket_count + 1):
        values = list(pt.st_slice(bid))
        removed = exclusions.get(bid, [])
        for code in removed:
            try:
                values.remove(code)
            except ValueError:
                raise ConfigError(
                    f"record claimed to hold value code {code} but bucket "
                    f"{bid} has no unexcluded copy") from None
        remaining = len(values)
        remaining_real = remaining - pt.sigma
        probs: dict[int, float] = {}
        if remaining:
            for code in values:
                probs[int(code)] = probs.get(int(code), 0.0) + 1.0 / remaining
            certainty = remaining_real / remaining if remaining_real > 0 else 0.0
        else:
            certainty = 0.0
        inference = BucketInference(
            bid=bid,
            remaining_real=max(remaining_real, 0),
            value_probs=tuple(sorted(probs.items())),
            real_certainty=certainty,
        )
        buckets.append(inference)
        if inference.remaining_real > 0:
            worst = max(worst, inference.max_prob)
    return CorruptionReport(buckets=tuple(buckets), max_record_prob=worst)


def published_max_ratios(pt: PublishedTables) -> dict[str, float]:
    """Worst in-bucket frequency of every SA label across the release."""
    ratios: dict[str, float] = {}
    for bid in range(1, pt.bucket_count + 1):
        codes = pt.st_slice(bid)
        if len(codes) == 0:
            continue
        counts = np.bincount(codes, minlength=pt.m)
        for code in np.nonzero(counts)[0]:
            label = pt.sa_domain[code]
            ratio = counts[code] / len(codes)
            if ratio > ratios.get(label, 0.0):
                ratios[label] = float(ratio)
    return ratios


def check_published_privacy(pt: PublishedTables,
                            thresholds: dict[str, float],
                            tol: float = 1e-12) -> bool:
    """Recheck the release against per-label thresholds (labels not present
    in the release pass trivially)."""
    ratios = published_max_ratios(pt)
    for label, ratio in ratios.items():
        if label not in thresholds:
            raise ConfigError(f"no threshold given for value {label!r}")
        if ratio > thresholds[label] + tol:
            return False
    return True


def write_published(pt: PublishedTables, out_dir) -> None:
    """Write qit.csv, st.csv and the private fakes_audit.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "qit.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(pt.qi_names) + ["BID"])
        for row, bid in zip(pt.qi_codes, pt.qit_bids):
            writer.writerow([pt.qi_domains[j][code]
                             for j, code in enumerate(row)] + [int(bid)])
    with open(out / "st.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["BID", pt.sa_name])
        for bid, code in zip(pt.st_bids, pt.st_codes):
            writer.writerow([int(bid), pt.sa_domain[code]])
    audit = {
        "sigma": pt.sigma,
        "buckets": {str(b + 1): [pt.sa_domain[c] for c in fakes]
                    for b, fakes in enumerate(pt.fake_map)},
    }
    with open(out / "fakes_audit.json", "w", encoding="utf-8") as fh:
        json.dump(audit, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_published(in_dir) -> PublishedTables:
    """Rebuild a PublishedTables from a written directory.

    Domains are re-derived from the labels present, so code numbering may
    differ from the writer's; bucket contents and labels round-trip exactly.
    """
    src = Path(in_dir)
    qit_path, st_path = src / "qit.csv", src / "st.csv"
    for path in (qit_path, st_path):
        if not path.exists():
            raise IngestionError(f"missing published file: {path}")
    with open(qit_path, newline="", encoding="utf-8") as fh:
        qit_rows = list(csv.reader(fh))
    if len(qit_rows) < 2:
        raise IngestionError(f"{qit_path} has no data rows")
    header = qit_rows[0]
    if header[-1] != "BID":
        raise IngestionError(f"{qit_path} must end with a BID column")
    qi_names = tuple(header[:-1])
    with open(st_path, newline="", encoding="utf-8") as fh:
        st_rows = list(csv.reader(fh))
    if len(st_rows) < 2:
        raise IngestionError(f"{st_path} has no data rows")
    if st_rows[0][0] != "BID" or len(st_rows[0]) != 2:
        raise IngestionError(f"{st_path} must have columns BID,<SA>")
    sa_name = st_rows[0][1]

    qi_values = [row[:-1] for row in qit_rows[1:]]
    try:
        qit_bids = np.array([int(row[-1]) for row in qit_rows[1:]], dtype=np.int32)
        st_bids = np.array([int(row[0]) for row in st_rows[1:]], dtype=np.int32)
    except ValueError as exc:
        raise IngestionError(f"malformed bucket id: {exc}") from None
    st_labels = [row[1] for row in st_rows[1:]]

    qi_domains = []
    qi_codes = np.empty((len(qi_values), len(qi_names)), dtype=np.int32)
    for j in range(len(qi_names)):
        column = [row[j] for row in qi_values]
        domain = sorted(set(column))
        lookup = {label: i for i, label in enumerate(domain)}
        qi_domains.append(tuple(domain))
        qi_codes[:, j] = [lookup[v] for v in column]
    sa_domain = sorted(set(st_labels))
    sa_lookup = {label: i for i, label in enumerate(sa_domain)}
    st_codes = np.array([sa_lookup[v] for v in st_labels], dtype=np.int32)

    order = np.argsort(st_bids, kind="stable")
    st_bids, st_codes = st_bids[order], st_codes[order]
    bucket_count = int(qit_bids.max())

    sigma = 0
    fake_map: tuple[tuple[int, ...], ...] = tuple(() for _ in range(bucket_count))
    audit_path = src / "fakes_audit.json"
    if audit_path.exists():
        with open(audit_path, encoding="utf-8") as fh:
            audit = json.load(fh)
        sigma = int(audit.get("sigma", 0))
        if sigma:
            rebuilt = []
            for b in range(1, bucket_count + 1):
                labels = audit["buckets"].get(str(b), [])
                rebuilt.append(tuple(sorted(sa_lookup[v] for v in labels)))
            fake_map = tuple(rebuilt)
    return PublishedTables(
        qi_names=qi_names,
        sa_name=sa_name,
        qi_codes=qi_codes,
        qit_bids=qit_bids,
        st_bids=st_bids,
        st_codes=st_codes,
        qi_domains=tuple(qi_domains),
        sa_domain=tuple(sa_domain),
        bucket_count=bucket_count,
        sigma=sigma,
        fake_map=fake_map,
    )
