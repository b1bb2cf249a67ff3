import numpy as np
import pytest

from fprivacy.core import MicrodataTable, PrivacySpec, histogram, linear_privacy_spec


def table_from_counts(counts, qi_width=1, labels=None):
    """Table with the given per-SA-value record counts, rows value-major.

    SA labels are zero-padded so sorted interning preserves numeric order.
    """
    counts = list(counts)
    m = len(counts)
    if labels is None:
        labels = [f"s{i:03d}" for i in range(m)]
    sa_codes = np.repeat(np.arange(m, dtype=np.int32), counts)
    n = len(sa_codes)
    qi_codes = np.stack(
        [(np.arange(n, dtype=np.int32) * (j + 1)) % 3 for j in range(qi_width)],
        axis=1,
    )
    qi_domains = [["q0", "q1", "q2"] for _ in range(qi_width)]
    return MicrodataTable.from_codes(
        qi_codes, sa_codes,
        qi_names=[f"attr{j}" for j in range(qi_width)],
        sa_name="sa", qi_domains=qi_domains, sa_domain=labels,
    )


@pytest.fixture
def walkthrough_table():
    """The 50-record instance: o_i = 1 for eight values, 6 for four, 9 for two."""
    return table_from_counts([1] * 8 + [6] * 4 + [9] * 2,
                             labels=[f"x{i:02d}" for i in range(1, 15)])


@pytest.fixture
def walkthrough_spec(walkthrough_table):
    """Thresholds 2*f_i + 0.05 for the 50-record instance."""
    h = histogram(walkthrough_table)
    return linear_privacy_spec(h, theta=2.0, intercept=0.05)


def random_instance(rng, max_n=60, max_m=8):
    """Small random histogram + thresholds for oracle cross-checks."""
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(m, max_n + 1))
    counts = np.ones(m, dtype=np.int64)
    extra = rng.multinomial(n - m, rng.dirichlet(np.ones(m)))
    counts += extra
    freqs = counts / n
    slack = rng.uniform(0.8, 3.0, size=m)
    thresholds = np.minimum(1.0, np.maximum(freqs * slack, 0.02))
    return counts, PrivacySpec(thresholds=thresholds)
