"""Bucketization for microdata publishing under per-value disclosure thresholds.

The pipeline: ingest a CSV, derive per-sensitive-value thresholds, search for a
minimum-loss bucket setting, assign records round-robin, publish QIT/ST tables
(optionally hardened with fake values), and evaluate utility with count queries.
A small Laplace-mechanism simulator demonstrates why noisy interfaces do not
stop frequency-based inference on large queries.
"""

from .core import (
    ConfigError,
    Eligibility,
    FPrivacyError,
    InfeasiblePrivacyError,
    IngestionError,
    MicrodataTable,
    PrivacySpec,
    Record,
    SaHistogram,
    check_eligibility,
    ell_for_spec,
    histogram,
    ingest_csv,
    linear_privacy_spec,
    load_privacy_spec,
    value_slots,
)

__version__ = "0.1.0"
