"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: DataError -> 2,
ScorerError -> 3, anything argparse rejects -> 1.
"""


class QueryfeatError(Exception):
    """Base class for all package errors."""


class DataError(QueryfeatError):
    """Malformed or invalid input data (files, schemas, domain violations)."""


class ScorerError(QueryfeatError):
    """Scorer backend unavailable, misbehaving, or violating the wire contract."""


class IllDefinedMetricError(QueryfeatError):
    """A metric has no defined value on the given inputs (e.g. single-class AUROC)."""
