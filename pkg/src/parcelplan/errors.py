"""Exception types shared across the package.

Every error carries a short machine-parsable ``code`` that the CLI prints
as a one-line prefix before exiting nonzero.
"""


class ParcelPlanError(Exception):
    code = "error"


class ParseError(ParcelPlanError):
    """Structurally malformed input (bad CSV row, wrong column count)."""

    code = "parse"


class ValidationError(ParcelPlanError):
    """Well-formed input with an illegal value (unknown code, area <= 0)."""

    code = "validation"


class ConfigurationError(ParcelPlanError):
    """Run configuration that cannot produce a valid run."""

    code = "config"


class GraphLookupError(ParcelPlanError):
    """Reference to a node that is not in the graph or observation."""

    code = "lookup"


class AggregationError(ParcelPlanError):
    """Vote aggregation over an empty ballot set."""

    code = "aggregation"


class ContractError(ParcelPlanError):
    """Caller violated an API precondition (ineligible voter, bad batch)."""

    code = "contract"


class DimensionError(ParcelPlanError):
    """Array shape mismatch in the numeric core."""

    code = "dimension"


class DomainError(ParcelPlanError):
    """Metric requested on an input outside its domain (empty district)."""

    code = "domain"


class MissingModelError(ParcelPlanError):
    """A method that needs trained policies was run without a checkpoint."""

    code = "missing-model"
