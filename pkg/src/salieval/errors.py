"""Exception types shared across the pipeline."""


class DataError(Exception):
    """Invalid or missing data: bad input files, violated invariants, absent
    upstream artifacts. CLI maps this to exit code 2."""


class GraphError(DataError):
    """Malformed computation graph or bindings (shape mismatch, non-finite
    values, unbound leaves)."""
