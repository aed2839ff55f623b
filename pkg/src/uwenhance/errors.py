"""Shared exception types, grouped by how the CLI maps them to exit codes."""


class UsageError(Exception):
    """Caller misuse: bad arguments, missing grads, lo > hi, non-scalar backward."""


class DataError(Exception):
    """Bad external data: unreadable files, corrupt checkpoints, empty datasets."""


class NumericsError(Exception):
    """Internal numeric failure, e.g. NaN loss during training."""


class DimensionError(ValueError):
    """Array shapes disagree; the message names the offending axes."""


class DomainError(ValueError):
    """Values outside the operation's domain (negative depth, empty image, ...)."""
