"""Exception hierarchy shared across the package.

Validation problems (bad file contents, bad arguments, inconsistent data)
raise ValidationError; plain I/O failures surface as the builtin OSError
family. The CLI maps the former to exit code 1 and the latter to 2.
"""

from __future__ import annotations


class VprError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(VprError):
    """Input data or arguments violate a documented contract."""


class MissingPairError(VprError):
    """An inlier count was requested for a pair that is not available.

    Absence is a distinct outcome: zero inliers is a legitimate (maximally
    uncertain) measurement and must never be fabricated for missing pairs.
    """

    def __init__(self, query_id: str, db_id: str, reason: str = "pair not in table"):
        self.query_id = query_id
        self.db_id = db_id
        super().__init__(f"no inlier count for ({query_id}, {db_id}): {reason}")


class MatcherError(VprError):
    """An external matcher invocation failed for one (query, db) pair."""

    def __init__(self, query_id: str, db_id: str, reason: str):
        self.query_id = query_id
        self.db_id = db_id
        super().__init__(f"matcher failed for ({query_id}, {db_id}): {reason}")


class MatcherTimeout(MatcherError):
    """The matcher subprocess exceeded its configured timeout."""


class MatcherExitError(MatcherError):
    """The matcher subprocess exited with a nonzero status."""


class MatcherOutputError(MatcherError):
    """The matcher subprocess produced stdout we cannot parse."""
