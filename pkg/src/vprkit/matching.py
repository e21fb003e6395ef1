"""Inlier counts for (query, candidate) pairs.

The matcher itself (keypoints + RANSAC) always runs outside this package.
Counts either come precomputed from a CSV table or from an external command
invoked per pair. Absent pairs are a distinct outcome (MissingPairError) and
never degrade to zero: zero inliers is itself a meaningful measurement.
"""

from __future__ import annotations

import csv
import shlex
import subprocess
import threading
from dataclasses import dataclass, field

from .errors import (
    MatcherExitError,
    MatcherOutputError,
    MatcherTimeout,
    MissingPairError,
    ValidationError,
)

INLIER_CSV_HEADER = ["query_id", "db_id", "inliers"]


@dataclass
class InlierTable:
    """Immutable map from (query_id, db_id) to a non-negative inlier count."""

    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.counts)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.counts

    def inliers(self, query_id: str, db_id: str) -> int:
        try:
            return self.counts[(query_id, db_id)]
        except KeyError:
            raise MissingPairError(query_id, db_id) from None


def load_inlier_table(path) -> InlierTable:
    """Read an inlier CSV (query_id,db_id,inliers); duplicates are an error."""
    counts: dict[tuple[str, str], int] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != INLIER_CSV_HEADER:
            raise ValidationError(f"{path}: unexpected inlier CSV header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValidationError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            qid, db_id, raw = row
            try:
                count = int(raw)
            except ValueError:
                raise ValidationError(
                    f"{path}: line {lineno}: inlier count {raw!r} is not an integer"
                ) from None
            if count < 0:
                raise ValidationError(f"{path}: line {lineno}: negative inlier count {count}")
            key = (qid, db_id)
            if key in counts:
                raise ValidationError(f"{path}: line {lineno}: duplicate pair ({qid}, {db_id})")
            counts[key] = count
    return InlierTable(counts=counts)


def write_inlier_table(table: InlierTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(INLIER_CSV_HEADER)
        for (qid, db_id), count in table.counts.items():
            writer.writerow([qid, db_id, count])


class MatcherProvider:
    """Source of inlier counts for (query, db) pairs."""

    def get_inliers(self, query_id: str, db_id: str,
                    image_paths: tuple[str, str] | None = None) -> int:
        raise NotImplementedError


class TableProvider(MatcherProvider):
    """File-backed provider: pure lookups into an InlierTable."""

    def __init__(self, table: InlierTable):
        self.table = table

    def get_inliers(self, query_id: str, db_id: str,
                    image_paths: tuple[str, str] | None = None) -> int:
        return self.table.inliers(query_id, db_id)


class SubprocessProvider(MatcherProvider):
    """Provider that shells out to an external matcher per pair.

    The command template must contain {query} and {db} placeholders, replaced
    by the two image paths. The process must exit 0; the last
    whitespace-delimited token of stdout is parsed as the non-negative inlier
    count, so wrapper scripts are free to log before it. At most
    ``max_concurrent`` invocations run at once.
    """

    def __init__(self, command_template: str, timeout: float = 60.0, max_concurrent: int = 1):
        if "{query}" not in command_template or "{db}" not in command_template:
            raise ValidationError("command template must contain {query} and {db} placeholders")
        if not timeout > 0:
            raise ValidationError(f"timeout must be positive, got {timeout}")
        if max_concurrent < 1:
            raise ValidationError(f"max_concurrent must be >= 1, got {max_concurrent}")
        self.command_template = command_template
        self.timeout = timeout
        self.max_concurrent = max_concurrent
        self._slots = threading.BoundedSemaphore(max_concurrent)

    def _build_argv(self, query_path: str, db_path: str) -> list[str]:
        argv = []
        for token in shlex.split(self.command_template):
            argv.append(token.replace("{query}", query_path).replace("{db}", db_path))
        return argv

    def _run(self, argv: list[str]) -> subprocess.CompletedProcess:
        # separated out so tests can observe/replace the actual invocation
        return subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)

    def get_inliers(self, query_id: str, db_id: str,
                    image_paths: tuple[str, str] | None = None) -> int:
        if image_paths is None:
            raise ValidationError(
                f"subprocess matcher needs image paths for ({query_id}, {db_id})"
            )
        argv = self._build_argv(image_paths[0], image_paths[1])
        with self._slots:
            try:
                proc = self._run(argv)
            except subprocess.TimeoutExpired:
                raise MatcherTimeout(query_id, db_id, f"timed out after {self.timeout}s") from None
        if proc.returncode != 0:
            raise MatcherExitError(query_id, db_id, f"exit status {proc.returncode}")
        tokens = proc.stdout.split()
        if not tokens:
            raise MatcherOutputError(query_id, db_id, "empty stdout")
        try:
            count = int(tokens[-1])
        except ValueError:
            raise MatcherOutputError(
                query_id, db_id, f"last stdout token {tokens[-1]!r} is not an integer"
            ) from None
        if count < 0:
            raise MatcherOutputError(query_id, db_id, f"negative inlier count {count}")
        return count
