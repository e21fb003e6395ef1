"""Geotagged splits: manifest/descriptor-blob ingestion and geographic math.

A split is a JSONL manifest (one ``{"id", "lat", "lon"}`` object per line)
plus a binary descriptor blob. Record order in the manifest defines each
record's row in the blob. Geographic distance is great-circle (haversine) on
a sphere of radius 6,371,000 m; a candidate is a correct localization when
its distance to the query is at most the configured threshold (inclusive).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .errors import ValidationError

BLOB_MAGIC = b"VPRD"
NORM_TOLERANCE = 1e-4
EARTH_RADIUS_M = _kernels.EARTH_RADIUS_M


@dataclass(frozen=True)
class GeoRecord:
    """One image identity: unique id, WGS84 position, row in the blob."""

    id: str
    lat: float
    lon: float
    descriptor_index: int

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValidationError(f"record {self.id!r}: lat {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValidationError(f"record {self.id!r}: lon {self.lon} outside [-180, 180]")


@dataclass
class DescriptorBlob:
    """Row-major float32 descriptor matrix, unit-norm rows after ingestion."""

    dim: int
    rows: np.ndarray
    renormalized: bool = False

    def __len__(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class DistanceThreshold:
    """Correctness radius in meters: a candidate localizes its query when
    the great-circle distance between them is at most tau."""

    tau: float = 25.0

    def __post_init__(self):
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValidationError(f"tau must be a positive real, got {self.tau}")


@dataclass
class Split:
    """Immutable pairing of GeoRecords with their descriptor blob."""

    records: list[GeoRecord]
    blob: DescriptorBlob
    by_id: Mapping[str, GeoRecord] = field(init=False, repr=False)

    def __post_init__(self):
        self.by_id = {r.id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def descriptor(self, record: GeoRecord) -> np.ndarray:
        return self.blob.rows[record.descriptor_index]

    def coords(self) -> np.ndarray:
        """(n, 2) array of lat/lon in record order."""
        return np.array([(r.lat, r.lon) for r in self.records], dtype=np.float64)


def read_manifest(path) -> list[GeoRecord]:
    """Parse a JSONL manifest; line order defines descriptor_index."""
    records: list[GeoRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            if not isinstance(obj, dict) or not {"id", "lat", "lon"} <= obj.keys():
                raise ValidationError(f"{path}: line {lineno} missing id/lat/lon fields")
            rid, lat, lon = obj["id"], obj["lat"], obj["lon"]
            if not isinstance(rid, str) or not rid:
                raise ValidationError(f"{path}: line {lineno}: id must be a non-empty string")
            try:
                lat = float(lat)
                lon = float(lon)
            except (TypeError, ValueError):
                raise ValidationError(f"{path}: line {lineno}: lat/lon not numeric") from None
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise ValidationError(f"{path}: line {lineno}: non-finite coordinates")
            if rid in seen:
                raise ValidationError(f"{path}: line {lineno}: duplicate id {rid!r}")
            seen.add(rid)
            records.append(GeoRecord(id=rid, lat=lat, lon=lon, descriptor_index=len(records)))
    return records


def write_manifest(records: Iterable[GeoRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"id": rec.id, "lat": rec.lat, "lon": rec.lon}) + "\n")


def read_blob(path) -> DescriptorBlob:
    """Read a descriptor blob: b"VPRD", u32 count, u32 dim, count*dim float32 LE."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != BLOB_MAGIC:
            raise ValidationError(f"{path}: bad magic (expected {BLOB_MAGIC!r})")
        count, dim = struct.unpack("<II", header[4:12])
        if dim == 0:
            raise ValidationError(f"{path}: descriptor dim must be positive")
        payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise ValidationError(
            f"{path}: row count mismatch: header declares {count}x{dim} "
            f"({expected} bytes) but payload has {len(payload)} bytes"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    if not np.all(np.isfinite(rows)):
        raise ValidationError(f"{path}: blob contains non-finite floats")

    norms = np.linalg.norm(rows.astype(np.float64), axis=1)
    off = np.abs(norms - 1.0) > NORM_TOLERANCE
    renormalized = bool(off.any())
    if renormalized:
        if np.any(norms[off] == 0.0):
            raise ValidationError(f"{path}: zero-norm descriptor row cannot be normalized")
        rows = rows.copy()
        rows[off] = (rows[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    rows.flags.writeable = False
    return DescriptorBlob(dim=int(dim), rows=rows, renormalized=renormalized)


def write_blob(rows: np.ndarray, path) -> None:
    """Write descriptors in the binary blob format (bit-exact float32 LE)."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValidationError("descriptor matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<II", rows.shape[0], rows.shape[1]))
        fh.write(rows.tobytes(order="C"))


def load_split(manifest_path, blob_path) -> Split:
    """Load a manifest + blob pair and cross-validate them."""
    records = read_manifest(manifest_path)
    blob = read_blob(blob_path)
    if len(records) != len(blob):
        raise ValidationError(
            f"row count mismatch: manifest {manifest_path} has {len(records)} records "
            f"but blob {blob_path} has {len(blob)} rows"
        )
    return Split(records=records, blob=blob)


def geo_distance(a: GeoRecord, b: GeoRecord) -> float:
    """Great-circle distance between two records, in meters."""
    return haversine_m(a.lat, a.lon, b.lat, b.lon)


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Scalar haversine on the 6,371 km sphere."""
    out = _kernels.haversine_m(
        np.array([lat1], dtype=np.float64),
        np.array([lon1], dtype=np.float64),
        np.array([lat2], dtype=np.float64),
        np.array([lon2], dtype=np.float64),
    )
    return float(out[0])


def haversine_many(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Elementwise haversine over coordinate arrays (degrees in, meters out)."""
    lat1 = np.ascontiguousarray(lat1, dtype=np.float64)
    lon1 = np.ascontiguousarray(lon1, dtype=np.float64)
    lat2 = np.ascontiguousarray(lat2, dtype=np.float64)
    lon2 = np.ascontiguousarray(lon2, dtype=np.float64)
    lat1, lon1, lat2, lon2 = np.broadcast_arrays(lat1, lon1, lat2, lon2)
    return _kernels.haversine_m(
        np.ascontiguousarray(lat1), np.ascontiguousarray(lon1),
        np.ascontiguousarray(lat2), np.ascontiguousarray(lon2),
    )


def is_correct(query: GeoRecord, candidate: GeoRecord,
               threshold: DistanceThreshold = DistanceThreshold()) -> bool:
    """True iff the candidate is within tau meters of the query (inclusive)."""
    return geo_distance(query, candidate) <= threshold.tau
