import json
import struct

import numpy as np
import pytest

from vprkit.dataset import GeoRecord, DescriptorBlob, Split


def write_manifest_file(path, rows):
    """rows: iterable of (id, lat, lon) or raw dict/str lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            if isinstance(row, str):
                fh.write(row + "\n")
            elif isinstance(row, dict):
                fh.write(json.dumps(row) + "\n")
            else:
                rid, lat, lon = row
                fh.write(json.dumps({"id": rid, "lat": lat, "lon": lon}) + "\n")


def write_blob_file(path, rows, count=None, dim=None):
    rows = np.asarray(rows, dtype="<f4")
    count = rows.shape[0] if count is None else count
    dim = rows.shape[1] if dim is None else dim
    with open(path, "wb") as fh:
        fh.write(b"VPRD")
        fh.write(struct.pack("<II", count, dim))
        fh.write(rows.tobytes(order="C"))


def make_split(descriptors, coords=None, prefix="r"):
    """In-memory split from a descriptor matrix and optional (lat, lon) list."""
    descriptors = np.ascontiguousarray(descriptors, dtype=np.float32)
    n = descriptors.shape[0]
    if coords is None:
        coords = [(0.0, 0.0)] * n
    records = [
        GeoRecord(id=f"{prefix}{i}", lat=coords[i][0], lon=coords[i][1], descriptor_index=i)
        for i in range(n)
    ]
    blob = DescriptorBlob(dim=descriptors.shape[1], rows=descriptors)
    return Split(records=records, blob=blob)


def unit_rows(rng, n, dim):
    mat = rng.standard_normal((n, dim))
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
