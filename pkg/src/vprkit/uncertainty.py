"""Per-query uncertainty estimators and logistic calibration.

Every estimator returns a scalar u where higher means more uncertain:

* l2      — descriptor distance to the nearest neighbor, d_(1).
* pa      — perceptual-aliasing score d_(1)/d_(2) (1 when d_(2) = 0).
* sue     — geographic spread of the shortlist: weighted spatial variance of
            the top-L candidate positions on a local tangent plane, with
            Gaussian weights exp(-d_(j)^2 / sigma^2). This follows the
            shortlist-spread idea; the exact weighting is our reconstruction
            and is configurable.
* random  — uniform [0, 1) from a counter-based generator keyed on
            (seed, query_id), independent of evaluation order.
* inlier  — negated inlier count of the top-1 pair, -i_(1).

fit_logistic turns (u, wrongly-localized) samples into P(wrong | u) via a
damped Newton solver on the ridge-regularized log-likelihood. Features are
standardized with constants frozen at fit time, so affine rescalings of u do
not change predictions.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import EARTH_RADIUS_M, GeoRecord
from .errors import ValidationError
from .matching import MatcherProvider
from .retrieval import Shortlist

RIDGE_LAMBDA = 1e-6
GRAD_TOL = 1e-10
MAX_NEWTON_ITER = 100
PROB_CLIP = 1e-12  # keeps probabilities strictly inside (0, 1); lets
                   # threshold = 1 - 1e-12 mean "never fire" under strict >


class Estimator(str, enum.Enum):
    L2 = "l2"
    PA = "pa"
    SUE = "sue"
    RANDOM = "random"
    INLIER = "inlier"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class UncertaintyScore:
    query_id: str
    estimator: Estimator
    u: float


@dataclass
class LogisticModel:
    """P(wrong | u) = sigmoid(w * (u - mean) / std + b)."""

    w: float
    b: float
    mean: float
    std: float
    fit_losses: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self.std > 0:
            raise ValidationError(f"feature std must be positive, got {self.std}")

    def to_json(self) -> str:
        return json.dumps({"w": self.w, "b": self.b, "mean": self.mean, "std": self.std})

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        try:
            obj = json.loads(text)
            return cls(w=float(obj["w"]), b=float(obj["b"]),
                       mean=float(obj["mean"]), std=float(obj["std"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad logistic model JSON: {exc}") from exc


def u_l2(shortlist: Shortlist) -> UncertaintyScore:
    """Distance to the nearest neighbor."""
    if len(shortlist) == 0:
        raise ValidationError(f"query {shortlist.query_id!r}: empty shortlist")
    return UncertaintyScore(shortlist.query_id, Estimator.L2, shortlist.entries[0].distance)


def u_pa(shortlist: Shortlist) -> UncertaintyScore:
    """Ratio of first to second nearest-neighbor distances."""
    if len(shortlist) < 2:
        raise ValidationError(
            f"query {shortlist.query_id!r}: PA score needs at least 2 candidates"
        )
    d1 = shortlist.entries[0].distance
    d2 = shortlist.entries[1].distance
    u = 1.0 if d2 == 0.0 else d1 / d2  # two exact matches: maximal aliasing
    return UncertaintyScore(shortlist.query_id, Estimator.PA, u)


def u_sue(shortlist: Shortlist, db_records: Mapping[str, GeoRecord],
          top: int = 10, sigma: float | None = None) -> UncertaintyScore:
    """Weighted spatial variance (m^2) of the top candidates' positions."""
    if len(shortlist) == 0:
        raise ValidationError(f"query {shortlist.query_id!r}: empty shortlist")
    if top < 1:
        raise ValidationError(f"top must be >= 1, got {top}")
    entries = shortlist.entries[:top]
    try:
        recs = [db_records[e.db_id] for e in entries]
    except KeyError as exc:
        raise ValidationError(
            f"query {shortlist.query_id!r}: shortlist id {exc.args[0]!r} not in database"
        ) from None

    d = np.array([e.distance for e in entries], dtype=np.float64)
    if sigma is None:
        sigma = d[0] + 1e-9  # floor keeps sigma positive on exact matches
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")

    d2 = d * d
    logits = -(d2 - d2.min()) / (sigma * sigma)  # shift-invariant, avoids underflow to all-zero
    w = np.exp(logits)
    w /= w.sum()

    lat = np.array([r.lat for r in recs], dtype=np.float64)
    lon = np.array([r.lon for r in recs], dtype=np.float64)
    # local tangent plane (meters) anchored at the nearest candidate; the
    # variance is taken around the weighted mean point in that plane, so
    # identical positions give exactly zero spread
    y = EARTH_RADIUS_M * np.radians(lat - lat[0])
    x = EARTH_RADIUS_M * math.cos(math.radians(lat[0])) * np.radians(lon - lon[0])
    xbar = np.dot(w, x)
    ybar = np.dot(w, y)
    u = float(np.dot(w, (x - xbar) ** 2 + (y - ybar) ** 2))
    return UncertaintyScore(shortlist.query_id, Estimator.SUE, u)


def u_random(query_id: str, seed: int) -> UncertaintyScore:
    """Uniform [0, 1), deterministic in (seed, query_id), order-independent."""
    key = struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    digest = hashlib.blake2b(query_id.encode("utf-8"), digest_size=8, key=key).digest()
    u = struct.unpack("<Q", digest)[0] / 2.0**64
    return UncertaintyScore(query_id, Estimator.RANDOM, u)


def u_inlier(query_id: str, top1_db_id: str, provider: MatcherProvider,
             image_paths: tuple[str, str] | None = None) -> UncertaintyScore:
    """Negated inlier count of the top-1 pair; missing counts propagate."""
    count = provider.get_inliers(query_id, top1_db_id, image_paths)
    return UncertaintyScore(query_id, Estimator.INLIER, -float(count))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _nll(theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    z = theta[0] * x + theta[1]
    # log(1 + e^z) - y*z, computed stably
    ll = np.logaddexp(0.0, z) - y * z
    return float(ll.sum() + 0.5 * RIDGE_LAMBDA * (theta[0] ** 2 + theta[1] ** 2))


def fit_logistic(samples: Sequence[tuple[float, bool]]) -> LogisticModel:
    """Fit P(wrong | u) by damped Newton on the ridge-regularized likelihood.

    Deterministic: zero initialization, full Newton steps halved until the
    loss does not increase, stop at gradient norm <= 1e-10 or 100 iterations.
    """
    if len(samples) < 2:
        raise ValidationError("need at least 2 samples to fit")
    u = np.array([s[0] for s in samples], dtype=np.float64)
    y = np.array([1.0 if s[1] else 0.0 for s in samples], dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise ValidationError("non-finite uncertainty feature in training data")
    if y.min() == y.max():
        raise ValidationError("training data contains a single class")

    mean = float(u.mean())
    std = float(u.std())
    if std == 0.0:
        raise ValidationError("uncertainty feature is constant; cannot standardize")
    x = (u - mean) / std

    theta = np.zeros(2, dtype=np.float64)
    losses = [_nll(theta, x, y)]
    for _ in range(MAX_NEWTON_ITER):
        p = _sigmoid(theta[0] * x + theta[1])
        r = p - y
        grad = np.array([np.dot(r, x) + RIDGE_LAMBDA * theta[0],
                         r.sum() + RIDGE_LAMBDA * theta[1]])
        if np.linalg.norm(grad) <= GRAD_TOL:
            break
        s = p * (1.0 - p)
        h00 = np.dot(s, x * x) + RIDGE_LAMBDA
        h01 = np.dot(s, x)
        h11 = s.sum() + RIDGE_LAMBDA
        det = h00 * h11 - h01 * h01
        step = np.array([(h11 * grad[0] - h01 * grad[1]) / det,
                         (h00 * grad[1] - h01 * grad[0]) / det])
        scale = 1.0
        new_theta = theta - step
        new_loss = _nll(new_theta, x, y)
        while new_loss > losses[-1] and scale > 1e-16:
            scale *= 0.5
            new_theta = theta - scale * step
            new_loss = _nll(new_theta, x, y)
        if new_loss > losses[-1]:
            break  # no descent direction left at this precision
        assert new_loss <= losses[-1]
        theta = new_theta
        losses.append(new_loss)

    return LogisticModel(w=float(theta[0]), b=float(theta[1]), mean=mean, std=std,
                         fit_losses=tuple(losses))


def predict_prob(model: LogisticModel, u: float) -> float:
    """Calibrated P(wrong | u), clipped strictly inside (0, 1)."""
    if not math.isfinite(u):
        raise ValidationError(f"uncertainty value must be finite, got {u}")
    z = model.w * (u - model.mean) / model.std + model.b
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        ez = math.exp(z)
        p = ez / (1.0 + ez)
    return min(max(p, PROB_CLIP), 1.0 - PROB_CLIP)


def write_scores_csv(scores: Iterable[UncertaintyScore], path,
                     model: LogisticModel | None = None) -> None:
    """CSV export: query_id,estimator,u,prob (prob blank when uncalibrated)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "estimator", "u", "prob"])
        for s in scores:
            prob = "" if model is None else repr(predict_prob(model, s.u))
            writer.writerow([s.query_id, s.estimator.value, repr(s.u), prob])


def read_scores_csv(path) -> list[UncertaintyScore]:
    import csv

    scores = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["query_id", "estimator", "u", "prob"]:
            raise ValidationError(f"{path}: unexpected scores CSV header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ValidationError(f"{path}: line {lineno}: expected 4 fields")
            qid, est, u_s, _prob = row
            try:
                scores.append(UncertaintyScore(qid, Estimator(est), float(u_s)))
            except ValueError:
                raise ValidationError(f"{path}: line {lineno}: bad estimator or u value") from None
    return scores
