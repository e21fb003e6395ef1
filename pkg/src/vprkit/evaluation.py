"""Recall@K, precision-recall curves, AUPRC, and the end-to-end evaluator.

Recall@K is the percentage of queries with at least one geographically
correct candidate (within tau meters) among their top K. The PR framework
classifies queries as correctly vs incorrectly localized by their top-1
retrieval result, ranking them by confidence (negated uncertainty); AUPRC
uses average-precision-style step integration, which avoids the optimistic
bias of trapezoidal interpolation in PR space.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import DistanceThreshold, GeoRecord, Split, haversine_many
from .errors import ValidationError
from .matching import MatcherProvider
from .rerank import GatePolicy, adaptive_rerank, rerank
from .retrieval import Shortlist, build_index, search_all
from .uncertainty import (
    Estimator,
    LogisticModel,
    UncertaintyScore,
    fit_logistic,
    u_inlier,
    u_l2,
    u_pa,
    u_random,
    u_sue,
)

DEFAULT_KS = (1, 5, 10, 100)
ORACLE_GATE = "oracle"


def recall_at_k(results: Mapping[str, Sequence[str]],
                query_records: Mapping[str, GeoRecord],
                db_records: Mapping[str, GeoRecord],
                k: int, threshold: DistanceThreshold) -> float:
    """Percent of queries with a correct candidate in their top k."""
    if len(results) == 0:
        raise ValidationError("recall is undefined over zero queries")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    hits = 0
    for query_id, ranked in results.items():
        try:
            q = query_records[query_id]
        except KeyError:
            raise ValidationError(f"query {query_id!r} has no record") from None
        if _any_correct(q, ranked[:k], db_records, threshold):
            hits += 1
    return 100.0 * hits / len(results)


def _any_correct(q: GeoRecord, ranked: Sequence[str],
                 db_records: Mapping[str, GeoRecord], threshold: DistanceThreshold) -> bool:
    if len(ranked) == 0:
        return False
    try:
        recs = [db_records[db_id] for db_id in ranked]
    except KeyError as exc:
        raise ValidationError(f"candidate {exc.args[0]!r} has no record") from None
    lats = np.array([r.lat for r in recs])
    lons = np.array([r.lon for r in recs])
    dists = haversine_many(np.full(len(recs), q.lat), np.full(len(recs), q.lon), lats, lons)
    return bool((dists <= threshold.tau).any())


def pr_curve(samples: Sequence[tuple[float, bool]]) -> list[tuple[float, float]]:
    """One (recall, precision) point per confidence-tie group, best-first.

    Positive class = correctly localized query. Tied confidences collapse
    into one threshold group so the curve is independent of input order.
    """
    if len(samples) == 0:
        raise ValidationError("PR curve needs at least one sample")
    conf = np.array([s[0] for s in samples], dtype=np.float64)
    corr = np.array([1 if s[1] else 0 for s in samples], dtype=np.int64)
    if not np.all(np.isfinite(conf)):
        raise ValidationError("non-finite confidence value")
    n_pos = int(corr.sum())
    if n_pos == 0:
        raise ValidationError("PR curve undefined: no correctly localized samples")

    order = np.argsort(-conf, kind="stable")
    conf = conf[order]
    corr = corr[order]
    tp = np.cumsum(corr)
    # last index of every tie group
    group_end = np.flatnonzero(np.diff(conf) != 0.0)
    group_end = np.concatenate([group_end, [len(conf) - 1]])
    points = []
    for i in group_end:
        recall = tp[i] / n_pos
        precision = tp[i] / (i + 1)
        points.append((float(recall), float(precision)))
    return points


def auprc(curve: Sequence[tuple[float, float]]) -> float:
    """Step-integrated area: sum of (recall_i - recall_{i-1}) * precision_i."""
    if len(curve) == 0:
        raise ValidationError("cannot integrate an empty curve")
    area = 0.0
    prev_recall = 0.0
    for recall, precision in curve:
        if recall < prev_recall:
            raise ValidationError("curve recall values must be non-decreasing")
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


@dataclass
class EvalReport:
    """All quantitative outputs for one pipeline configuration."""

    n_queries: int
    k: int
    ks: tuple[int, ...]
    taus: tuple[float, ...]
    seed: int
    recalls: dict = field(default_factory=dict)       # tau -> system -> K -> percent
    auprc: dict = field(default_factory=dict)         # tau -> estimator -> area
    pr_curves: dict = field(default_factory=dict)     # tau -> estimator -> [[r, p], ...]
    correct_top1: dict = field(default_factory=dict)  # tau -> count
    gate_fired: int = 0
    gate: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "n_queries": self.n_queries,
            "k": self.k,
            "ks": list(self.ks),
            "taus": list(self.taus),
            "seed": self.seed,
            "recalls": self.recalls,
            "auprc": self.auprc,
            "pr_curves": self.pr_curves,
            "correct_top1": self.correct_top1,
            "gate_fired": self.gate_fired,
            "gate": self.gate,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def to_text(self) -> str:
        lines = []
        for tau in self.taus:
            key = _tau_key(tau)
            lines.append(f"Recall@K at tau = {tau:g} m")
            header = "  {:<12}".format("system") + "".join(f"{'K=' + str(k):>9}" for k in self.ks)
            lines.append(header)
            for system in ("retrieval", "rerank", "adaptive"):
                if system not in self.recalls.get(key, {}):
                    continue
                row = "  {:<12}".format(system)
                for k in self.ks:
                    row += f"{self.recalls[key][system][str(k)]:>9.1f}"
                lines.append(row)
            if key in self.auprc:
                lines.append(f"AUPRC at tau = {tau:g} m")
                for est, area in self.auprc[key].items():
                    lines.append(f"  {est:<12}{area:>9.3f}")
            lines.append(
                f"  queries: {self.n_queries}   correct top-1: "
                f"{self.correct_top1.get(key, 0)}   gate fired: {self.gate_fired}"
            )
        return "\n".join(lines) + "\n"


def _tau_key(tau: float) -> str:
    return repr(float(tau))


def write_pr_curves_csv(report: EvalReport, path, tau: float | None = None) -> None:
    """CSV export of PR curves: estimator,recall,precision."""
    key = _tau_key(tau if tau is not None else report.taus[0])
    try:
        curves = report.pr_curves[key]
    except KeyError:
        raise ValidationError(f"report has no PR curves at tau of {key}") from None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "recall", "precision"])
        for est, points in curves.items():
            for recall, precision in points:
                writer.writerow([est, repr(recall), repr(precision)])


ALL_ESTIMATORS = (Estimator.L2, Estimator.PA, Estimator.SUE, Estimator.RANDOM, Estimator.INLIER)


def compute_uncertainties(shortlists: Sequence[Shortlist], estimator: Estimator,
                          db_records: Mapping[str, GeoRecord] | None = None,
                          provider: MatcherProvider | None = None,
                          seed: int = 0, sue_top: int = 10) -> list[UncertaintyScore]:
    """Uncertainty scores for every query under one estimator."""
    scores = []
    for sl in shortlists:
        if estimator is Estimator.L2:
            scores.append(u_l2(sl))
        elif estimator is Estimator.PA:
            scores.append(u_pa(sl))
        elif estimator is Estimator.SUE:
            if db_records is None:
                raise ValidationError("SUE needs database records for coordinates")
            scores.append(u_sue(sl, db_records, top=sue_top))
        elif estimator is Estimator.RANDOM:
            scores.append(u_random(sl.query_id, seed))
        elif estimator is Estimator.INLIER:
            if provider is None:
                raise ValidationError("inlier estimator needs a matcher provider")
            if len(sl) == 0:
                raise ValidationError(f"query {sl.query_id!r}: empty shortlist")
            scores.append(u_inlier(sl.query_id, sl.entries[0].db_id, provider))
        else:  # pragma: no cover
            raise ValidationError(f"unknown estimator {estimator}")
    return scores


def evaluate_pipeline(db: Split, queries: Split, provider: MatcherProvider, *,
                      k: int = 100,
                      ks: Sequence[int] = DEFAULT_KS,
                      taus: Sequence[float] = (25.0,),
                      estimators: Sequence[Estimator] = ALL_ESTIMATORS,
                      gate_estimator: Estimator | str = Estimator.INLIER,
                      gate_threshold: float = 0.5,
                      gate_model: LogisticModel | None = None,
                      seed: int = 0,
                      sue_top: int = 10,
                      workers: int = 1) -> EvalReport:
    """Run retrieval, full re-ranking, and adaptive gating; report all metrics.

    The adaptive row uses ``gate_estimator``; the string "oracle" gates on the
    ground-truth correctness of the top-1 result (an upper-bound diagnostic).
    When no model is supplied for a real estimator, one is fitted on this very
    instance's scores and labels (fine for synthetic studies; calibrate on a
    held-out split for anything else). Deterministic for fixed seed, at any
    ``workers`` degree.
    """
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    if len(taus) == 0 or len(ks) == 0:
        raise ValidationError("need at least one tau and one K")
    taus = tuple(float(t) for t in taus)
    ks = tuple(int(x) for x in ks)

    index = build_index(db)
    shortlists = search_all(index, queries, k)
    query_records = queries.by_id
    db_records = db.by_id

    retrieval_ids = {sl.query_id: sl.ids() for sl in shortlists}

    def _rerank_one(sl: Shortlist) -> list[str]:
        try:
            return rerank(sl, provider).ids()
        except ValidationError as exc:
            raise ValidationError(f"query {sl.query_id!r}: {exc}") from exc

    if workers == 1:
        rerank_ids = {sl.query_id: _rerank_one(sl) for sl in shortlists}
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ordered = list(pool.map(_rerank_one, shortlists))
        rerank_ids = {sl.query_id: ids for sl, ids in zip(shortlists, ordered)}

    # top-1 correctness per tau (empty shortlists count as wrong)
    thresholds = {tau: DistanceThreshold(tau) for tau in taus}
    correct_top1: dict[float, dict[str, bool]] = {}
    for tau, thr in thresholds.items():
        flags = {}
        for sl in shortlists:
            flags[sl.query_id] = _any_correct(query_records[sl.query_id], sl.ids()[:1],
                                              db_records, thr)
        correct_top1[tau] = flags

    scores_by_estimator: dict[Estimator, list[UncertaintyScore]] = {}
    for est in estimators:
        scores_by_estimator[est] = compute_uncertainties(
            shortlists, est, db_records=db_records, provider=provider,
            seed=seed, sue_top=sue_top)

    report = EvalReport(n_queries=len(shortlists), k=k, ks=ks, taus=taus, seed=seed)

    for tau in report.taus:
        key = _tau_key(tau)
        flags = correct_top1[tau]
        report.correct_top1[key] = sum(1 for v in flags.values() if v)
        report.auprc[key] = {}
        report.pr_curves[key] = {}
        for est in estimators:
            samples = [(-s.u, flags[s.query_id]) for s in scores_by_estimator[est]]
            curve = pr_curve(samples)
            report.pr_curves[key][est.value] = [[r, p] for r, p in curve]
            report.auprc[key][est.value] = auprc(curve)

    # --- adaptive gating ------------------------------------------------
    primary_tau = report.taus[0]
    if gate_estimator == ORACLE_GATE:
        fired = {qid: not flag for qid, flag in correct_top1[primary_tau].items()}
        adaptive_ids = {
            sl.query_id: (rerank_ids if fired[sl.query_id] else retrieval_ids)[sl.query_id]
            for sl in shortlists
        }
        gate_desc = {"estimator": ORACLE_GATE, "threshold": gate_threshold, "fitted_here": False}
    else:
        gate_est = Estimator(gate_estimator)
        gate_scores = scores_by_estimator.get(gate_est)
        if gate_scores is None:
            gate_scores = compute_uncertainties(shortlists, gate_est, db_records=db_records,
                                                provider=provider, seed=seed, sue_top=sue_top)
        fitted_here = gate_model is None
        if gate_model is None:
            training = [(s.u, not correct_top1[primary_tau][s.query_id]) for s in gate_scores]
            gate_model = fit_logistic(training)
        policy = GatePolicy(model=gate_model, threshold=gate_threshold, estimator=gate_est)
        by_qid = {s.query_id: s for s in gate_scores}

        def _adaptive_one(sl: Shortlist) -> tuple[list[str], bool]:
            out = adaptive_rerank(sl, provider, policy, by_qid[sl.query_id])
            return out.ids(), out.gate_fired

        if workers == 1:
            outcomes = [_adaptive_one(sl) for sl in shortlists]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_adaptive_one, shortlists))
        adaptive_ids = {sl.query_id: ids for sl, (ids, _) in zip(shortlists, outcomes)}
        fired = {sl.query_id: f for sl, (_, f) in zip(shortlists, outcomes)}
        gate_desc = {"estimator": gate_est.value, "threshold": gate_threshold,
                     "fitted_here": fitted_here}

    report.gate_fired = sum(1 for v in fired.values() if v)
    report.gate = gate_desc

    systems = {"retrieval": retrieval_ids, "rerank": rerank_ids, "adaptive": adaptive_ids}
    for tau in report.taus:
        key = _tau_key(tau)
        report.recalls[key] = {}
        for system, results in systems.items():
            report.recalls[key][system] = {
                str(kk): recall_at_k(results, query_records, db_records, kk, thresholds[tau])
                for kk in report.ks
            }
    return report
