"""Query evaluation across pipeline variants, result files and aggregation."""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .config import config_fingerprint
from .graph import Community, ground_truth_for, k_ego
from .metrics import PairScores, score_pair
from .pipeline import VARIANTS, PipelineHandle
from .prompt import predict_community, train_prompt
from .sampler import generate_initial_community, retrieve_similar

logger = logging.getLogger(__name__)

METRIC_NAMES = ("precision", "recall", "fscore", "jaccard", "seconds")


@dataclass(frozen=True)
class QuerySpec:
    external: int
    node: int | None
    gt: int | None


@dataclass
class QueryResult:
    external: int
    pred: Community | None = None
    truth: Community | None = None
    initial: Community | None = None
    scores: PairScores | None = None
    seconds: float = 0.0
    error: str | None = None


@dataclass
class RunReport:
    variant: str
    seed: int
    fingerprint: str
    rows: list = field(default_factory=list)
    results: list = field(default_factory=list)
    errors: int = 0

    def means(self) -> dict:
        out = {}
        for name in METRIC_NAMES:
            vals = [row[name] for row in self.rows]
            out[name] = float(np.mean(vals)) if vals else 0.0
        return out


def specs_from_split(handle: PipelineHandle) -> list:
    return [
        QuerySpec(handle.graph.to_external(node), node, gt) for node, gt in handle.queries
    ]


def specs_from_external(handle: PipelineHandle, external_ids) -> list:
    specs = []
    for ext in external_ids:
        try:
            node = handle.graph.to_internal(int(ext))
        except KeyError:
            specs.append(QuerySpec(int(ext), None, None))
            continue
        specs.append(QuerySpec(int(ext), node, ground_truth_for(node, handle.truth)))
    return specs


def _detect_one(handle: PipelineHandle, spec: QuerySpec, variant: str):
    cfg = handle.cfg
    g = handle.graph
    node = spec.node
    if variant == "no-sg":
        ego = k_ego(g, [node], 2, cap=cfg.encoder.ego_cap)
        initial = Community(frozenset(int(v) for v in ego.nodes))
    else:
        initial = generate_initial_community(handle.agent, g, node, handle.tab, handle.size_cap)
    if variant == "no-pf":
        return initial, initial
    similar = retrieve_similar(handle.tab, initial, handle.known, cfg.prompt.num_similar)
    rng = seeding.numpy_rng(cfg.run.seed, seeding.STREAM_QUERY, node)
    gen = seeding.torch_generator(cfg.run.seed, seeding.STREAM_PROMPT, node)
    model, _ = train_prompt(similar, g, handle.tab, cfg.prompt, rng, gen, seed=cfg.run.seed)
    pred = predict_community(model, handle.tab, g, node, initial)
    return pred, initial


def run_queries(handle: PipelineHandle, specs: list, variant: str) -> RunReport:
    """Evaluate each query under the given variant; failures become error rows."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant != "no-sg" and handle.agent is None:
        raise ValueError(f"variant {variant!r} needs a trained agent on this handle")
    if variant != "no-pf" and handle.cfg.prompt.num_similar > len(handle.known):
        raise ValueError(
            f"prompt.num_similar={handle.cfg.prompt.num_similar} exceeds "
            f"{len(handle.known)} known communities"
        )
    timing = handle.cfg.run.timing
    report = RunReport(
        variant=variant,
        seed=handle.cfg.run.seed,
        fingerprint=config_fingerprint(handle.cfg),
    )
    for spec in specs:
        result = QueryResult(external=spec.external)
        start = time.perf_counter()
        try:
            if spec.node is None:
                raise KeyError(f"unknown node id {spec.external}")
            if spec.gt is None:
                raise ValueError(f"node {spec.external} has no ground-truth community")
            truth = handle.truth.communities[spec.gt]
            pred, initial = _detect_one(handle, spec, variant)
            result.pred = pred
            result.truth = truth
            result.initial = initial
            result.scores = score_pair(pred.members, truth.members)
        except Exception as exc:
            result.error = str(exc)
            report.errors += 1
            logger.warning("query %s failed: %s", spec.external, exc)
        result.seconds = time.perf_counter() - start if timing else 0.0
        report.results.append(result)
        if result.error is None:
            report.rows.append(
                {
                    "precision": result.scores.precision,
                    "recall": result.scores.recall,
                    "fscore": result.scores.fscore,
                    "jaccard": result.scores.jaccard,
                    "seconds": result.seconds,
                }
            )
    return report


def aggregate(reports: list) -> dict:
    """Mean and sample standard deviation of each metric across run means,
    plus the same over all pooled per-query rows."""
    if not reports:
        raise ValueError("need at least one report")
    summary = {"runs": len(reports), "per_run": {}, "pooled": {}}
    for name in METRIC_NAMES:
        run_means = [rep.means()[name] for rep in reports]
        summary["per_run"][name] = {
            "mean": float(np.mean(run_means)),
            "std": float(np.std(run_means, ddof=1)) if len(run_means) > 1 else 0.0,
        }
        pooled = [row[name] for rep in reports for row in rep.rows]
        summary["pooled"][name] = {
            "mean": float(np.mean(pooled)) if pooled else 0.0,
            "std": float(np.std(pooled, ddof=1)) if len(pooled) > 1 else 0.0,
        }
    return summary


def _members_external(graph, comm: Community | None):
    if comm is None:
        return None
    return sorted(graph.to_external(v) for v in comm.members)


def write_report(path, report: RunReport, graph, fingerprint: str) -> None:
    """One JSON object per query plus a trailing summary record."""
    with open(path, "w") as fh:
        for result in report.results:
            record = {"record": "query", "query": result.external}
            if result.error is not None:
                record["error"] = result.error
            else:
                record.update(
                    {
                        "pred": _members_external(graph, result.pred),
                        "truth": _members_external(graph, result.truth),
                        "initial": _members_external(graph, result.initial),
                        "precision": result.scores.precision,
                        "recall": result.scores.recall,
                        "fscore": result.scores.fscore,
                        "jaccard": result.scores.jaccard,
                    }
                )
            record["seconds"] = result.seconds
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        summary = {
            "record": "summary",
            "variant": report.variant,
            "seed": report.seed,
            "config": fingerprint,
            "queries": len(report.results),
            "errors": report.errors,
        }
        for name, value in report.means().items():
            summary[f"{name}_mean"] = value
        fh.write(json.dumps(summary, sort_keys=True) + "\n")


def read_report(path) -> RunReport:
    """Rebuild a metrics-only RunReport from a results file."""
    rows = []
    errors = 0
    summary = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("record") == "summary":
                summary = record
            elif "error" in record:
                errors += 1
            else:
                rows.append({name: float(record[name]) for name in METRIC_NAMES})
    if summary is None:
        raise ValueError(f"{path}: missing summary record")
    report = RunReport(
        variant=summary.get("variant", "full"),
        seed=int(summary.get("seed", 0)),
        fingerprint=str(summary.get("config", "")),
        rows=rows,
        errors=errors,
    )
    return report
