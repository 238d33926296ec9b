"""Command-line entry points: synth, pretrain, train-agent, detect, ablate, eval."""

import argparse
import json
import logging
import os
import sys

import torch

from . import evaluation, pipeline, seeding
from .config import apply_seed_override, config_fingerprint, load_config
from .graph import generate_planted_partition

logger = logging.getLogger(__name__)


def _parse_ids(text: str) -> list:
    ids = []
    for token in text.replace(",", " ").split():
        ids.append(int(token))
    if not ids:
        raise ValueError("--queries given but no ids parsed")
    return ids


def cmd_synth(cfg, out_dir: str) -> int:
    rng = seeding.numpy_rng(cfg.run.seed, seeding.STREAM_SYNTH)
    g, truth = generate_planted_partition(
        cfg.data.synth_communities,
        cfg.data.synth_size,
        cfg.data.synth_p_in,
        cfg.data.synth_p_out,
        rng,
    )
    edges_path = cfg.data.edges or os.path.join(out_dir, "edges.txt")
    comms_path = cfg.data.communities or os.path.join(out_dir, "communities.txt")
    for path in (edges_path, comms_path):
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
    g.write_edge_list(edges_path)
    with open(comms_path, "w") as fh:
        for comm in truth.communities:
            fh.write(" ".join(str(g.to_external(v)) for v in comm.sorted_members()) + "\n")
    print(
        f"synth: {g.num_nodes} nodes, {g.num_edges} edges, "
        f"{len(truth)} communities -> {edges_path}, {comms_path}"
    )
    return 0


def cmd_pretrain(cfg, out_dir: str) -> int:
    paths = pipeline.run_pretrain(cfg, out_dir)
    print(f"pretrain: wrote {paths['encoder']}")
    return 0


def cmd_train_agent(cfg, out_dir: str) -> int:
    paths = pipeline.run_train_agent(cfg, out_dir)
    print(f"train-agent: wrote {paths['agent']}")
    return 0


def _run_variant(cfg, out_dir: str, variant: str, queries_arg: str | None) -> int:
    handle = pipeline.build_handle(cfg, out_dir, variant)
    if queries_arg:
        specs = evaluation.specs_from_external(handle, _parse_ids(queries_arg))
    else:
        specs = evaluation.specs_from_split(handle)
    report = evaluation.run_queries(handle, specs, variant)
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, f"results-{variant}.jsonl")
    evaluation.write_report(out_path, report, handle.graph, config_fingerprint(cfg))
    means = report.means()
    print(
        f"{variant}: {len(report.results)} queries ({report.errors} errors), "
        f"precision {means['precision']:.4f}, recall {means['recall']:.4f}, "
        f"fscore {means['fscore']:.4f}, jaccard {means['jaccard']:.4f} -> {out_path}"
    )
    return 0


def cmd_eval(result_paths: list, out_dir: str | None) -> int:
    reports = [evaluation.read_report(p) for p in result_paths]
    summary = evaluation.aggregate(reports)
    for name in evaluation.METRIC_NAMES:
        per_run = summary["per_run"][name]
        print(f"{name}: mean {per_run['mean']:.4f} std {per_run['std']:.4f}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        agg_path = os.path.join(out_dir, "aggregate.json")
        with open(agg_path, "w") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"eval: wrote {agg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppsl",
        description="Local community detection: contrastive encoding, policy-gradient "
        "expansion, similar-community retrieval and threshold prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, queries=False, variant=False):
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out-dir", default="runs", help="artifact directory")
        if queries:
            p.add_argument("--queries", default=None, help="comma-separated node ids")
        if variant:
            p.add_argument(
                "--variant", required=True, choices=list(pipeline.VARIANTS),
                help="pipeline variant to evaluate",
            )

    add_common(sub.add_parser("synth", help="write a planted-partition dataset"))
    add_common(sub.add_parser("pretrain", help="train the encoder and cache embeddings"))
    add_common(sub.add_parser("train-agent", help="train the expansion agent"))
    add_common(sub.add_parser("detect", help="run the full pipeline on query nodes"), queries=True)
    add_common(
        sub.add_parser("ablate", help="run a pipeline variant on query nodes"),
        queries=True,
        variant=True,
    )
    eval_p = sub.add_parser("eval", help="aggregate result files")
    eval_p.add_argument("results", nargs="+", help="result files to aggregate")
    eval_p.add_argument("--out-dir", default=None, help="where to write aggregate.json")
    return parser


def main(argv=None) -> int:
    torch.set_num_threads(1)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args.results, args.out_dir)
        cfg = apply_seed_override(load_config(args.config), args.seed)
        if args.command == "synth":
            return cmd_synth(cfg, args.out_dir)
        if args.command == "pretrain":
            return cmd_pretrain(cfg, args.out_dir)
        if args.command == "train-agent":
            return cmd_train_agent(cfg, args.out_dir)
        if args.command == "detect":
            return _run_variant(cfg, args.out_dir, "full", args.queries)
        if args.command == "ablate":
            return _run_variant(cfg, args.out_dir, args.variant, args.queries)
        raise ValueError(f"unhandled command {args.command}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
