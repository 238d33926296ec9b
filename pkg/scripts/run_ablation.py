#!/usr/bin/env python3
"""Run the multi-seed ablation protocol on a planted-partition fixture.

For each seed this generates a dataset, trains the encoder and the expansion
agent, evaluates all four pipeline variants (full, no-ne, no-sg, no-pf), and
prints a per-seed and pooled F-score table. Artifacts and per-variant result
files land under --out/seed<N>/; the cross-seed summary is written to
--out/ablation-summary.json.
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ppsl.cli import main as ppsl_main
from ppsl.evaluation import aggregate, read_report
from ppsl.pipeline import VARIANTS

CONFIG_TEMPLATE = """\
[data]
edges = {run_dir}/edges.txt
communities = {run_dir}/communities.txt
synth_communities = {blocks}
synth_size = {block_size}
synth_p_in = {p_in}
synth_p_out = {p_out}

[run]
queries = {queries}
known = {known}
timing = true

[sampler]
epochs = {agent_epochs}

[prompt]
num_similar = {num_similar}
"""


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/ablation", help="output directory")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--blocks", type=int, default=60, help="planted communities")
    parser.add_argument("--block-size", type=int, default=10, help="nodes per community")
    parser.add_argument("--p-in", type=float, default=0.3, help="intra-community edge probability")
    parser.add_argument("--p-out", type=float, default=0.01, help="inter-community edge probability")
    parser.add_argument("--queries", type=int, default=50, help="query nodes per seed")
    parser.add_argument("--known", type=int, default=100, help="known communities cap")
    parser.add_argument("--agent-epochs", type=int, default=25, help="expansion-agent epochs")
    parser.add_argument("--num-similar", type=int, default=20, help="retrieved communities per query")
    return parser.parse_args()


def run(cmdline: list) -> None:
    code = ppsl_main(cmdline)
    if code != 0:
        sys.exit(f"command failed ({code}): {' '.join(cmdline)}")


def main() -> None:
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)
    reports = {variant: [] for variant in VARIANTS}
    started = time.perf_counter()

    for seed in args.seeds:
        run_dir = os.path.join(args.out, f"seed{seed}")
        os.makedirs(run_dir, exist_ok=True)
        cfg_path = os.path.join(run_dir, "run.ini")
        with open(cfg_path, "w") as fh:
            fh.write(CONFIG_TEMPLATE.format(run_dir=run_dir, **{
                "blocks": args.blocks,
                "block_size": args.block_size,
                "p_in": args.p_in,
                "p_out": args.p_out,
                "queries": args.queries,
                "known": args.known,
                "agent_epochs": args.agent_epochs,
                "num_similar": args.num_similar,
            }))
        common = ["--config", cfg_path, "--seed", str(seed), "--out-dir", run_dir]
        run(["synth"] + common)
        run(["pretrain"] + common)
        run(["train-agent"] + common)
        run(["detect"] + common)
        for variant in ("no-ne", "no-sg", "no-pf"):
            run(["ablate", "--variant", variant] + common)
        for variant in VARIANTS:
            reports[variant].append(
                read_report(os.path.join(run_dir, f"results-{variant}.jsonl"))
            )

    print(f"\nper-seed mean F-score ({time.perf_counter() - started:.0f}s total)")
    header = "seed  " + "  ".join(f"{v:>8}" for v in VARIANTS)
    print(header)
    for i, seed in enumerate(args.seeds):
        row = "  ".join(f"{reports[v][i].means()['fscore']:8.4f}" for v in VARIANTS)
        print(f"{seed:<4}  {row}")

    summary = {variant: aggregate(reports[variant]) for variant in VARIANTS}
    print("\npooled across seeds (mean ± std of per-seed means)")
    for variant in VARIANTS:
        stats = summary[variant]["per_run"]["fscore"]
        print(f"{variant:>8}: {stats['mean']:.4f} ± {stats['std']:.4f}")

    summary_path = os.path.join(args.out, "ablation-summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"\nwrote {summary_path}")


if __name__ == "__main__":
    main()
