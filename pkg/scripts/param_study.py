#!/usr/bin/env python3
"""Sweep the return-discount and retrieval-size knobs of the pipeline.

Trains one encoder + agent per discount value, then evaluates the full
pipeline for every retrieval size, all on the same planted-partition dataset.
Prints an F-score grid and writes --out/param-study.json.
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ppsl.cli import main as ppsl_main
from ppsl.evaluation import read_report

CONFIG_TEMPLATE = """\
[data]
edges = {data_dir}/edges.txt
communities = {data_dir}/communities.txt
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
gamma = {gamma}

[prompt]
num_similar = {num_similar}
"""


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/param-study", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--gammas", type=float, nargs="+", default=[0.25, 0.5, 1.0],
                        help="return discount factors to sweep")
    parser.add_argument("--num-similar", type=int, nargs="+", default=[5, 10, 20],
                        help="retrieval sizes to sweep")
    parser.add_argument("--blocks", type=int, default=60)
    parser.add_argument("--block-size", type=int, default=10)
    parser.add_argument("--p-in", type=float, default=0.3)
    parser.add_argument("--p-out", type=float, default=0.01)
    parser.add_argument("--queries", type=int, default=20)
    parser.add_argument("--known", type=int, default=100)
    parser.add_argument("--agent-epochs", type=int, default=25)
    return parser.parse_args()


def run(cmdline: list) -> None:
    code = ppsl_main(cmdline)
    if code != 0:
        sys.exit(f"command failed ({code}): {' '.join(cmdline)}")


def write_config(path: str, args: argparse.Namespace, data_dir: str, gamma: float, m: int) -> str:
    with open(path, "w") as fh:
        fh.write(CONFIG_TEMPLATE.format(
            data_dir=data_dir,
            blocks=args.blocks,
            block_size=args.block_size,
            p_in=args.p_in,
            p_out=args.p_out,
            queries=args.queries,
            known=args.known,
            agent_epochs=args.agent_epochs,
            gamma=gamma,
            num_similar=m,
        ))
    return path


def main() -> None:
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)
    started = time.perf_counter()
    grid = {}

    for gamma in args.gammas:
        run_dir = os.path.join(args.out, f"gamma-{gamma}")
        os.makedirs(run_dir, exist_ok=True)
        cfg = write_config(
            os.path.join(run_dir, "train.ini"), args, run_dir, gamma, args.num_similar[0]
        )
        common = ["--config", cfg, "--seed", str(args.seed), "--out-dir", run_dir]
        run(["synth"] + common)
        run(["pretrain"] + common)
        run(["train-agent"] + common)
        for m in args.num_similar:
            cfg_m = write_config(
                os.path.join(run_dir, f"detect-m{m}.ini"), args, run_dir, gamma, m
            )
            run(["detect", "--config", cfg_m, "--seed", str(args.seed), "--out-dir", run_dir])
            report = read_report(os.path.join(run_dir, "results-full.jsonl"))
            grid[(gamma, m)] = {
                "fscore": report.means()["fscore"],
                "jaccard": report.means()["jaccard"],
                "errors": report.errors,
            }
            os.replace(
                os.path.join(run_dir, "results-full.jsonl"),
                os.path.join(run_dir, f"results-m{m}.jsonl"),
            )

    print(f"\nmean F-score grid ({time.perf_counter() - started:.0f}s total)")
    print("gamma  " + "  ".join(f"m={m:>4}" for m in args.num_similar))
    for gamma in args.gammas:
        cells = "  ".join(f"{grid[(gamma, m)]['fscore']:6.4f}" for m in args.num_similar)
        print(f"{gamma:<5}  {cells}")

    summary = {f"gamma={g} m={m}": stats for (g, m), stats in grid.items()}
    summary_path = os.path.join(args.out, "param-study.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"\nwrote {summary_path}")


if __name__ == "__main__":
    main()
