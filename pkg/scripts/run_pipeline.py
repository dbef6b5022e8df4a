#!/usr/bin/env python3
"""End-to-end desk run of the whole pipeline through the CLI.

Generates a synthetic corpus, trains the weak labeler on a small oracle
split, weak-labels everything, trains the transformer, evaluates it, and
replays the gating variants. Artifacts and manifests land in --workdir.
"""

import argparse
import json
from pathlib import Path

from satgate.cli import dispatch


def run(args: list[str]) -> None:
    print("$ satgate " + " ".join(args))
    code = dispatch(args)
    if code != 0:
        raise SystemExit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="pipeline-run")
    parser.add_argument("--sessions", type=int, default=4000)
    parser.add_argument("--expert-sessions", type=int, default=300)
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    corpus_cfg = work / "corpus-config.json"
    corpus_cfg.write_text(json.dumps({"seed": args.seed, "num_sessions": args.sessions}))
    corpus = work / "corpus.jsonl"
    run(["gen-corpus", "--config", str(corpus_cfg), "--out", str(corpus)])

    # expert split: the head of the corpus stands in for annotated sessions
    from satgate.dialog import read_sessions, write_sessions

    sessions = read_sessions(corpus)
    expert = work / "expert.jsonl"
    write_sessions(sessions[: args.expert_sessions], expert)
    rest_train = work / "train.jsonl"
    rest_val = work / "val.jsonl"
    cut = int(0.85 * len(sessions))
    write_sessions(sessions[:cut], rest_train)
    write_sessions(sessions[cut:], rest_val)

    weak_model = work / "weak-model.json"
    run(["train-weak", "--labeled", str(expert), "--out", str(weak_model),
         "--max-samples", "1000", "--seed", "0"])

    baseline_model = work / "baseline-model.json"
    labeled_train = work / "train-labeled.jsonl"
    run(["label", "--model", str(weak_model), "--in", str(rest_train), "--out", str(labeled_train)])
    run(["train-weak", "--labeled", str(labeled_train), "--out", str(baseline_model),
         "--features", "causal", "--labels", "weak"])

    train_cfg = work / "train-config.json"
    train_cfg.write_text(json.dumps({
        "model_preset": "desk",
        "batch_size": 256,
        "learning_rate": 0.002,
        "epochs": args.epochs,
        "label_source": "weak",
    }))
    ckpt = work / "predictor.ckpt"
    trace = work / "trace.csv"
    run(["train", "--config", str(train_cfg), "--corpus", str(labeled_train),
         "--val", str(rest_val), "--out", str(ckpt), "--trace", str(trace), "--seed", "0"])

    report = work / "eval.csv"
    run(["eval", "--ckpt", str(ckpt), "--corpus", str(rest_val), "--report", str(report)])

    variants = work / "variants.json"
    variants.write_text(json.dumps({
        "threshold": 0.7,
        "variants": [
            {"name": "no-predictor", "kind": "none"},
            {"name": "feature-baseline", "kind": "weak", "model": str(baseline_model)},
            {"name": "transformer", "kind": "transformer", "ckpt": str(ckpt)},
        ],
    }))
    sim = work / "simulation.csv"
    run(["simulate", "--corpus", str(rest_val), "--variants", str(variants),
         "--out", str(sim), "--seed", "1"])

    print(f"\nartifacts in {work}/")
    for name in ("eval.csv", "simulation.csv"):
        print(f"--- {name} ---")
        print((work / name).read_text())


if __name__ == "__main__":
    main()
