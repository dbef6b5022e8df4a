#!/usr/bin/env python3
"""Large-batch vs small-batch training under injected label noise.

Trains the same model with the desk LB and SB presets on a noisy-label
corpus, writes one trace CSV per run, and (with matplotlib installed) plots
validation AUC per epoch for both regimes.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from satgate.model import PredictorConfig, Vocabulary, WindowDataset, init_params
from satgate.synth import CorpusConfig, generate
from satgate.training import BATCH_PRESETS, TrainConfig, train

MINI = PredictorConfig(
    vocab_size=400, max_text_len=16, embed_dim=16, num_turns=5,
    text_blocks=1, struct_blocks=1, num_heads=2, ffn_dim=32,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="lb-vs-sb")
    parser.add_argument("--sessions", type=int, default=5000)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--noise", type=float, default=0.2)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    sessions = generate(CorpusConfig(seed=99, num_sessions=args.sessions))
    cut = int(0.8 * len(sessions))
    vocab = Vocabulary.build(sessions[:cut], MINI.vocab_size)
    train_ds = WindowDataset.from_sessions(sessions[:cut], vocab, MINI, "oracle")
    val_ds = WindowDataset.from_sessions(sessions[cut:], vocab, MINI, "oracle")

    curves: dict[str, list[list[float]]] = {"desk-lb": [], "desk-sb": []}
    for preset in ("desk-lb", "desk-sb"):
        batch_size, lr = BATCH_PRESETS[preset]
        for seed in args.seeds:
            tconfig = TrainConfig(
                batch_size=batch_size, learning_rate=lr, epochs=args.epochs,
                seed=seed, label_noise_rate=args.noise,
            )
            result = train(init_params(MINI, vocab, seed=seed), MINI, train_ds, val_ds, tconfig)
            aucs = [r.val_auc for r in result.trace if r.val_auc is not None]
            curves[preset].append(aucs)
            out = work / f"{preset}-seed{seed}.csv"
            with open(out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "val_auc"])
                for epoch, value in enumerate(aucs, start=1):
                    writer.writerow([epoch, repr(float(value))])
            print(f"{preset} seed={seed}: final AUC {aucs[-1]:.4f} "
                  f"(batch {batch_size}, lr {lr})")

    for preset, runs in curves.items():
        mean = np.mean([r[-1] for r in runs])
        print(f"{preset}: mean final AUC over {len(runs)} seeds = {mean:.4f}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        for preset, style in (("desk-lb", "-"), ("desk-sb", "--")):
            for i, aucs in enumerate(curves[preset]):
                ax.plot(range(1, len(aucs) + 1), aucs, style,
                        label=preset if i == 0 else None, alpha=0.8)
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation AUC")
        ax.set_title(f"large vs small batch, {args.noise:.0%} label noise")
        ax.legend()
        fig.tight_layout()
        fig.savefig(work / "lb_vs_sb.png", dpi=120)
        print(f"plot: {work / 'lb_vs_sb.png'}")
    except ImportError:
        print("matplotlib not installed; skipping the plot")


if __name__ == "__main__":
    main()
