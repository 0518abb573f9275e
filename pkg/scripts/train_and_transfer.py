"""Offline training on mixture data followed by the online transfer checks.

Generates a dataset from the level-0 mixture, trains a network from random
initial weights, then evaluates the trained weights after swapping the fiber
shear modulus and after truncating the matrix modes, without retraining.

    python scripts/train_and_transfer.py --points 2 --curves 10 --steps 20 --epochs 2000
"""

import argparse
import time
from pathlib import Path

from feprnn import config, io
from feprnn.constitutive import mode_subset
from feprnn.micromodel import VoigtMixture, generate_dataset
from feprnn.pathgen import PathSpec, sample_paths
from feprnn.prnn import PrnnLayout, TrainSpec, error_metrics, mode_sweep, train, transfer_properties

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "gen_data.toml"))
    ap.add_argument("--points", type=int, default=2)
    ap.add_argument("--curves", type=int, default=10)
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--train-modes", type=int, default=None, help="train on the first n matrix modes only")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/train")
    args = ap.parse_args()

    cfg = config.load(args.config)
    fp, mp, w = config.fiber(cfg), config.matrix(cfg), config.mixture_weights(cfg)
    mp_train = mode_subset(mp, args.train_modes) if args.train_modes else mp

    def data(fiber, matrix, seed, count):
        paths = sample_paths(PathSpec(count=count, steps=args.steps, dt_bounds=(1.0, 100.0), seed=seed))
        return generate_dataset(VoigtMixture([(fiber, w[0]), (matrix, w[1])]), paths, seed=seed)

    ds = data(fp, mp_train, args.seed, args.curves)
    layout = PrnnLayout.from_split(args.points, fp, mp_train) if args.points > 2 else PrnnLayout(2, 1, fp, mp_train)
    t0 = time.perf_counter()
    params, rep = train(ds, layout, TrainSpec(epochs=args.epochs, seed=args.seed))
    print(f"trained {len(rep.train_loss) - 1} epochs in {time.perf_counter() - t0:.0f} s, "
          f"best validation NMSE {rep.best_val:.3e} at epoch {rep.best_epoch}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_model(out / "model.json", params, layout, {"seed": args.seed, "best_val": rep.best_val})

    test = data(fp, mp_train, args.seed + 1000, args.curves)
    mae, rel = error_metrics(params, layout, test)
    print(f"held-out error {mae:.3f} MPa ({rel:.2f}% of stress std)")

    print("fiber G12 transfer (no retraining):")
    for factor in (0.5, 0.75, 1.25, 1.5):
        fpx = fp.with_shear_modulus_12(factor * fp.shear_modulus_12)
        lay = transfer_properties(params, layout, fiber_props=fpx)
        mae, rel = error_metrics(params, lay, data(fpx, mp_train, args.seed + 2000, args.curves))
        print(f"  G12 x {factor:4.2f}: {mae:.3f} MPa ({rel:.2f}%)")

    print("matrix mode sweep (no retraining):")
    for n, mae, rel in mode_sweep(params, layout, mp, data(fp, mp, args.seed + 3000, args.curves)):
        print(f"  {n} modes: {mae:.3f} MPa ({rel:.2f}%)")


if __name__ == "__main__":
    main()
