"""Single material point with and without the fiber rotation update.

    python scripts/single_point_rotation.py --theta0 15 --strain 0.03
"""

import argparse
from pathlib import Path

from feprnn import config
from feprnn.pathgen import CsrProtocol
from feprnn.prnn import Prnn, PrnnLayout, PrnnParams
from feprnn.singlescale import SinglePointProblem, solve
from feprnn.stepping import AdaptiveStepping

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "gen_data.toml"))
    ap.add_argument("--theta0", type=float, default=15.0)
    ap.add_argument("--strain", type=float, default=0.03)
    ap.add_argument("--rate", type=float, default=1e-4)
    ap.add_argument("--dt", type=float, default=10.0)
    args = ap.parse_args()

    cfg = config.load(args.config)
    fp, mp, w = config.fiber(cfg), config.matrix(cfg), config.mixture_weights(cfg)
    model = Prnn(PrnnParams.voigt_equivalent(w), PrnnLayout(2, 1, fp, mp))
    proto = CsrProtocol(rate=args.rate, target_strain=args.strain)
    step = AdaptiveStepping(dt0=args.dt, dt_max=args.dt)
    a, b = (solve(SinglePointProblem(args.theta0, model, proto, rotation=r, stepping=step)).arrays() for r in (True, False))
    print(f"{'eps_yy':>8} {'with phi':>10} {'without':>10} {'phi [deg]':>10}")
    stride = max(1, len(a["time"]) // 15)
    for k in range(0, len(a["time"]), stride):
        print(f"{a['eps_yy'][k]:8.4f} {a['sig_yy'][k]:10.2f} {b['sig_yy'][k]:10.2f} {a['phi'][k]:10.3f}")


if __name__ == "__main__":
    main()
