"""Calibrate the energy-distance null gates used by the acceptance suite.

For each reference law, draws ``reps`` independent same-law pairs of size
``n`` and records their energy distances and the 0.99 quantile. The output is
tests/data/null_thresholds.json. About 15 minutes on one core.

Energy distance depends only on pairwise differences, so one run at N(0, I)
also covers every translated Gaussian with identity covariance.
"""

import argparse
import json
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from mmflow.couplings import Checkerboard, Gaussian
from mmflow.metrics import null_statistics

LAWS = {
    "gaussian_identity_2d": Gaussian(np.zeros(2), np.eye(2)),
    "checkerboard": Checkerboard(),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--quantile", type=float, default=0.99)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parents[1] / "tests" / "data" / "null_thresholds.json")
    args = ap.parse_args()
    report = {"n": args.n, "reps": args.reps, "quantile": args.quantile, "seed": args.seed, "laws": {}}
    with threadpool_limits(1):
        for name, law in LAWS.items():
            stats = null_statistics(law.sample, args.n, args.reps, args.seed)
            thr = float(np.quantile(stats, args.quantile))
            report["laws"][name] = {"threshold": thr, "median": float(np.median(stats)), "stats": stats.tolist()}
            print(f"{name}: median {np.median(stats):.3e}, q{args.quantile} {thr:.3e}", flush=True)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report, indent=1) + "\n")


if __name__ == "__main__":
    main()
