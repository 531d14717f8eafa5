"""Run a convergence-lab family and write the per-member table and JSON summary."""

import argparse
import time
from pathlib import Path

from tubecalc.convergence import FAMILIES, LabConfig, ShapeSequence, run_sequence_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", default="ellipsoid_to_sphere", choices=sorted(FAMILIES))
    ap.add_argument("--n-members", type=int, default=6)
    ap.add_argument("--no-f2", action="store_true", help="skip the Laplace-Beltrami energy column")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = LabConfig(track_f2=not args.no_f2, workers=args.workers)
    t0 = time.perf_counter()
    rep = run_sequence_experiment(ShapeSequence.build(args.family, args.n_members), cfg)
    cols = ["n", "sup_b", "perim_gap", "vol_gap", "jac_tau_dev", "cn_norm", "F1_n"]
    print("  ".join(f"{c:>11}" for c in cols))
    for row in rep.rows():
        print("  ".join(f"{row[c]:>11.4g}" for c in cols))
    for a in rep.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['lemma']:<28} value {a['value']:.4g}  threshold {a['threshold']:.4g}")
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
    rep.to_csv(out / f"{args.family}.csv")
    (out / f"{args.family}.json").write_text(rep.to_json())


if __name__ == "__main__":
    main()
