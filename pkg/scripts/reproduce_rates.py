"""Closed-form rate budget at the default parameters and across a detuning sweep."""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from purcellbell import physpar
from purcellbell.physpar import SystemParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--params", type=Path, help="JSON parameter file")
    ap.add_argument("--out", type=Path, default=Path("out/rates"))
    ap.add_argument("--dc-max", type=float, default=800.0)
    ap.add_argument("--points", type=int, default=81)
    args = ap.parse_args()

    p = SystemParams.load(args.params) if args.params else SystemParams()
    args.out.mkdir(parents=True, exist_ok=True)
    d = physpar.derived_rates(p)
    budget = d.to_json_dict()
    budget["fiber_pair_rate"] = d.pair_rate * p.eta_fiber**2
    budget["lifetime_ns"] = physpar.lifetime_ns(d.gamma_purcell)
    print(json.dumps(budget, indent=2, default=lambda z: {"re": z.real, "im": z.imag}))

    dcs = np.linspace(-args.dc_max, args.dc_max, args.points)
    with open(args.out / "rate_vs_detuning.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_c_mhz", "gamma_eff_mhz", "lifetime_ns", "r_c_per_s", "r_det2_per_s"])
        for pt in physpar.sweep_detuning(p, dcs.tolist()):
            w.writerow([pt.delta_c, pt.gamma_eff, pt.lifetime_ns, pt.r_c, pt.r_det2])
    print(f"wrote {args.out / 'rate_vs_detuning.csv'}")


if __name__ == "__main__":
    main()
