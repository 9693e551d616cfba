"""Cavity-photon g2 from quantum trajectories, compared with the steady-state master-equation oracle.

Also prints the oracle g2(0) and oscillation frequency at a few cavity
detunings, which is how the antibunching threshold was examined.
"""

import argparse
from pathlib import Path

import numpy as np

from purcellbell import analysis, fit, mcwf, physpar
from purcellbell.physpar import SystemParams


def oracle_summary(p: SystemParams):
    model = mcwf.build_model(p, 2)
    taus = np.arange(0.0, 30.0, 0.05)
    g2 = mcwf.cavity_g2_oracle(model, taus)
    sel = taus >= 1.0
    res = fit.fit_damped_cosine(taus[sel], g2[sel])
    return g2[0], res.params["frequency"] * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-traj", type=int, default=64)
    ap.add_argument("--duration-ns", type=float, default=220_000.0)
    ap.add_argument("--seed", type=int, default=404)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/antibunching"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    p = SystemParams()
    target = physpar.rabi_sideband(p.omega, p.delta_a)
    for dc in (0.0, 330.0, -330.0):
        g0, f = oracle_summary(p.with_(delta_c=dc))
        print(f"oracle  dc = {dc:+6.0f} MHz: g2(0) = {g0:.3f}, oscillation {f:.1f} MHz (Omega' = {target:.1f})")

    model = mcwf.build_model(p, 2)
    ens = mcwf.run_ensemble(model, args.n_traj, args.duration_ns, args.seed, n_jobs=args.jobs)
    stream = ens.stream(int(mcwf.Channel.CAVITY_EMISSION))
    hist = analysis.g2_histogram(stream, bin_ps=1000, half_range_ps=30_000)
    hist.to_csv(args.out / "g2_mcwf.csv")
    osc = analysis.oscillation_fit(hist, tau_min_ps=1000)
    print(f"mcwf: {len(stream)} cavity clicks, g2(0) = {analysis.g2_zero(hist):.3f}, "
          f"oscillation {osc.derived['frequency_mhz']:.1f} MHz")


if __name__ == "__main__":
    main()
