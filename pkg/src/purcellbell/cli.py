"""Command-line front end.

    purcellbell [--params P.json] [--set key=value ...] [--seed N] [--out DIR] <command> [options]

Commands: rates, simulate, g2, franson, chsh, sweep.  Every command writes a
``<command>_summary.json`` into ``--out`` recording the resolved parameters,
options and seed.  Exit status is 0 on success, 1 on a runtime or analysis
failure and 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, bell, cascade, corr, fit, franson, mcwf, physpar, ttag
from ._rng import spawn
from .physpar import ParameterError, SystemParams

U64_MAX = 2**64 - 1


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: SystemParams
    seed: int
    seed_from_entropy: bool
    out: Path
    options: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"command": self.command, "seed": self.seed, "seed_from_entropy": self.seed_from_entropy,
                "params": self.params.to_json_dict(), "options": self.options, "version": __version__}


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", type=Path, default=argparse.SUPPRESS, help="JSON parameter file")
    common.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        default=argparse.SUPPRESS, help="inline parameter override, e.g. delta_c_mhz=330")
    common.add_argument("--seed", type=_seed, default=argparse.SUPPRESS)
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")

    ap = argparse.ArgumentParser(prog="purcellbell", parents=[common],
                                 description="Atom-cavity photon-pair simulator and analysis tools.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", parents=[common], help="closed-form rates")
    p.add_argument("--delta-c", type=_float_list, default=None, help="comma-separated cavity detunings (MHz)")

    p = sub.add_parser("simulate", parents=[common], help="write time-tag files")
    p.add_argument("--engine", choices=["mcwf", "cascade"], default="cascade")
    p.add_argument("--split-sidebands", action="store_true", help="cascade: one file per sideband")
    p.add_argument("--duration-s", type=float, default=1.0, help="cascade record length")
    p.add_argument("--n-traj", type=int, default=20, help="mcwf trajectories")
    p.add_argument("--duration-ns", type=float, default=50_000.0, help="mcwf trajectory length")
    p.add_argument("--n-max", type=int, default=2, help="mcwf Fock cutoff")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--efficiency", type=float, default=1.0)
    p.add_argument("--dark-rate-hz", type=float, default=0.0)
    p.add_argument("--jitter-ps", type=float, default=0.0)
    p.add_argument("--dead-time-ps", type=int, default=0)
    p.add_argument("--format", choices=["ttag", "csv"], default="ttag")

    p = sub.add_parser("g2", parents=[common], help="correlation histogram")
    p.add_argument("--input", type=Path, nargs="+", help="one file (autocorrelation) or start and stop files")
    p.add_argument("--source", choices=["mcwf", "cascade", "poisson"], default=None,
                   help="simulate the stream instead of reading it")
    p.add_argument("--split", action="store_true", help="cascade: early x late cross-correlation")
    p.add_argument("--duration-s", type=float, default=1.0)
    p.add_argument("--n-traj", type=int, default=20)
    p.add_argument("--duration-ns", type=float, default=50_000.0)
    p.add_argument("--rate-hz", type=float, default=1e5, help="poisson source rate")
    p.add_argument("--bin-ps", type=int, default=1000)
    p.add_argument("--range-ns", type=float, default=30.0)
    p.add_argument("--fit", choices=["none", "damped-cosine", "exponential"], default="none")

    p = sub.add_parser("franson", parents=[common], help="interference curve")
    p.add_argument("--visibility", type=float, default=0.926)
    p.add_argument("--delta-t-ns", type=float, default=47.0)
    p.add_argument("--jitter-ps", type=float, default=0.0)
    p.add_argument("--duration-s", type=float, default=5.0)
    p.add_argument("--n-phases", type=int, default=12)

    p = sub.add_parser("chsh", parents=[common], help="CHSH parameter")
    p.add_argument("--table", type=Path, default=None, help="coincidence table CSV")
    p.add_argument("--basis", type=_float_list, default=None, help="phi_a,phi_a',phi_b,phi_b' in rad")
    p.add_argument("--visibility", type=float, default=0.926)
    p.add_argument("--delta-t-ns", type=float, default=47.0)
    p.add_argument("--duration-s", type=float, default=6.0)

    p = sub.add_parser("sweep", parents=[common], help="detuning sweep and eta fit")
    p.add_argument("--delta-c", type=_float_list, required=True)
    p.add_argument("--duration-s", type=float, default=20.0)
    p.add_argument("--bin-ps", type=int, default=250)
    return ap


def resolve_params(ns) -> SystemParams:
    params = SystemParams.load(ns.params) if getattr(ns, "params", None) else SystemParams()
    data = params.to_json_dict()
    for item in getattr(ns, "overrides", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            data[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--set {key}: not a number: {value!r}") from None
    return SystemParams.from_json_dict(data)


def _options(ns) -> dict:
    skip = {"params", "overrides", "seed", "out", "command"}
    out = {}
    for k, v in vars(ns).items():
        if k in skip:
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        out[k] = v
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _finish(cfg: RunConfig, results: dict, files: list[str]) -> dict:
    summary = {**cfg.record(), "results": results, "files": files}
    _write_json(cfg.out / f"{cfg.command}_summary.json", summary)
    return summary


def _detector(ns) -> ttag.DetectorConfig:
    return ttag.DetectorConfig(ns.efficiency, ns.dark_rate_hz, ns.jitter_ps, ns.dead_time_ps)


def _write_stream(stream: ttag.ClickStream, path: Path) -> None:
    if path.suffix == ".csv":
        ttag.write_csv(stream, path)
    else:
        ttag.write_binary(stream, path)


# -- commands -------------------------------------------------------------------

def cmd_rates(cfg: RunConfig, ns) -> dict:
    p = cfg.params
    d = physpar.derived_rates(p)
    results = d.to_json_dict()
    results["effective_gamma_mhz"] = physpar.effective_gamma(p)
    results["fiber_pair_rate"] = d.pair_rate * p.eta_fiber**2
    results["lifetime_ns"] = physpar.lifetime_ns(d.gamma_purcell)
    results["in_purcell_regime"] = p.in_purcell_regime()
    if ns.delta_c:
        results["sweep"] = [{"delta_c_mhz": pt.delta_c, "r_c": pt.r_c, "r_det2": pt.r_det2,
                             "gamma_eff_mhz": pt.gamma_eff, "lifetime_ns": pt.lifetime_ns}
                            for pt in physpar.sweep_detuning(p, ns.delta_c)]
    print(json.dumps(results, indent=2, default=_json_default))
    return _finish(cfg, results, [])


def cmd_simulate(cfg: RunConfig, ns) -> dict:
    ext = ".csv" if ns.format == "csv" else ".ttag"
    files = []
    if ns.engine == "mcwf":
        model = mcwf.build_model(cfg.params, ns.n_max)
        ens = mcwf.run_ensemble(model, ns.n_traj, ns.duration_ns, cfg.seed, n_jobs=ns.jobs)
        s_det = spawn(cfg.seed, 1)[0]
        stream = ttag.apply_detector(ens.stream(concatenate=True), _detector(ns), s_det)
        path = cfg.out / f"mcwf{ext}"
        _write_stream(stream, path)
        files.append(path.name)
        results = ens.summary()
    else:
        model = cascade.pair_model_from_params(cfg.params)
        s_pairs, s_det = spawn(cfg.seed, 2)
        pairs = cascade.sample_pairs(model, ns.duration_s, s_pairs)
        det = _detector(ns)
        if ns.split_sidebands:
            early, late = cascade.to_click_streams(pairs, model, det, s_det, split=True)
            for name, st in (("early", early), ("late", late)):
                path = cfg.out / f"cascade_{name}{ext}"
                _write_stream(st, path)
                files.append(path.name)
        else:
            st = cascade.to_click_streams(pairs, model, det, s_det, split=False)
            path = cfg.out / f"cascade_merged{ext}"
            _write_stream(st, path)
            files.append(path.name)
        expected = model.pair_rate * ns.duration_s
        results = {"model_pair_rate": model.pair_rate, "realized_pair_rate": len(pairs) / ns.duration_s,
                   "realized_pair_rate_sigma": math.sqrt(max(expected, 1)) / ns.duration_s,
                   "n_pairs": len(pairs), "lifetime_ns": model.lifetime_ns,
                   "elastic_background_fraction": model.elastic_background_fraction}
    return _finish(cfg, results, files)


def _g2_streams(cfg: RunConfig, ns):
    if ns.input:
        if len(ns.input) > 2:
            raise UsageError("--input takes one or two files")
        streams = [ttag.read_stream(p) for p in ns.input]
        return streams[0], (streams[1] if len(streams) == 2 else None)
    if ns.source is None:
        raise UsageError("g2 needs --input or --source")
    if ns.source == "poisson":
        return ttag.poisson_stream(ns.rate_hz, int(ns.duration_s * 1e12), cfg.seed), None
    if ns.source == "mcwf":
        ens = mcwf.run_ensemble(mcwf.build_model(cfg.params), ns.n_traj, ns.duration_ns, cfg.seed)
        return ens.stream(int(mcwf.Channel.CAVITY_EMISSION), concatenate=True), None
    model = cascade.pair_model_from_params(cfg.params)
    s_pairs, s_det = spawn(cfg.seed, 2)
    pairs = cascade.sample_pairs(model, ns.duration_s, s_pairs)
    if ns.split:
        return cascade.to_click_streams(pairs, model, ttag.DetectorConfig(), s_det, split=True)
    return cascade.to_click_streams(pairs, model, ttag.DetectorConfig(), s_det, split=False), None


def cmd_g2(cfg: RunConfig, ns) -> dict:
    start, stop = _g2_streams(cfg, ns)
    hist = analysis.g2_histogram(start, stop, bin_ps=ns.bin_ps, half_range_ps=int(ns.range_ns * 1000))
    hist.to_csv(cfg.out / "g2.csv")
    results = {"g2_zero": analysis.g2_zero(hist), "n_start": hist.n_start, "n_stop": hist.n_stop,
               "bin_ps": ns.bin_ps, "csv_columns": ["tau_ps", "counts", "g2"]}
    if ns.fit == "damped-cosine":
        results["fit"] = analysis.oscillation_fit(hist, tau_min_ps=ns.bin_ps).to_json_dict()
    elif ns.fit == "exponential":
        results["fit"] = analysis.decay_time_fit(hist).to_json_dict()
    return _finish(cfg, results, ["g2.csv"])


def cmd_franson(cfg: RunConfig, ns) -> dict:
    if ns.n_phases < 5:
        raise UsageError("--n-phases must be at least 5")
    model = cascade.pair_model_from_params(cfg.params)
    s_pairs, s_curve = spawn(cfg.seed, 2)
    pairs = cascade.sample_pairs(model, ns.duration_s, s_pairs)
    fc = franson.FransonConfig(delta_t_ps=int(round(ns.delta_t_ns * 1000)), visibility=ns.visibility,
                               jitter_sigma_ps=ns.jitter_ps)
    fc.check_delay(model.lifetime_ns * 1000)
    phis = np.linspace(0, 2 * math.pi, ns.n_phases, endpoint=False)
    curve = franson.interference_curve(pairs, fc, phis, s_curve)
    lines = ["phi_sum_rad,central_area"] + [f"{phi!r},{a}" for phi, a in curve]
    (cfg.out / "interference.csv").write_text("\n".join(lines) + "\n")
    res = fit.fit_sinusoid([c[0] for c in curve], [c[1] for c in curve], weights="poisson")
    results = {"n_pairs": len(pairs), "fit": res.to_json_dict(),
               "visibility": res.derived.get("visibility"),
               "visibility_sigma": res.derived.get("visibility_sigma")}
    _write_json(cfg.out / "visibility.json", results)
    return _finish(cfg, results, ["interference.csv", "visibility.json"])


def cmd_chsh(cfg: RunConfig, ns) -> dict:
    basis = tuple(ns.basis) if ns.basis else bell.CHSH_BASIS
    if len(basis) != 4:
        raise UsageError("--basis needs four phases")
    if ns.table is not None:
        table = bell.CoincidenceTable.read_csv(ns.table)
    else:
        model = cascade.pair_model_from_params(cfg.params)
        s_pairs, s_tab = spawn(cfg.seed, 2)
        pairs = cascade.sample_pairs(model, ns.duration_s, s_pairs)
        fc = franson.FransonConfig(delta_t_ps=int(round(ns.delta_t_ns * 1000)), visibility=ns.visibility)
        table = bell.table_from_franson(pairs, fc, basis, seed=s_tab)
        table.to_csv(cfg.out / "chsh_table.csv")
    res = bell.chsh(table, basis)
    res.to_json(cfg.out / "chsh.json")
    files = ["chsh.json"] + ([] if ns.table is not None else ["chsh_table.csv"])
    results = {**res.to_json_dict(), "violation_sigmas": res.violation_sigmas()}
    print(f"S = {res.s_value:.4f} +/- {res.s_sigma:.4f}")
    return _finish(cfg, results, files)


def cmd_sweep(cfg: RunConfig, ns) -> dict:
    if not ns.delta_c:
        raise UsageError("--delta-c list is empty")
    rows = analysis.simulate_sweep(cfg.params, ns.delta_c, ns.duration_s, cfg.seed, bin_ps=ns.bin_ps)
    text = "\n".join([analysis.SweepRow.CSV_HEADER] + [r.csv_row() for r in rows]) + "\n"
    (cfg.out / "sweep.csv").write_text(text)
    rates = [r.pair_rate_per_s for r in rows]
    weights = [1.0 / r.pair_rate_sigma**2 for r in rows]
    results = {"points": len(rows)}
    if len(rows) >= 5:
        fr = fit.fit_rate_vs_detuning([r.delta_c_mhz for r in rows], rates, cfg.params, weights=weights)
        results["eta_fit"] = fr.to_json_dict()
        results["eta_injected"] = cfg.params.eta_total
    else:
        results["eta_fit"] = None
        results["note"] = "eta fit needs at least 5 detunings"
    return _finish(cfg, results, ["sweep.csv"])


COMMANDS = {"rates": cmd_rates, "simulate": cmd_simulate, "g2": cmd_g2, "franson": cmd_franson,
            "chsh": cmd_chsh, "sweep": cmd_sweep}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        params = resolve_params(ns)
        out = getattr(ns, "out", None) or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        seed = getattr(ns, "seed", None)
        from_entropy = seed is None
        if from_entropy:
            seed = int(np.random.SeedSequence().entropy) & U64_MAX
        cfg = RunConfig(ns.command, params, seed, from_entropy, out, _options(ns))
    except (UsageError, ParameterError, json.JSONDecodeError, OSError) as exc:
        print(f"purcellbell: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[ns.command](cfg, ns)
    except (UsageError, bell.BellError, ttag.TtagError, ParameterError, FileNotFoundError) as exc:
        kind = "usage" if isinstance(exc, UsageError) else "input"
        print(f"purcellbell {ns.command}: {kind} error: {exc}", file=sys.stderr)
        return 2
    except (fit.FitError, corr.CorrelationError, mcwf.IntegrationError, mcwf.DegenerateSteadyState,
            ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"purcellbell {ns.command}: {type(exc).__module__.split('.')[-1]}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
