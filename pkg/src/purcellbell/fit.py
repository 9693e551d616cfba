"""Small nonlinear least-squares fits with analytic Jacobians.

The solver is a plain Levenberg-Marquardt loop.  With residuals
r = sqrt(w) (f(p) - y) and Jacobian J of r, each iteration solves

    (J^T J + lam * diag(J^T J)) dp = -J^T r

A step that does not increase the cost is accepted and lam is divided by
``lam_down``; otherwise it is rejected and lam is multiplied by ``lam_up``.
The fit has converged once an accepted step satisfies
|dp| <= xtol * (|p| + xtol).  Standard errors come from (J^T J)^-1 scaled by
the reduced chi-square, unless ``absolute_sigma`` is set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import physpar
from .physpar import SystemParams


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class LMOptions:
    max_iter: int = 200
    xtol: float = 1e-10
    lam0: float = 1e-3
    lam_up: float = 10.0
    lam_down: float = 10.0
    lam_max: float = 1e16
    absolute_sigma: bool = False


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    sigmas: dict | None
    residual_norm: float
    converged: bool
    n_iter: int
    initial_residual_norm: float = math.nan
    derived: dict = field(default_factory=dict)
    message: str = ""

    def __getitem__(self, name):
        return self.params[name]

    def to_json_dict(self) -> dict:
        return {"model": self.model, "params": dict(self.params),
                "sigmas": None if self.sigmas is None else dict(self.sigmas),
                "residual_norm": self.residual_norm, "converged": self.converged,
                "n_iter": self.n_iter, "derived": dict(self.derived), "message": self.message}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


Model = Callable[[np.ndarray, np.ndarray], np.ndarray]


def levenberg_marquardt(f: Model, jac: Model, x, y, p0, weights=None, names: Sequence[str] | None = None,
                        options: LMOptions = LMOptions(), model_name: str = "custom") -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p0, dtype=float).copy()
    names = list(names) if names is not None else [f"p{i}" for i in range(len(p))]
    sw = np.ones_like(y) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
    if sw.shape != y.shape or np.any(~np.isfinite(sw)) or np.any(sw < 0):
        raise FitError("weights must be finite, non-negative and match the data")

    def resid(q):
        return sw * (f(x, q) - y)

    r = resid(p)
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise FitError("model is not finite at the initial parameters")
    initial = math.sqrt(cost)
    lam = options.lam0
    converged = False
    message = "maximum iterations reached"
    it = 0
    J = sw[:, None] * jac(x, p)
    for it in range(1, options.max_iter + 1):
        A = J.T @ J
        grad = J.T @ r
        if not np.any(grad):
            converged, message = True, "zero gradient"
            break
        step_taken = False
        while lam <= options.lam_max:
            D = np.diag(np.where(np.diag(A) > 0, np.diag(A), 1.0))
            try:
                dp = np.linalg.solve(A + lam * D, -grad)
            except np.linalg.LinAlgError:
                lam *= options.lam_up
                continue
            trial = p + dp
            r_new = resid(trial)
            cost_new = float(r_new @ r_new)
            if math.isfinite(cost_new) and cost_new <= cost:
                p, r, cost = trial, r_new, cost_new
                lam = max(lam / options.lam_down, 1e-12)
                J = sw[:, None] * jac(x, p)
                step_taken = True
                break
            lam *= options.lam_up
        if not step_taken:
            message = "damping exceeded lam_max without reducing the cost"
            break
        if np.linalg.norm(dp) <= options.xtol * (np.linalg.norm(p) + options.xtol):
            converged, message = True, "relative step below xtol"
            break

    sigmas = None
    if converged:
        dof = max(len(y) - len(p), 1)
        A = J.T @ J
        try:
            cov = np.linalg.pinv(A)
            if not options.absolute_sigma:
                cov = cov * cost / dof
            sigmas = dict(zip(names, np.sqrt(np.clip(np.diag(cov), 0, None)).tolist()))
        except np.linalg.LinAlgError:
            sigmas = None
    return FitResult(model_name, dict(zip(names, p.tolist())), sigmas, math.sqrt(cost), converged, it,
                     initial, message=message)


def poisson_weights(ys) -> np.ndarray:
    return 1.0 / np.maximum(np.asarray(ys, dtype=float), 1.0)


def _resolve_weights(weights, ys):
    if weights is None:
        return None
    if isinstance(weights, str):
        if weights != "poisson":
            raise FitError(f"unknown weighting {weights!r}")
        return poisson_weights(ys)
    return np.asarray(weights, dtype=float)


def _check(xs, ys, minimum):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise FitError("xs and ys must be 1-d arrays of equal length")
    if len(xs) < minimum:
        raise FitError(f"need at least {minimum} points, got {len(xs)}")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise FitError("data contain non-finite values")
    return xs, ys


# exponential: a exp(-k x) + c

EXP_NAMES = ("amplitude", "rate", "offset")


def exp_model(x, p):
    a, k, c = p
    return a * np.exp(-k * x) + c


def exp_jac(x, p):
    a, k, c = p
    e = np.exp(-k * x)
    return np.column_stack([e, -a * x * e, np.ones_like(x)])


def _exp_init(xs, ys):
    c0 = max(float(np.min(ys)), 0.0) * 0.5
    z = ys - c0
    sel = z > 0.05 * np.max(z) if np.max(z) > 0 else np.zeros_like(z, dtype=bool)
    span = float(np.ptp(xs)) or 1.0
    if np.count_nonzero(sel) >= 2:
        w = z[sel]
        slope, intercept = np.polyfit(xs[sel], np.log(z[sel]), 1, w=np.sqrt(w))
        k0, a0 = -slope, math.exp(intercept)
    else:
        k0, a0 = 0.0, float(np.max(np.abs(z))) or 1.0
    if not (k0 > 0 and math.isfinite(k0)):
        k0 = 3.0 / span
    return np.array([a0, k0, c0])


def fit_exponential(xs, ys, weights="poisson", options: LMOptions = LMOptions()) -> FitResult:
    """Fit a exp(-rate x) + offset; ``1/rate`` is the decay time in x units."""
    xs, ys = _check(xs, ys, 4)
    p0 = _exp_init(xs, ys)
    res = levenberg_marquardt(exp_model, exp_jac, xs, ys, p0, _resolve_weights(weights, ys),
                              EXP_NAMES, options, "exponential")
    k = res.params["rate"]
    derived = {"decay_time": 1.0 / k if k != 0 else math.inf}
    if res.sigmas is not None and k != 0:
        derived["decay_time_sigma"] = res.sigmas["rate"] / k**2
    return _with_derived(res, derived)


# damped cosine: A exp(-d x) cos(2 pi f x + phi) + c

DCOS_NAMES = ("amplitude", "decay", "frequency", "phase", "offset")


def dcos_model(x, p):
    A, d, fr, ph, c = p
    return A * np.exp(-d * x) * np.cos(2 * np.pi * fr * x + ph) + c


def dcos_jac(x, p):
    A, d, fr, ph, c = p
    e = np.exp(-d * x)
    arg = 2 * np.pi * fr * x + ph
    co, si = np.cos(arg), np.sin(arg)
    return np.column_stack([e * co, -x * A * e * co, -2 * np.pi * x * A * e * si, -A * e * si, np.ones_like(x)])


def _dcos_inits(xs, ys):
    n = len(xs)
    grid = np.linspace(xs[0], xs[-1], n)
    yu = np.interp(grid, xs, ys)
    c0 = float(np.mean(yu[n // 2:]))
    z = yu - c0
    spec = np.fft.rfft(z)
    freqs = np.fft.rfftfreq(n, d=grid[1] - grid[0])
    k = 1 + int(np.argmax(np.abs(spec[1:])))
    f0 = float(freqs[k])
    ph0 = float(np.angle(spec[k]) - 2 * np.pi * f0 * grid[0])
    a0 = float(np.max(np.abs(z)))
    span = float(grid[-1] - grid[0])
    return [np.array([a0, d, f0, ph0, c0]) for d in (1.0 / span, 4.0 / span, 16.0 / span)]


def fit_damped_cosine(xs, ys, weights=None, options: LMOptions = LMOptions()) -> FitResult:
    """Fit A exp(-decay x) cos(2 pi frequency x + phase) + offset.

    ``frequency`` is in cycles per x unit (GHz for x in ns).  The initial
    frequency is the largest non-DC peak of the discrete spectrum; three
    fixed initial decay constants are tried and the lowest residual kept.
    """
    xs, ys = _check(xs, ys, 8)
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    w = _resolve_weights(weights, ys)
    best = None
    for p0 in _dcos_inits(xs, ys):
        res = levenberg_marquardt(dcos_model, dcos_jac, xs, ys, p0, w, DCOS_NAMES, options, "damped_cosine")
        if best is None or (res.converged, -res.residual_norm) > (best.converged, -best.residual_norm):
            best = res
    p = dict(best.params)
    # canonical form: positive amplitude and frequency, phase in (-pi, pi]
    if p["frequency"] < 0:
        p["frequency"], p["phase"] = -p["frequency"], -p["phase"]
    if p["amplitude"] < 0:
        p["amplitude"], p["phase"] = -p["amplitude"], p["phase"] + math.pi
    p["phase"] = math.atan2(math.sin(p["phase"]), math.cos(p["phase"]))
    return FitResult(best.model, p, best.sigmas, best.residual_norm, best.converged, best.n_iter,
                     best.initial_residual_norm, message=best.message)


# sinusoid in the phase sum: mean + A cos(Phi + phase)

SIN_NAMES = ("mean", "amplitude", "phase")


def sin_model(x, p):
    m, A, ph = p
    return m + A * np.cos(x + ph)


def sin_jac(x, p):
    m, A, ph = p
    return np.column_stack([np.ones_like(x), np.cos(x + ph), -A * np.sin(x + ph)])


def fit_sinusoid(phis, areas, weights=None, options: LMOptions = LMOptions()) -> FitResult:
    """Fit mean + amplitude cos(Phi + phase) with period 2 pi; reports visibility = amplitude / mean."""
    xs, ys = _check(phis, areas, 5)
    if np.ptp(xs) <= math.pi:
        raise FitError("phase points must span more than pi")
    w = _resolve_weights(weights, ys)
    # the model is linear in (mean, A cos phase, -A sin phase): solve that for the start point
    X = np.column_stack([np.ones_like(xs), np.cos(xs), np.sin(xs)])
    sw = np.ones_like(ys) if w is None else np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], ys * sw, rcond=None)
    m0, cc, ss = coef
    a0 = math.hypot(cc, ss)
    ph0 = math.atan2(-ss, cc)
    if a0 == 0:
        a0 = 1e-12 * max(abs(m0), 1.0)
    res = levenberg_marquardt(sin_model, sin_jac, xs, ys, np.array([m0, a0, ph0]), w, SIN_NAMES,
                              options, "sinusoid")
    p = dict(res.params)
    if p["amplitude"] < 0:
        p["amplitude"], p["phase"] = -p["amplitude"], p["phase"] + math.pi
    p["phase"] = math.atan2(math.sin(p["phase"]), math.cos(p["phase"]))
    derived = {}
    if p["mean"] != 0:
        derived["visibility"] = p["amplitude"] / p["mean"]
        if res.sigmas is not None:
            derived["visibility_sigma"] = abs(derived["visibility"]) * math.hypot(
                res.sigmas["amplitude"] / p["amplitude"] if p["amplitude"] else 0.0,
                res.sigmas["mean"] / p["mean"])
    return FitResult(res.model, p, res.sigmas, res.residual_norm, res.converged, res.n_iter,
                     res.initial_residual_norm, derived, res.message)


# detected pair rate versus cavity detuning: eta^2 * (s R_c / 4)(delta_c)

def rate_model_factory(params_known: SystemParams, delta_c_list):
    curve = np.asarray(physpar.pair_rate_curve(params_known, list(delta_c_list)), dtype=float)

    def model(x, p):
        return p[0] ** 2 * curve

    def jac(x, p):
        return (2 * p[0] * curve)[:, None]

    return model, jac, curve


def fit_rate_vs_detuning(delta_c_list, rates, params_known: SystemParams, weights=None,
                         options: LMOptions = LMOptions()) -> FitResult:
    """Fit the overall detection efficiency eta to detected pair rates (pairs/s)."""
    xs, ys = _check(delta_c_list, rates, 5)
    model, jac, curve = rate_model_factory(params_known, xs.tolist())
    w = _resolve_weights(weights, ys)
    sw2 = np.ones_like(ys) if w is None else w
    # closed-form optimum in eta^2, used as the start point
    denom = float(np.sum(sw2 * curve * curve))
    if denom <= 0:
        raise FitError("model curve vanishes at every detuning")
    eta2 = float(np.sum(sw2 * curve * ys)) / denom
    if eta2 <= 0:
        r = np.sqrt(sw2) * ys
        return FitResult("rate_vs_detuning", {"eta": 0.0}, {"eta": 0.0} if not np.any(ys) else None,
                         float(np.linalg.norm(r)), True, 0, float(np.linalg.norm(r)),
                         message="non-positive projection; eta pinned at 0")
    return levenberg_marquardt(model, jac, xs, ys, np.array([math.sqrt(eta2)]), w, ("eta",), options,
                               "rate_vs_detuning")


def _with_derived(res: FitResult, derived: dict) -> FitResult:
    return FitResult(res.model, res.params, res.sigmas, res.residual_norm, res.converged, res.n_iter,
                     res.initial_residual_norm, derived, res.message)


MODELS = {
    "exponential": (exp_model, exp_jac, EXP_NAMES),
    "damped_cosine": (dcos_model, dcos_jac, DCOS_NAMES),
    "sinusoid": (sin_model, sin_jac, SIN_NAMES),
}
