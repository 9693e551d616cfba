"""Quantum-jump trajectories of a driven two-level atom in a single-mode cavity.

Hamiltonian in the frame rotating at the drive frequency::

    H = -delta_a s+s- - delta_c a+a + g (a+ s- + a s+) + (omega/2)(s+ + s-)

with collapse operators sqrt(2 kappa) a (cavity emission) and sqrt(2 gamma) s-
(free-space emission).  Inputs are ordinary frequencies in MHz; internally
everything is angular, in rad/ns, and time is in ns.  Jump rates handed back
to callers are physical rates in events/s.

Between jumps the unnormalised state evolves under the time-independent
effective Hamiltonian H - (i/2) sum_k L_k+ L_k.  The default propagator
diagonalises it once per model, which makes the evolution exact; an adaptive
RK45 route is kept for cross-checks and for defective effective Hamiltonians.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import expm_multiply

from .physpar import SystemParams
from .ttag import ClickStream

TWO_PI_PER_NS = 2 * math.pi * 1e-3  # MHz (omega/2pi) -> rad/ns
PS_PER_NS = 1000
ORACLE_MAX_DIM = 64


class Channel(IntEnum):
    CAVITY_EMISSION = 0
    FREE_SPACE = 1


CHANNEL_LABELS = {int(Channel.CAVITY_EMISSION): "CavityEmission", int(Channel.FREE_SPACE): "FreeSpace"}


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time_ns: float, trajectory: int | None = None):
        self.time_ns = time_ns
        self.trajectory = trajectory
        where = f" (trajectory {trajectory})" if trajectory is not None else ""
        super().__init__(f"{message} at t = {time_ns:.6g} ns{where}")


class DegenerateSteadyState(RuntimeError):
    pass


@dataclass(frozen=True)
class JumpChannel:
    label: Channel
    operator: np.ndarray
    rate: float  # prefactor, sqrt(rad/ns)

    @property
    def collapse(self) -> np.ndarray:
        return self.rate * self.operator


@dataclass(frozen=True, eq=False)
class Model:
    params: SystemParams
    n_max: int
    hamiltonian: np.ndarray
    jump_channels: tuple[JumpChannel, ...]
    a: np.ndarray
    sm: np.ndarray

    @property
    def dimension(self) -> int:
        return self.hamiltonian.shape[0]

    def basis_index(self, excited: bool, n: int) -> int:
        return int(excited) * (self.n_max + 1) + n

    @property
    def ground_state(self) -> np.ndarray:
        psi = np.zeros(self.dimension, complex)
        psi[0] = 1.0
        return psi

    @property
    def top_fock_projector_diag(self) -> np.ndarray:
        d = np.zeros(self.dimension)
        d[self.basis_index(False, self.n_max)] = 1
        d[self.basis_index(True, self.n_max)] = 1
        return d

    def effective_hamiltonian(self) -> np.ndarray:
        heff = self.hamiltonian.astype(complex)
        for ch in self.jump_channels:
            c = ch.collapse
            heff = heff - 0.5j * (c.conj().T @ c)
        return heff

    def hermiticity_defect(self) -> float:
        h = self.hamiltonian
        scale = max(np.abs(h).max(), 1e-300)
        return float(np.abs(h - h.conj().T).max() / scale)


def build_model(params: SystemParams, n_max: int = 2) -> Model:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    w = TWO_PI_PER_NS
    g, kappa, gamma = params.g * w, params.kappa * w, params.gamma * w
    da, dc, om = params.delta_a * w, params.delta_c * w, params.omega * w
    nc = n_max + 1
    a_c = np.diag(np.sqrt(np.arange(1, nc, dtype=float)), 1)
    sm_a = np.array([[0.0, 1.0], [0.0, 0.0]])  # atom basis (|g>, |e>)
    a = np.kron(np.eye(2), a_c)
    sm = np.kron(sm_a, np.eye(nc))
    ad, sp = a.T, sm.T
    h = (-da * sp @ sm - dc * ad @ a + g * (ad @ sm + a @ sp) + 0.5 * om * (sp + sm)).astype(complex)
    channels = (
        JumpChannel(Channel.CAVITY_EMISSION, a, math.sqrt(2 * kappa)),
        JumpChannel(Channel.FREE_SPACE, sm, math.sqrt(2 * gamma)),
    )
    return Model(params, n_max, h, channels, a, sm)


class JumpRecord(NamedTuple):
    time_ps: int
    channel: Channel
    trajectory_id: int


@dataclass
class _TrajectoryOutput:
    times_ps: np.ndarray
    channels: np.ndarray
    top_occupancy: float
    mean_photons: float


class _ExactPropagator:
    """psi(t) = V exp(-i lam t) V^-1 psi0 for the fixed effective Hamiltonian."""

    def __init__(self, model: Model):
        heff = model.effective_hamiltonian()
        lam, v = np.linalg.eig(heff)
        cond = np.linalg.cond(v)
        if not np.isfinite(cond) or cond > 1e10:
            raise IntegrationError("effective Hamiltonian is numerically defective; "
                                   "use integrator='rk45'", 0.0)
        self.lam = lam
        self.v = v
        self.vinv = np.linalg.inv(v)
        self.gram = (v.conj().T @ v)
        # exponents of the norm: conj(lam_j) - lam_k, times i
        self.mu = (1j * (lam.conj()[:, None] - lam[None, :])).ravel()

    def prepare(self, psi: np.ndarray):
        b = self.vinv @ psi
        coeff = (b.conj()[:, None] * b[None, :] * self.gram).ravel()
        return b, coeff

    def norm2(self, coeff, t: float) -> float:
        return float(np.real(np.dot(coeff, np.exp(self.mu * t))))

    def state(self, b, t) -> np.ndarray:
        return self.v @ (b * np.exp(-1j * self.lam * t))

    def states(self, b, ts: np.ndarray) -> np.ndarray:
        return self.v @ (b[:, None] * np.exp(-1j * np.outer(self.lam, ts)))


def _choose_jump(model: Model, psi: np.ndarray, rng: np.random.Generator):
    cands = [ch.collapse @ psi for ch in model.jump_channels]
    weights = np.array([np.vdot(c, c).real for c in cands])
    total = weights.sum()
    k = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
    k = min(k, len(cands) - 1)
    new = cands[k] / math.sqrt(weights[k])
    return model.jump_channels[k].label, new


def _simulate_exact(model: Model, duration_ns: float, rng, sample_dt_ns: float | None) -> _TrajectoryOutput:
    prop = _ExactPropagator(model)
    top = model.top_fock_projector_diag.astype(bool)
    ad_a = np.real(np.diag(model.a.T @ model.a))
    psi = model.ground_state
    t = 0.0
    times, chans = [], []
    occ_sum = photon_sum = 0.0
    n_samples = 0
    next_sample = 0.0

    def sample(b, t0, t1):
        nonlocal occ_sum, photon_sum, n_samples, next_sample
        if sample_dt_ns is None or next_sample > t1:
            return
        ts = np.arange(next_sample, t1, sample_dt_ns)
        if not len(ts):
            return
        next_sample = ts[-1] + sample_dt_ns
        states = prop.states(b, ts - t0)
        p = np.abs(states) ** 2
        norm = p.sum(axis=0)
        occ_sum += float((p[top].sum(axis=0) / norm).sum())
        photon_sum += float((ad_a @ p / norm).sum())
        n_samples += len(ts)

    while t < duration_ns:
        b, coeff = prop.prepare(psi)
        r = rng.random()
        remaining = duration_ns - t
        if prop.norm2(coeff, remaining) > r:
            sample(b, t, duration_ns)
            break
        hi = min(1.0, remaining)
        while prop.norm2(coeff, hi) > r:
            hi = min(hi * 2, remaining)
        lo = 0.0 if hi <= 1.0 else hi / 2
        try:
            tj = brentq(lambda x: prop.norm2(coeff, x) - r, lo, hi, xtol=1e-4, rtol=1e-12)
        except ValueError as exc:  # bracket lost to round-off
            raise IntegrationError(f"jump time search failed ({exc})", t) from None
        sample(b, t, t + tj)
        psi_t = prop.state(b, tj)
        psi_t /= np.linalg.norm(psi_t)
        label, psi = _choose_jump(model, psi_t, rng)
        t += tj
        if t >= duration_ns:
            break
        times.append(int(round(t * PS_PER_NS)))
        chans.append(int(label))
    occ = occ_sum / n_samples if n_samples else float("nan")
    nph = photon_sum / n_samples if n_samples else float("nan")
    return _TrajectoryOutput(np.array(times, np.int64), np.array(chans, np.uint16), occ, nph)


def _simulate_rk45(model: Model, duration_ns: float, rng, rtol: float = 1e-8) -> _TrajectoryOutput:
    heff = model.effective_hamiltonian()
    psi = model.ground_state
    t = 0.0
    times, chans = [], []

    def rhs(_, y):
        return -1j * (heff @ y)

    while t < duration_ns:
        r = rng.random()

        def event(_, y, r=r):
            return np.vdot(y, y).real - r
        event.terminal = True
        event.direction = -1
        sol = solve_ivp(rhs, (0.0, duration_ns - t), psi, method="RK45", rtol=rtol,
                        atol=rtol * 1e-2, events=event)
        if sol.status == -1:
            raise IntegrationError(f"step size underflow: {sol.message}", t + float(sol.t[-1]))
        if sol.status == 0 or not len(sol.t_events[0]):
            break
        tj = float(sol.t_events[0][0])
        psi_t = sol.y_events[0][0]
        psi_t = psi_t / np.linalg.norm(psi_t)
        label, psi = _choose_jump(model, psi_t, rng)
        t += tj
        if t >= duration_ns:
            break
        times.append(int(round(t * PS_PER_NS)))
        chans.append(int(label))
    return _TrajectoryOutput(np.array(times, np.int64), np.array(chans, np.uint16),
                             float("nan"), float("nan"))


def _trajectory_rng(seed: int, trajectory_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), int(trajectory_id)])


def _simulate(model, duration_ns, seed, trajectory_id, integrator, sample_dt_ns):
    if duration_ns <= 0:
        raise ValueError("duration must be positive")
    rng = _trajectory_rng(seed, trajectory_id)
    try:
        if integrator == "exact":
            return _simulate_exact(model, duration_ns, rng, sample_dt_ns)
        if integrator == "rk45":
            return _simulate_rk45(model, duration_ns, rng)
    except IntegrationError as exc:
        raise IntegrationError(str(exc).split(" at t =")[0], exc.time_ns, trajectory_id) from None
    raise ValueError(f"unknown integrator {integrator!r}")


def run_trajectory(model: Model, duration_ns: float, seed: int, *, trajectory_id: int = 0,
                   integrator: str = "exact") -> list[JumpRecord]:
    out = _simulate(model, duration_ns, seed, trajectory_id, integrator, None)
    return [JumpRecord(int(t), Channel(int(c)), trajectory_id)
            for t, c in zip(out.times_ps.tolist(), out.channels.tolist())]


@dataclass
class EnsembleResult:
    times_ps: np.ndarray
    channels: np.ndarray
    trajectory_ids: np.ndarray
    n_traj: int
    duration_ns: float
    counts: np.ndarray  # (n_traj, n_channels)
    top_fock_occupancy: float
    mean_photon_number: float
    rates: dict = field(default_factory=dict)
    rate_errors: dict = field(default_factory=dict)

    def records(self) -> list[JumpRecord]:
        return [JumpRecord(int(t), Channel(int(c)), int(i)) for t, c, i in
                zip(self.times_ps.tolist(), self.channels.tolist(), self.trajectory_ids.tolist())]

    def summary(self) -> dict:
        return {
            "n_traj": self.n_traj,
            "duration_ns": self.duration_ns,
            "rates_per_s": {CHANNEL_LABELS[k]: v for k, v in self.rates.items()},
            "rate_std_errors_per_s": {CHANNEL_LABELS[k]: v for k, v in self.rate_errors.items()},
            "clicks": {CHANNEL_LABELS[k]: int(self.counts[:, k].sum()) for k in self.rates},
            "top_fock_occupancy": self.top_fock_occupancy,
            "mean_photon_number": self.mean_photon_number,
        }

    def stream(self, channel: int | None = None, *, concatenate: bool = True,
               gap_ns: float = 1000.0) -> ClickStream:
        """Click stream of one channel (or all).

        With ``concatenate`` trajectory i is shifted by i*(duration+gap) so the
        ensemble reads as one long record of a single atom; without it all
        trajectories share the same time axis (n independent emitters).
        """
        m = np.ones(len(self.times_ps), bool) if channel is None else self.channels == channel
        ts = self.times_ps[m]
        ids = self.trajectory_ids[m]
        dur_ps = int(round(self.duration_ns * PS_PER_NS))
        if concatenate:
            stride = dur_ps + int(round(gap_ns * PS_PER_NS))
            ts = ts + ids.astype(np.int64) * stride
            total = stride * (self.n_traj - 1) + dur_ps
        else:
            total = dur_ps
        labels = {c: CHANNEL_LABELS[c] for c in ([channel] if channel is not None else CHANNEL_LABELS)}
        return ClickStream.from_unsorted(ts, self.channels[m], duration_ps=total,
                                         channel_labels=labels, origin="mcwf")


def _ensemble_worker(args):
    model, duration_ns, base_seed, i, integrator, sample_dt = args
    return _simulate(model, duration_ns, base_seed, i, integrator, sample_dt)


def run_ensemble(model: Model, n_traj: int, duration_ns: float, base_seed: int, *,
                 integrator: str = "exact", n_jobs: int = 1,
                 sample_dt_ns: float | None = 2.0) -> EnsembleResult:
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    jobs = [(model, duration_ns, base_seed, i, integrator, sample_dt_ns) for i in range(n_traj)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            outs = list(ex.map(_ensemble_worker, jobs))
    else:
        outs = [_ensemble_worker(j) for j in jobs]
    n_ch = len(Channel)
    counts = np.zeros((n_traj, n_ch), np.int64)
    for i, o in enumerate(outs):
        counts[i] = np.bincount(o.channels, minlength=n_ch)[:n_ch]
    ts = np.concatenate([o.times_ps for o in outs]) if outs else np.zeros(0, np.int64)
    ch = np.concatenate([o.channels for o in outs])
    ids = np.concatenate([np.full(len(o.times_ps), i, np.int64) for i, o in enumerate(outs)])
    order = np.lexsort((ch, ids, ts))
    t_s = duration_ns * 1e-9
    rates, errors = {}, {}
    for k in range(n_ch):
        per = counts[:, k] / t_s
        rates[k] = float(per.mean())
        if n_traj > 1:
            errors[k] = float(per.std(ddof=1) / math.sqrt(n_traj))
        else:
            errors[k] = float(math.sqrt(counts[0, k]) / t_s)
    occ = [o.top_occupancy for o in outs if np.isfinite(o.top_occupancy)]
    nph = [o.mean_photons for o in outs if np.isfinite(o.mean_photons)]
    return EnsembleResult(ts[order], ch[order], ids[order], n_traj, duration_ns, counts,
                          float(np.mean(occ)) if occ else float("nan"),
                          float(np.mean(nph)) if nph else float("nan"),
                          rates, errors)


# -- dense reference solutions --------------------------------------------------

def liouvillian(model: Model) -> np.ndarray:
    """Row-major vectorised Lindblad generator: vec(A rho B) = (A kron B^T) vec(rho)."""
    h = model.hamiltonian
    d = model.dimension
    eye = np.eye(d)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for ch in model.jump_channels:
        c = ch.collapse
        cdc = c.conj().T @ c
        lv += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return lv


@dataclass(frozen=True)
class SteadyState:
    rho: np.ndarray
    rho_ee: float
    n_cavity: float
    top_fock_occupancy: float
    rates: dict  # Channel -> events/s


def steady_state_oracle(model: Model) -> SteadyState:
    """Null vector of the dense Liouvillian (deliberately brute force)."""
    d = model.dimension
    if d > ORACLE_MAX_DIM:
        raise ValueError(f"oracle limited to dimension <= {ORACLE_MAX_DIM}")
    lv = liouvillian(model)
    _, sv, vh = np.linalg.svd(lv)
    tol = sv[0] * 1e-11
    null_dim = int(np.sum(sv < tol))
    if null_dim > 1:
        raise DegenerateSteadyState(f"steady state not unique (null space dimension {null_dim})")
    rho = vh[-1].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    ee = np.real(np.trace(model.sm.T @ model.sm @ rho))
    nc = np.real(np.trace(model.a.T @ model.a @ rho))
    top = float(np.real(np.diag(rho)) @ model.top_fock_projector_diag)
    rates = {}
    for ch in model.jump_channels:
        num = ch.operator.conj().T @ ch.operator
        rates[int(ch.label)] = float(ch.rate**2 * np.real(np.trace(num @ rho)) * 1e9)
    return SteadyState(rho, float(ee), float(nc), top, rates)


def cavity_g2_oracle(model: Model, taus_ns: np.ndarray) -> np.ndarray:
    """g2(tau) of the cavity output from the quantum regression theorem (tau >= 0, uniform grid)."""
    taus_ns = np.asarray(taus_ns, float)
    ss = steady_state_oracle(model)
    a, ad = model.a, model.a.T
    nbar = ss.n_cavity
    x0 = (a @ ss.rho @ ad).ravel()
    lv = liouvillian(model)
    if len(taus_ns) > 1:
        steps = np.diff(taus_ns)
        if not np.allclose(steps, steps[0]):
            raise ValueError("tau grid must be uniform")
        xs = expm_multiply(lv, x0, start=taus_ns[0], stop=taus_ns[-1], num=len(taus_ns), endpoint=True)
    else:
        xs = (scipy.linalg.expm(lv * taus_ns[0]) @ x0)[None, :]
    num = ad @ a
    d = model.dimension
    vals = np.array([np.real(np.trace(num @ x.reshape(d, d))) for x in xs])
    return vals / nbar**2
