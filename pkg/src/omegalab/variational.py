"""Linearized flow along trajectories: tangent frames, Lyapunov and Floquet exponents.

Tangent vectors are advanced together with the base state by the same ETDRK4
rule (see :meth:`Stepper.step_joint`), so a frame sees exactly the derivative of
the discrete map.  Reorthonormalization uses the discrete L^2 inner product.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import trapezoid

from .errors import FrameCollapseError, InsufficientHorizonError, NotHomogeneousError
from .forcing import ForcingField
from .spectral import (GridFunction, SolverConfig, Stepper, Trajectory, evolve, from_hat, to_hat,
                       wavenumbers)

TWO_PI = 2.0 * np.pi
GAP_TOL = 0.1
TRANSIENT_FRAC = 0.1
MIN_QR_CYCLES = 100


@dataclass
class LinearCoefficients:
    """v_t = v_xx + a(x) v_x + b(x) v along a state at time t."""

    a: GridFunction
    b: GridFunction
    t: float


def linearize(fld: ForcingField, u: GridFunction, t: float) -> LinearCoefficients:
    fu, fp = fld.partials(t, u.values, u.dx.values)
    N = u.N
    return LinearCoefficients(GridFunction(np.broadcast_to(fp, (N,))),
                              GridFunction(np.broadcast_to(fu, (N,))), float(t))


# ---------------------------------------------------------------------------
# inner products on rfft coefficients


def _parseval_weights(N: int) -> np.ndarray:
    K = N // 2 + 1
    w = np.full(K, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return np.sqrt(w * TWO_PI) / N


def _to_real(W: np.ndarray, N: int) -> np.ndarray:
    s = _parseval_weights(N)
    return np.concatenate([W.real * s, W.imag * s], axis=-1)


def _from_real(R: np.ndarray, N: int) -> np.ndarray:
    s = _parseval_weights(N)
    K = s.size
    return (R[..., :K] + 1j * R[..., K:]) / s


def gram_hat(W: np.ndarray, N: int) -> np.ndarray:
    R = _to_real(W, N)
    return R @ R.T


def qr_hat(W: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalize rows of W in the L^2(S^1) inner product; returns (Q rows, |diag R|)."""
    R = _to_real(W, N)
    q, r = np.linalg.qr(R.T)
    d = np.diag(r)
    sgn = np.where(d < 0, -1.0, 1.0)
    q = q * sgn
    return _from_real(q.T, N), np.abs(d)


@dataclass
class TangentFrame:
    """m tangent directions (rfft coefficients) with accumulated log growth since ``t_ref``."""

    hat: np.ndarray
    t: float
    log_growth: np.ndarray
    t_ref: float
    history_t: list = dc_field(default_factory=list)
    history_log: list = dc_field(default_factory=list)

    @property
    def m(self) -> int:
        return self.hat.shape[0]

    @property
    def N(self) -> int:
        return 2 * (self.hat.shape[1] - 1)

    @property
    def vectors(self) -> list[GridFunction]:
        return [GridFunction(r) for r in from_hat(self.hat, self.N)]

    def gram(self) -> np.ndarray:
        return gram_hat(self.hat, self.N)

    def gram_deviation(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.m))))

    def reset_growth(self):
        self.log_growth = np.zeros(self.m)
        self.t_ref = self.t
        self.history_t = [self.t]
        self.history_log = [self.log_growth.copy()]

    @classmethod
    def from_vectors(cls, vectors, t: float = 0.0, orthonormalize: bool = True) -> "TangentFrame":
        rows = np.array([v.values if isinstance(v, GridFunction) else v for v in vectors], float)
        N = rows.shape[1]
        W = to_hat(rows)
        W[:, -1] = 0.0
        if orthonormalize:
            W, _ = qr_hat(W, N)
        fr = cls(W, float(t), np.zeros(len(rows)), float(t))
        fr.reset_growth()
        return fr

    @classmethod
    def random(cls, m: int, N: int, t: float = 0.0, seed: int = 0) -> "TangentFrame":
        rng = np.random.default_rng(seed)
        k = wavenumbers(N)
        K = k.size
        # smooth random directions so early steps are not dominated by grid-scale modes
        W = (rng.standard_normal((m, K)) + 1j * rng.standard_normal((m, K))) / (1.0 + k) ** 2
        W[:, 0] = W[:, 0].real
        W[:, -1] = 0.0
        W *= N
        return cls.from_vectors(from_hat(W, N), t)

    def exponents(self) -> np.ndarray:
        span = self.t - self.t_ref
        return self.log_growth / span if span > 0 else np.full(self.m, np.nan)


def _sample_index(traj: Trajectory, t: float) -> int:
    j = int(np.argmin(np.abs(traj.times - t)))
    if abs(traj.times[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a stored sample of the trajectory")
    return j


def _reorthonormalize(frame: TangentFrame, W: np.ndarray, t: float, record: bool):
    N = frame.N
    Q, d = qr_hat(W, N)
    if np.any(~np.isfinite(d)) or np.any(d < 1e-300):
        raise FrameCollapseError(f"tangent frame collapsed at t={t:.6g}")
    frame.log_growth = frame.log_growth + np.log(d)
    frame.hat = Q
    frame.t = t
    if record:
        frame.history_t.append(t)
        frame.history_log.append(frame.log_growth.copy())


def evolve_tangent(traj: Trajectory, frame: TangentFrame, qr_interval: int | None = None,
                   t_end: float | None = None, record: bool = True) -> TangentFrame:
    """Advance ``frame`` along ``traj`` from frame.t to t_end (default: end of traj).

    The base state is re-synchronized to the stored sample at every sample time.
    The frame is modified in place and returned.
    """
    qr_interval = qr_interval or traj.config.qr_interval
    dt = traj.step_dt
    t_end = traj.t_end if t_end is None else t_end
    n_total = int(round((t_end - frame.t) / dt))
    if n_total <= 0:
        return frame
    st = Stepper(traj.field, traj.config, dt=dt)
    t0 = frame.t
    W = frame.hat
    if st.fast:
        done = 0
        block = max(qr_interval, (8192 // qr_interval) * qr_interval)
        while done < n_total:
            n = min(block, n_total - done)
            G = st.linear_multipliers(t0 + done * dt, n)
            for s in range(0, n, qr_interval):
                e = min(s + qr_interval, n)
                W = W * np.prod(G[s:e], axis=0)
                _reorthonormalize(frame, W, t0 + (done + e) * dt, record)
                W = frame.hat
            done += n
        return frame

    j = _sample_index(traj, t0)
    v = to_hat(traj.states[j])[None, :]
    v[:, -1] = 0.0
    since_qr = 0
    for s in range(n_total):
        t = t0 + s * dt
        v, W = st.step_joint(v, W, t)
        since_qr += 1
        t_new = t0 + (s + 1) * dt
        if j + 1 < len(traj) and abs(t_new - traj.times[j + 1]) < 1e-6 * dt:
            j += 1
            v = to_hat(traj.states[j])[None, :]
            v[:, -1] = 0.0
        if since_qr == qr_interval or s == n_total - 1:
            _reorthonormalize(frame, W, t_new, record)
            W = frame.hat
            since_qr = 0
    return frame


@dataclass
class SpectrumEstimate:
    exponents: np.ndarray
    horizon: float
    gap_tol: float
    dim_u: int
    dim_c: int
    N_u: int
    intervals: np.ndarray
    transient: float = 0.0
    history_t: np.ndarray | None = None
    history_exponents: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.exponents)

    def to_dict(self) -> dict:
        return {
            "exponents": [float(x) for x in self.exponents],
            "horizon": float(self.horizon),
            "gap_tol": float(self.gap_tol),
            "dim_u": int(self.dim_u),
            "dim_c": int(self.dim_c),
            "N_u": int(self.N_u),
            "intervals": [[float(a), float(b)] for a, b in self.intervals],
        }


def dimension_counts(exponents, gap_tol: float = GAP_TOL) -> tuple[int, int, int]:
    ex = np.asarray(exponents)
    dim_u = int(np.sum(ex > gap_tol))
    dim_c = int(np.sum(np.abs(ex) <= gap_tol))
    N_u = dim_u if dim_u % 2 == 0 else dim_u + 1
    return dim_u, dim_c, N_u


def lyapunov_spectrum(traj: Trajectory, m: int, horizon: float | None = None,
                      gap_tol: float = GAP_TOL, transient_frac: float = TRANSIENT_FRAC,
                      qr_interval: int | None = None, seed: int = 0,
                      n_windows: int = 16) -> SpectrumEstimate:
    """Finite-time Lyapunov exponents of the linearized flow along traj.

    The first ``transient_frac * horizon`` is used only to align the frame; the
    exponents are the average growth rates over the remaining time.
    """
    horizon = traj.duration if horizon is None else float(horizon)
    if horizon > traj.duration * (1 + 1e-12) + 1e-9:
        raise ValueError("horizon exceeds trajectory duration")
    if m > traj.N // 4:
        raise ValueError("m must not exceed N/4")
    qr_interval = qr_interval or traj.config.qr_interval
    dt = traj.step_dt
    cycles = horizon / (qr_interval * dt)
    if cycles < MIN_QR_CYCLES:
        raise InsufficientHorizonError(
            f"insufficient horizon: {cycles:.0f} reorthonormalization cycles < {MIN_QR_CYCLES}")
    t0 = traj.t0
    transient = transient_frac * horizon
    t_tr = t0 + qr_interval * dt * np.round(transient / (qr_interval * dt))
    if not traj.field.state_independent_rate:
        # keep the restart on a stored sample so the base can be re-synchronized
        t_tr = float(traj.times[int(np.argmin(np.abs(traj.times - t_tr)))])
    frame = TangentFrame.random(m, traj.N, t0, seed)
    if t_tr > t0:
        evolve_tangent(traj, frame, qr_interval, t_end=t_tr, record=False)
    frame.reset_growth()
    evolve_tangent(traj, frame, qr_interval, t_end=t0 + horizon, record=True)
    ex = frame.exponents()

    ht = np.array(frame.history_t)
    hl = np.array(frame.history_log)
    half = frame.t_ref + 0.5 * (frame.t - frame.t_ref)
    edges = np.linspace(half, frame.t, n_windows + 1)
    idx = np.unique(np.searchsorted(ht, edges).clip(0, len(ht) - 1))
    if idx.size >= 2:
        rates = np.diff(hl[idx], axis=0) / np.diff(ht[idx])[:, None]
        lo, hi = rates.min(axis=0), rates.max(axis=0)
    else:
        lo = hi = ex
    order = np.argsort(-ex, kind="stable")
    ex = ex[order]
    intervals = np.stack([lo[order], hi[order]], axis=1)
    dim_u, dim_c, N_u = dimension_counts(ex, gap_tol)
    running = (hl[1:] / (ht[1:] - frame.t_ref)[:, None])[:, order] if len(ht) > 1 else None
    return SpectrumEstimate(ex, horizon, gap_tol, dim_u, dim_c, N_u, intervals, t_tr - t0,
                            ht[1:] if len(ht) > 1 else None, running)


# ---------------------------------------------------------------------------
# Floquet modes along orbits with spatially constant coefficients


@dataclass
class FloquetMode:
    k: int
    parity: str
    exponent: float
    drift: np.ndarray
    drift_times: np.ndarray

    @property
    def drift_max(self) -> float:
        return float(np.max(np.abs(self.drift))) if self.drift.size else 0.0


def _coefficient_series(fld: ForcingField, traj: Trajectory):
    us = traj.states
    uxs = traj.derivatives()
    a = np.empty(len(traj))
    b = np.empty(len(traj))
    spread = 0.0
    for i, t in enumerate(traj.times):
        fu, fp = fld.partials(t, us[i], uxs[i])
        fu = np.broadcast_to(fu, us[i].shape)
        fp = np.broadcast_to(fp, us[i].shape)
        spread = max(spread, float(np.ptp(fu)), float(np.ptp(fp)))
        a[i] = float(np.mean(fp))
        b[i] = float(np.mean(fu))
    return a, b, spread


def floquet_homogeneous(fld: ForcingField, traj: Trajectory, k_max: int, horizon: float | None = None,
                        t_start: float | None = None, tol: float = 1e-8) -> list[FloquetMode]:
    """sin/cos Floquet modes for an orbit along which the linear coefficients are x-independent.

    Exponent of wavenumber k is -k^2 + mean(b) over [t_start, t_start + horizon].
    """
    t_start = traj.t0 if t_start is None else t_start
    horizon = (traj.t_end - t_start) if horizon is None else horizon
    win = traj.window(t_start, t_start + horizon)
    a, b, spread = _coefficient_series(fld, win)
    max_ux = float(np.max(np.abs(win.derivatives())))
    if spread >= tol and max_ux >= tol:
        raise NotHomogeneousError(
            f"linear coefficients vary in x (spread {spread:.2e}); orbit is not homogeneous")
    if fld.state_independent_rate:
        s, = fld.signals
        mean_b = (s.integral(t_start + horizon) - s.integral(t_start)) / horizon - fld.lam
    else:
        mean_b = float(trapezoid(b, win.times) / (win.times[-1] - win.times[0]))
    drift = np.concatenate([[0.0], np.cumsum(-0.5 * (a[1:] + a[:-1]) * np.diff(win.times))])
    modes = [FloquetMode(0, "cos", float(mean_b), drift, win.times)]
    for k in range(1, k_max + 1):
        for par in ("sin", "cos"):
            modes.append(FloquetMode(k, par, float(-k * k + mean_b), drift, win.times))
    return modes


def floquet_vs_frame_crosscheck(traj: Trajectory, k_max: int = 2, horizon: float | None = None,
                                spectrum: SpectrumEstimate | None = None, **kw) -> dict:
    """Compare Floquet exponents with QR frame exponents over the same averaging window."""
    m = 2 * k_max + 1
    if spectrum is None:
        spectrum = lyapunov_spectrum(traj, m, horizon, **kw)
    horizon = spectrum.horizon
    t_start = traj.t0 + spectrum.transient
    modes = floquet_homogeneous(traj.field, traj, k_max, horizon - spectrum.transient, t_start)
    fl = np.sort([md.exponent for md in modes])[::-1][: spectrum.m]
    fr = np.asarray(spectrum.exponents)[: fl.size]
    disc = float(np.max(np.abs(fl - fr)))
    return {
        "floquet": [float(x) for x in fl],
        "frame": [float(x) for x in fr],
        "discrepancy": disc,
        "drift_max": max(md.drift_max for md in modes),
        "horizon": float(horizon),
    }


# ---------------------------------------------------------------------------


def tangent_flow(u0: GridFunction, v0: GridFunction, fld: ForcingField, t_end: float,
                 config: SolverConfig, sample_stride: int = 1, t0: float = 0.0):
    """Base and tangent solutions from (u0, v0) without renormalization; grid values (S, N) each."""
    n = max(1, int(np.ceil(t_end / config.dt - 1e-9)))
    h = t_end / n
    st = Stepper(fld, config, dt=h)
    v = to_hat(u0.values)[None, :]
    W = to_hat(v0.values)[None, :]
    if not st.fast:
        v[:, -1] = 0.0
        W[:, -1] = 0.0
    us, ws, ts = [from_hat(v[0], u0.N)], [from_hat(W[0], u0.N)], [t0]
    for i in range(n):
        v, W = st.step_joint(v, W, t0 + i * h)
        if (i + 1) % sample_stride == 0 or i + 1 == n:
            us.append(from_hat(v[0], u0.N))
            ws.append(from_hat(W[0], u0.N))
            ts.append(t0 + (i + 1) * h)
    return np.array(ts), np.array(us), np.array(ws)


def linearization_consistency(fld: ForcingField, u0: GridFunction, v: GridFunction,
                              config: SolverConfig, t_end: float = 1.0,
                              eps=(1e-3, 1e-4, 1e-5), min_slope: float = 0.9,
                              roundoff: float = 1e-12) -> dict:
    """Observed order of ||phi(u+eps v) - phi(u) - eps Psi v|| / eps in eps.

    For fields that are linear in u the residual is pure roundoff and no slope is
    observable; such cases pass when every absolute residual stays below
    ``roundoff`` times the size of the solution and tangent.
    """
    ts, base, tang = tangent_flow(u0, v, fld, t_end, config, sample_stride=1)
    stride = max(1, len(ts) // 20)
    ratios = []
    for e in eps:
        tr = evolve(u0 + e * v, fld, t_end, config, sample_stride=1)
        d = tr.states - base - e * tang
        ratios.append(float(np.max(np.abs(d[::stride]))) / e)
    ratios = np.array(ratios)
    scale = max(1.0, float(np.max(np.abs(tang))), float(np.max(np.abs(base))))
    if np.all(ratios * np.asarray(eps) <= roundoff * scale):
        slope, linear = float("nan"), True
        passed = True
    else:
        slope = float(np.polyfit(np.log(eps), np.log(np.maximum(ratios, 1e-300)), 1)[0])
        linear = False
        passed = slope >= min_slope
    return {"eps": list(map(float, eps)), "ratios": ratios.tolist(), "slope": slope,
            "linear_regime": linear, "passed": bool(passed)}
