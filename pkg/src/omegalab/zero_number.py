"""Zero number (lap number) of periodic functions and its evolution along solution pairs.

Zeros are located on the spectral interpolant: sign changes on a 4N refined grid
bracket the roots, which are then polished by Brent's method.  A count is only
"certified" when every zero is simple, i.e. |u_x| clears ``tol_slope`` there.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import brentq

from .errors import NoStableRadiusError, NumericallyZeroError
from .spectral import GridFunction, Stepper, Trajectory, from_hat, refine, to_hat, wavenumbers

TWO_PI = 2.0 * np.pi
REL_TOL_VAL = 1e-9
REL_TOL_SLOPE = 1e-6
COLLAPSE_REL = 1e-10
WITNESS_SUBSTEPS = 16  # partial steps per time step when following an extremum


class Interpolant:
    """Fast point evaluation of a trigonometric interpolant and its first two derivatives."""

    def __init__(self, u: GridFunction):
        N = u.N
        k = wavenumbers(N)
        w = np.full(k.size, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        c = u.coeffs * w
        self.k = k
        self.c0 = c
        self.c1 = 1j * k * c
        self.c1[-1] = 0.0
        self.c2 = -(k ** 2) * c

    def _eval(self, c, x):
        return float(np.real(np.exp(1j * self.k * x) @ c))

    def value(self, x):
        return self._eval(self.c0, x)

    def slope(self, x):
        return self._eval(self.c1, x)

    def curvature(self, x):
        return self._eval(self.c2, x)

    def critical_point(self, x, iters: int = 8, max_move: float = 0.5):
        """Newton on u_x from x; returns None if it wanders or fails to settle."""
        x0 = x
        for _ in range(iters):
            d2 = self.curvature(x)
            if d2 == 0.0:
                return None
            dx = self.slope(x) / d2
            x -= dx
            if abs(x - x0) > max_move:
                return None
            if abs(dx) < 1e-14:
                break
        return float(np.mod(x, TWO_PI))


@dataclass
class ZeroCount:
    count: int
    simple: bool
    locations: list = field(default_factory=list)
    margin: float = float("inf")
    tol_val: float = 0.0
    tol_slope: float = 0.0
    touching: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not np.isfinite(self.margin):
            d["margin"] = None
        return d


def _tolerances(scale, tol_val, tol_slope):
    tv = REL_TOL_VAL * scale if tol_val is None else tol_val
    ts = REL_TOL_SLOPE * scale if tol_slope is None else tol_slope
    return tv, ts


def zero_count(u: GridFunction, tol_val: float | None = None, tol_slope: float | None = None,
               refine_factor: int = 4) -> ZeroCount:
    """Count zeros of u on S^1 and certify whether all of them are simple.

    Tolerances default to 1e-9 and 1e-6 times ``||u||_inf`` (relative).
    """
    M = refine_factor * u.N
    xs = TWO_PI * np.arange(M) / M
    w = refine(u, M)
    scale = float(np.max(np.abs(w)))
    tv, ts = _tolerances(scale, tol_val, tol_slope)
    if scale == 0.0 or scale < tv:
        raise NumericallyZeroError("numerically zero function")
    ip = Interpolant(u)
    h = TWO_PI / M

    roots, touching = [], []
    simple = True
    small = np.abs(w) < tv
    sgn = np.where(small, 0, np.sign(w)).astype(int)

    # roots bracketed by strict sign changes between neighbouring refined points
    nxt = np.roll(sgn, -1)
    for j in np.nonzero(sgn * nxt < 0)[0]:
        a = xs[j]
        b = a + h
        r = brentq(ip.value, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        roots.append(float(np.mod(r, TWO_PI)))

    # runs of numerically-zero refined points
    if small.any():
        if small.all():
            raise NumericallyZeroError("numerically zero function")
        start = int(np.argmin(small))  # a non-small point; walk the circle from there
        j = 0
        while j < M:
            idx = (start + j) % M
            if small[idx]:
                run = []
                while small[(start + j) % M] and j < M:
                    run.append((start + j) % M)
                    j += 1
                left = sgn[(run[0] - 1) % M]
                right = sgn[(run[-1] + 1) % M]
                mid = run[len(run) // 2]
                xm = float(xs[mid])
                if left != right:
                    # genuine crossing through a flat stretch
                    a = xs[(run[0] - 1) % M]
                    b = a + h * (len(run) + 1)
                    try:
                        xm = float(np.mod(brentq(ip.value, a, b, xtol=1e-15), TWO_PI))
                    except ValueError:
                        pass
                    roots.append(xm)
                    if len(run) > 1 or abs(ip.slope(xm)) <= ts:
                        simple = False
                else:
                    touching.append(xm)
                    simple = False
            else:
                j += 1

    # touching zeros between grid points: local minima of |u| that dip below tol_val
    aw = np.abs(w)
    locmin = (aw < np.roll(aw, 1)) & (aw <= np.roll(aw, -1)) & ~small
    for j in np.nonzero(locmin)[0]:
        if aw[j] > 1e3 * tv + 10 * ts * h:
            continue
        xc = ip.critical_point(float(xs[j]), max_move=2 * h)
        if xc is not None and abs(ip.value(xc)) < tv:
            touching.append(xc)
            simple = False

    slopes = [abs(ip.slope(r)) for r in roots]
    if any(s <= ts for s in slopes):
        simple = False
    locs = sorted(set(roots) | set(touching))
    margin = min(slopes) if (simple and slopes) else (float("inf") if simple else 0.0)
    return ZeroCount(len(locs), simple, locs, margin, tv, ts, sorted(touching))


def perturbation_radius(u: GridFunction, safety: float = 0.9, refine_factor: int = 16) -> float:
    """delta > 0 with z(u + v) = z(u) whenever ||v||_C1 < delta.

    Each zero gets a neighbourhood where |u_x| stays above half its value at the
    zero; there u + v is strictly monotone.  Outside those neighbourhoods |u| is
    bounded below, which rules out new zeros.
    """
    zc = zero_count(u)
    if not zc.simple:
        raise NoStableRadiusError("no stable radius: u has a non-simple zero")
    M = refine_factor * u.N
    w = refine(u, M)
    wx = refine(u.dx, M)
    inside = np.zeros(M, dtype=bool)
    slope_min = np.inf
    ip = Interpolant(u)
    for r in zc.locations:
        j = int(np.round(r / (TWO_PI / M))) % M
        s0 = np.sign(wx[j])
        thresh = 0.5 * abs(ip.slope(r))
        lo = j
        while np.sign(wx[(lo - 1) % M]) == s0 and abs(wx[(lo - 1) % M]) >= thresh and (j - lo) < M // 2:
            lo -= 1
        hi = j
        while np.sign(wx[(hi + 1) % M]) == s0 and abs(wx[(hi + 1) % M]) >= thresh and (hi - j) < M // 2:
            hi += 1
        idx = np.arange(lo, hi + 1) % M
        inside[idx] = True
        slope_min = min(slope_min, float(np.min(np.abs(wx[idx]))))
    outside = np.abs(w[~inside])
    value_min = float(np.min(outside)) if outside.size else np.inf
    delta = safety * min(value_min, slope_min)
    if not np.isfinite(delta) or delta <= 0:
        raise NoStableRadiusError("no stable radius")
    return float(delta)


# ---------------------------------------------------------------------------
# lap monitoring


@dataclass
class DropEvent:
    t_lo: float
    t_hi: float
    before: int
    after: int
    witness_t: float | None = None
    witness_x: float | None = None
    witness_value: float | None = None
    witness_slope: float | None = None
    witness_ok: bool = False
    tol_val: float = 0.0
    tol_slope: float = 0.0

    @property
    def t_drop(self):
        return (self.t_lo, self.t_hi)

    @property
    def multiple_zero_witness(self):
        return self.witness_x

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LapReport:
    times: np.ndarray
    counts: np.ndarray          # -1 where no count could be formed (collapsed difference)
    simple: np.ndarray
    indeterminate: np.ndarray
    collapsed: np.ndarray
    drops: list
    violations: list            # certified increases; must stay empty
    uncertified: list           # indeterminate samples with no drop across them

    @property
    def certified_counts(self) -> np.ndarray:
        return self.counts[self.simple & ~self.collapsed]

    @property
    def monotone(self) -> bool:
        return not self.violations

    @property
    def final_count(self) -> int | None:
        good = np.nonzero(self.simple & ~self.collapsed)[0]
        return int(self.counts[good[-1]]) if good.size else None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "count", "simple", "indeterminate"])
            for t, c, s, ind in zip(self.times, self.counts, self.simple, self.indeterminate):
                w.writerow([f"{t:.12e}", int(c), int(s), int(ind)])

    def drops_json(self) -> str:
        return json.dumps([d.to_dict() for d in self.drops], indent=2, sort_keys=True)


def _replay(traj: Trajectory, i_lo: int, n_steps: int) -> np.ndarray:
    """Re-integrate from stored sample i_lo; returns every intermediate step (n_steps+1, K)."""
    st = Stepper(traj.field, traj.config, dt=traj.step_dt)
    v = to_hat(traj.states[i_lo])[None, :]
    out = [v[0]]
    t = float(traj.times[i_lo])
    for s in range(n_steps):
        v = st.step_hat(v, t + s * st.dt)
        out.append(v[0])
    return np.array(out)


def _partial_step(traj: Trajectory, vhat: np.ndarray, t: float, tau: float) -> np.ndarray:
    if tau == 0.0:
        return vhat
    st = Stepper(traj.field, traj.config, dt=tau)
    return st.step_hat(vhat[None, :], t)[0]


def _find_witness(traj1, traj2, i_lo, i_hi, before, tv_fn, ts_fn):
    """Locate (t, x) where the difference has a multiple zero inside the bracket.

    The bracket is replayed step by step; inside the step where the count drops,
    the extremum between the two merging zeros is followed by Newton and Brent
    finds the time at which its value crosses zero.
    """
    dt = traj1.step_dt
    n_steps = int(round((traj1.times[i_hi] - traj1.times[i_lo]) / dt))
    A = _replay(traj1, i_lo, n_steps)
    B = _replay(traj2, i_lo, n_steps)
    N = traj1.N
    t_lo = float(traj1.times[i_lo])
    prev = None
    for s in range(n_steps + 1):
        g = GridFunction(from_hat(A[s] - B[s], N))
        try:
            zc = zero_count(g)
        except NumericallyZeroError:
            continue
        if zc.simple and zc.count >= before:
            prev = (s, g, zc)
        elif prev is not None and (not zc.simple or zc.count < before):
            if zc.simple and zc.count < before:
                break
    if prev is None or prev[0] >= n_steps:
        return None
    s0, g0, z0 = prev
    t0 = t_lo + s0 * dt
    ip0 = Interpolant(g0)
    locs = z0.locations
    cands = []
    for i in range(len(locs)):
        a, b = locs[i], locs[(i + 1) % len(locs)]
        if b <= a:
            b += TWO_PI
        xc = ip0.critical_point(0.5 * (a + b), max_move=0.5 * (b - a) + 1e-12)
        if xc is None:
            continue
        cands.append((abs(ip0.value(xc)), xc))
    cands.sort()
    best = None
    span = (n_steps - s0) * dt
    taus = np.linspace(0.0, span, WITNESS_SUBSTEPS * (n_steps - s0) + 1)

    def diff_at(tau):
        ga = _partial_step(traj1, A[s0], t0, tau) - _partial_step(traj2, B[s0], t0, tau)
        return GridFunction(from_hat(ga, N))

    for _, xc in cands[:4]:
        # follow the extremum on a fine grid of partial steps; a failed or long Newton
        # move means it merged with a neighbour, which ends this candidate
        x_prev, v_prev = xc, ip0.value(xc)
        bracket = None
        for k in range(1, taus.size):
            ip = Interpolant(diff_at(taus[k]))
            x = ip.critical_point(x_prev, max_move=0.1)
            if x is None:
                break
            v = ip.value(x)
            if np.sign(v) != np.sign(v_prev):
                bracket = (taus[k - 1], taus[k], x_prev)
                break
            x_prev, v_prev = x, v
        if bracket is None:
            continue
        lo_tau, hi_tau, x_left = bracket

        def extremum(tau, _x=x_left):
            ip = Interpolant(diff_at(tau))
            x = ip.critical_point(_x, max_move=0.1)
            return (np.nan, None, ip) if x is None else (ip.value(x), x, ip)

        try:
            tau_star = brentq(lambda tau: extremum(tau)[0], lo_tau, hi_tau, xtol=1e-15, rtol=1e-15,
                              maxiter=200)
        except ValueError:
            continue
        val, x, ip = extremum(tau_star)
        if x is None:
            continue
        scale = float(np.max(np.abs(refine(diff_at(tau_star), 4 * N))))
        slope = ip.slope(x)
        res = (t0 + tau_star, x, abs(val), abs(slope), scale)
        if best is None or res[2] < best[2]:
            best = res
        if abs(val) < 10 * tv_fn(scale) and abs(slope) < 10 * ts_fn(scale):
            return best
    return best


def lap_monitor(traj1: Trajectory, traj2: Trajectory, tol_val: float | None = None,
                tol_slope: float | None = None, find_witness: bool = True) -> LapReport:
    """Zero number of the difference of two trajectories at every stored sample.

    Tolerances default to the relative values (per-sample ``||w||_inf``).
    """
    if traj1.N != traj2.N or traj1.field != traj2.field:
        raise ValueError("trajectories must share grid and field")
    if traj1.times.shape != traj2.times.shape or not np.allclose(traj1.times, traj2.times,
                                                                  rtol=0, atol=1e-12):
        raise ValueError("trajectories must share sample times")
    if np.array_equal(traj1.states[0], traj2.states[0]):
        raise ValueError("trajectories must be distinct")

    tv_fn = (lambda s: REL_TOL_VAL * s) if tol_val is None else (lambda s: tol_val)
    ts_fn = (lambda s: REL_TOL_SLOPE * s) if tol_slope is None else (lambda s: tol_slope)

    S = len(traj1)
    counts = np.full(S, -1, dtype=int)
    simple = np.zeros(S, dtype=bool)
    indet = np.zeros(S, dtype=bool)
    collapsed = np.zeros(S, dtype=bool)
    for i in range(S):
        a, b = traj1.states[i], traj2.states[i]
        w = a - b
        floor = COLLAPSE_REL * max(1.0, np.max(np.abs(a)), np.max(np.abs(b)))
        if np.max(np.abs(w)) < floor:
            collapsed[i] = True
            continue
        zc = zero_count(GridFunction(w), tol_val, tol_slope)
        counts[i] = zc.count
        simple[i] = zc.simple
        indet[i] = not zc.simple

    drops, violations, uncertified = [], [], []
    last = None  # index of last certified sample
    pending = []  # indeterminate samples since then
    for i in range(S):
        if collapsed[i]:
            continue
        if not simple[i]:
            pending.append(i)
            continue
        if last is not None:
            c0, c1 = counts[last], counts[i]
            if c1 > c0:
                violations.append({"t_lo": float(traj1.times[last]), "t_hi": float(traj1.times[i]),
                                   "before": int(c0), "after": int(c1)})
            elif c1 < c0:
                ev = DropEvent(float(traj1.times[last]), float(traj1.times[i]), int(c0), int(c1))
                if find_witness:
                    wit = _find_witness(traj1, traj2, last, i, int(c0), tv_fn, ts_fn)
                    if wit is not None:
                        t_w, x_w, val, slope, scale = wit
                        ev.witness_t, ev.witness_x = t_w, x_w
                        ev.witness_value, ev.witness_slope = val, slope
                        ev.tol_val, ev.tol_slope = tv_fn(scale), ts_fn(scale)
                        ev.witness_ok = val < 10 * ev.tol_val and slope < 10 * ev.tol_slope
                drops.append(ev)
            else:
                uncertified.extend(float(traj1.times[j]) for j in pending)
        pending = []
        last = i
    return LapReport(traj1.times.copy(), counts, simple, indet, collapsed, drops, violations,
                     uncertified)
