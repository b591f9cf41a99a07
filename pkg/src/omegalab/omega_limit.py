"""Sampled omega-limit sets and their classification.

Snapshots past a transient are grouped by position on the hull (phase torus).
A snapshot is recurrent when the orbit comes back close to it, both in state
(C^1 distance) and in hull phase, at clearly later or earlier times.  Recurrent
section values u(x0) are clustered per fiber to count minimal sets.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InsufficientRecurrenceError, UnboundedOmegaError
from .forcing import ForcingField
from .spectral import GridFunction, SolverConfig, Trajectory, refine, wavenumbers
from .variational import SpectrumEstimate

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

HULL_TOL = 0.05
FIBER_TOL = 1e-3
T_MIN = 10.0
MIN_RETURNS = 2
MIN_FIBER = 10
GAP_FACTOR = 10.0
HOMOGENEITY_TOL = 1e-6
CRITICAL_TOL = 1e-4
SIGN_DEAD_BAND = 1e-8

CASE_I = "(i) minimal"
CASE_II = "(ii) one-minimal-plus-connecting"
CASE_III = "(iii) two-minimal-plus-connecting"
NO_IMPLICATION = "no applicable implication"


@dataclass
class OmegaSample:
    times: np.ndarray
    states: np.ndarray
    hull_phases: np.ndarray
    t_transient: float
    field: ForcingField
    config: SolverConfig

    def __len__(self):
        return self.times.size

    @property
    def N(self) -> int:
        return self.states.shape[1]

    def state(self, i) -> GridFunction:
        return GridFunction(self.states[i])

    def derivatives(self) -> np.ndarray:
        ik = 1j * wavenumbers(self.N)
        ik[-1] = 0.0
        return np.fft.irfft(ik * np.fft.rfft(self.states, axis=1), n=self.N, axis=1)

    def c1_norms(self) -> np.ndarray:
        return np.max(np.abs(self.states), axis=1) + np.max(np.abs(self.derivatives()), axis=1)


def sample_omega(traj: Trajectory, t_transient: float, stride: int = 1) -> OmegaSample:
    """Keep the snapshots after ``t_transient`` (every ``stride``-th stored sample)."""
    if not traj.duration > 2 * t_transient:
        raise ValueError("trajectory must be longer than twice the transient")
    sel = np.nonzero(traj.times > t_transient + traj.t0)[0][::stride]
    s = OmegaSample(traj.times[sel].copy(), traj.states[sel].copy(), traj.hull_phases[sel].copy(),
                    float(t_transient), traj.field, traj.config)
    c1 = s.c1_norms()
    limit = 1e-3 * traj.config.blowup_threshold
    q = max(1, len(c1) // 4)
    early = float(np.median(c1[:q]))
    if not np.all(np.isfinite(c1)) or c1.max() >= limit or (
            c1[-q:].max() > 100.0 * max(early, 1.0)):
        raise UnboundedOmegaError("no bounded omega-limit: C1 norm keeps growing")
    return s


# ---------------------------------------------------------------------------
# common critical point and homogeneity


@dataclass
class CriticalPoint:
    x0: float
    max_slope: float
    every_point: bool = False


def _slope_envelope(s: OmegaSample, refine_factor: int = 4):
    M = refine_factor * s.N
    ux = np.array([refine(GridFunction(r), M) for r in s.derivatives()])
    return TWO_PI * np.arange(M) / M, np.max(np.abs(ux), axis=0)


def _max_slope_at(s: OmegaSample, x: float) -> float:
    N = s.N
    k = wavenumbers(N)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 0.0
    c = np.fft.rfft(s.states, axis=1) / N * w * 1j * k
    return float(np.max(np.abs(np.real(c @ np.exp(1j * k * x)))))


def find_common_critical_point(s: OmegaSample, tol: float = CRITICAL_TOL) -> CriticalPoint | None:
    """x0 minimizing max_i |u_x(t_i, x0)|, returned only when that max is below tol."""
    if len(s) == 0:
        raise ValueError("empty sample")
    xs, env = _slope_envelope(s)
    if float(env.max()) < tol:
        return CriticalPoint(0.0, float(env.max()), every_point=True)
    j = int(np.argmin(env))
    h = xs[1] - xs[0]
    best_x, best = float(xs[j]), float(env[j])
    res = minimize_scalar(lambda x: _max_slope_at(s, x), bounds=(xs[j] - h, xs[j] + h),
                          method="bounded", options={"xatol": 1e-12})
    if res.fun < best:
        best_x, best = float(np.mod(res.x, TWO_PI)), float(res.fun)
    if best < tol:
        return CriticalPoint(best_x, best)
    return None


def homogeneity_test(s: OmegaSample, tol: float = HOMOGENEITY_TOL) -> bool:
    return bool(np.max(np.abs(s.derivatives())) < tol)


def section_values(s: OmegaSample, x0: float) -> np.ndarray:
    N = s.N
    k = wavenumbers(N)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    c = np.fft.rfft(s.states, axis=1) / N * w
    return np.real(c @ np.exp(1j * k * x0))


# ---------------------------------------------------------------------------
# hull geometry and recurrence


def hull_weights(fld: ForcingField) -> np.ndarray:
    w = np.asarray(fld.hull_weights, dtype=float)
    return w if w.sum() > 0 else np.ones_like(w)


def phase_distance(th1: np.ndarray, th2: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Amplitude-weighted mean wrap-around distance between phase vectors (broadcasting).

    sum_k A_k |dtheta_k| bounds the sup distance between the two translated
    signals, so dividing by sum_k A_k makes the metric relative to signal size.
    """
    if weights.size == 0:
        return np.zeros(np.broadcast(th1[..., 0:1], th2[..., 0:1]).shape[:-1])
    # both inputs are already reduced to [0, 2pi), so |difference| < 2pi
    d = np.abs(th1 - th2)
    np.minimum(d, TWO_PI - d, out=d)
    return d @ (weights / weights.sum())


def _pairwise_hull(s: OmegaSample, weights, chunk: int = 64) -> np.ndarray:
    S = len(s)
    out = np.empty((S, S))
    P = s.hull_phases
    for i in range(0, S, chunk):
        out[i:i + chunk] = phase_distance(P[i:i + chunk, None, :], P[None, :, :], weights)
    return out


def _c1_rows(states, ders, i, js):
    return (np.max(np.abs(states[js] - states[i]), axis=1)
            + np.max(np.abs(ders[js] - ders[i]), axis=1))


@dataclass
class Recurrence:
    recurrent: np.ndarray
    returns: np.ndarray
    hull_close: np.ndarray


def recurrence_analysis(s: OmegaSample, hull_tol=HULL_TOL, fiber_tol=FIBER_TOL, t_min=T_MIN,
                        min_returns=MIN_RETURNS) -> Recurrence:
    weights = hull_weights(s.field)
    H = _pairwise_hull(s, weights) < hull_tol
    far = np.abs(s.times[:, None] - s.times[None, :]) > t_min
    cand = H & far
    ders = s.derivatives()
    returns = np.zeros(len(s), dtype=int)
    for i in range(len(s)):
        js = np.nonzero(cand[i])[0]
        if js.size:
            returns[i] = int(np.sum(_c1_rows(s.states, ders, i, js) < fiber_tol))
    return Recurrence(returns >= min_returns, returns, H)


def _group_fibers(close: np.ndarray) -> list[np.ndarray]:
    """Greedy grouping: each snapshot joins the first earlier base it is hull-close to."""
    bases, members = [], {}
    for i in range(close.shape[0]):
        hit = [b for b in bases if close[i, b]]
        if hit:
            members[hit[0]].append(i)
        else:
            bases.append(i)
            members[i] = [i]
    return [np.array(members[b]) for b in bases]


def gap_clusters(values, gap_factor: float = GAP_FACTOR, floor: float = FIBER_TOL) -> list[np.ndarray]:
    """1-D clustering by gaps.

    Every gap above ``floor`` starts as a separator; a separator is dropped while
    it is not wider than ``gap_factor`` times the spread of either neighbouring
    cluster.  Dropping only merges clusters, so the loop terminates.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 2:
        return [v]
    gaps = np.diff(v)
    cuts = set(np.nonzero(gaps > floor)[0].tolist())
    while True:
        edges = [0] + [c + 1 for c in sorted(cuts)] + [v.size]
        spans = [float(v[e - 1] - v[s]) for s, e in zip(edges[:-1], edges[1:])]
        weak = [c for i, c in enumerate(sorted(cuts))
                if gaps[c] <= gap_factor * max(spans[i], spans[i + 1])]
        if not weak:
            break
        # drop the narrowest offending gap first, then re-evaluate
        cuts.discard(min(weak, key=lambda c: gaps[c]))
    edges = [0] + [c + 1 for c in sorted(cuts)] + [v.size]
    return [v[s:e] for s, e in zip(edges[:-1], edges[1:])]


@dataclass
class FiberStats:
    base_phase: np.ndarray
    members: np.ndarray
    diameter: float
    value_range: tuple
    recurrent_members: np.ndarray = dc_field(default_factory=lambda: np.array([], dtype=int))
    clusters: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {"members": int(self.members.size), "recurrent": int(self.recurrent_members.size),
                "diameter": float(self.diameter), "value_range": [float(x) for x in self.value_range],
                "clusters": [[float(c.min()), float(c.max())] for c in self.clusters]}


@dataclass
class MinimalSetCount:
    count: int
    connecting_detected: bool
    fibers: list
    recurrent_fraction: float
    falsified: bool = False
    recurrent_ranges: list = dc_field(default_factory=list)


def _diameter(states, ders, idx):
    if idx.size < 2:
        return 0.0
    return max(float(np.max(_c1_rows(states, ders, i, idx))) for i in idx)


def count_minimal_sets(s: OmegaSample, x0: float, hull_tol=HULL_TOL, gap_factor=GAP_FACTOR,
                       fiber_tol=FIBER_TOL, t_min=T_MIN, min_returns=MIN_RETURNS,
                       min_fiber=MIN_FIBER, recurrence: Recurrence | None = None) -> MinimalSetCount:
    """Count clusters of recurrent section values u(x0) per hull fiber."""
    rec = recurrence or recurrence_analysis(s, hull_tol, fiber_tol, t_min, min_returns)
    vals = section_values(s, x0)
    ders = s.derivatives()
    fibers = []
    for mem in _group_fibers(rec.hull_close):
        rmem = mem[rec.recurrent[mem]]
        fs = FiberStats(s.hull_phases[mem[0]], mem, _diameter(s.states, ders, mem),
                        (float(vals[mem].min()), float(vals[mem].max())), rmem)
        if rmem.size:
            fs.clusters = gap_clusters(vals[rmem], gap_factor, fiber_tol)
        fibers.append(fs)
    populated = [f for f in fibers if f.members.size >= min_fiber]
    if not populated or not rec.recurrent.any():
        raise InsufficientRecurrenceError(
            f"insufficient recurrence sampling: {len(populated)} fibers with >= {min_fiber} members, "
            f"{int(rec.recurrent.sum())} recurrent snapshots")
    count = max((len(f.clusters) for f in fibers if f.clusters), default=0)
    if count == 0:
        raise InsufficientRecurrenceError("insufficient recurrence sampling: no recurrent fiber")
    falsified = count > 2
    if falsified:
        log.warning("more than two minimal-set clusters (%d) in a fiber; indices %s", count,
                    [f.recurrent_members.tolist() for f in fibers if len(f.clusters) > 2][:3])
    # connecting evidence: non-recurrent values outside every recurrent cluster of their fiber
    connecting = False
    for f in fibers:
        if not f.clusters:
            continue
        nonrec = np.setdiff1d(f.members, f.recurrent_members)
        for i in nonrec:
            if all(vals[i] < c.min() - fiber_tol or vals[i] > c.max() + fiber_tol for c in f.clusters):
                connecting = True
                break
        if connecting:
            break
    ranges = []
    if rec.recurrent.any():
        for c in gap_clusters(vals[rec.recurrent], gap_factor, fiber_tol):
            ranges.append((float(c.min()), float(c.max())))
    return MinimalSetCount(count, connecting, fibers, float(rec.recurrent.mean()), falsified, ranges)


def _single_linkage(states, ders, idx, tol) -> int:
    n = idx.size
    if n == 0:
        return 0
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        d = _c1_rows(states, ders, idx[a], idx)
        for b in np.nonzero(d < tol)[0]:
            ra, rb = find(a), find(int(b))
            if ra != rb:
                parent[ra] = rb
    return len({find(a) for a in range(n)})


def cover_test(s: OmegaSample, fibers: list, fiber_tol=FIBER_TOL, min_fiber=MIN_FIBER) -> int:
    """Largest number of C^1 clusters among recurrent members of a well-populated fiber."""
    ders = s.derivatives()
    card = 0
    for f in fibers:
        if f.members.size < min_fiber or f.recurrent_members.size == 0:
            continue
        card = max(card, _single_linkage(s.states, ders, f.recurrent_members, fiber_tol))
    if card == 0:
        raise InsufficientRecurrenceError("insufficient recurrence sampling for cover test")
    return card


def fiber_coverage(s: OmegaSample, hull_tol=HULL_TOL, probes: int = 500, seed: int = 0) -> float:
    """Fraction of random hull phases lying within hull_tol of some snapshot phase."""
    n = s.hull_phases.shape[1]
    if n == 0:
        return 1.0
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, TWO_PI, (probes, n))
    w = hull_weights(s.field)
    hit = np.zeros(probes, dtype=bool)
    for i in range(0, len(s), 256):
        d = phase_distance(P[:, None, :], s.hull_phases[None, i:i + 256, :], w)
        hit |= np.any(d < hull_tol, axis=1)
    return float(hit.mean())


# ---------------------------------------------------------------------------


def proximal_pair_scan(trajA: Trajectory, trajB: Trajectory, tol: float) -> dict:
    """Forward evidence from the last third of the window, backward from the first third."""
    if trajA.states.shape != trajB.states.shape or not np.allclose(trajA.times, trajB.times):
        raise ValueError("trajectories must share sample times and grid")
    ik = 1j * wavenumbers(trajA.N)
    ik[-1] = 0.0
    diff = trajA.states - trajB.states
    if not np.any(diff):
        raise ValueError("trajectories are identical; proximality is trivial")
    dx = np.fft.irfft(ik * np.fft.rfft(diff, axis=1), n=trajA.N, axis=1)
    d = np.max(np.abs(diff), axis=1) + np.max(np.abs(dx), axis=1)
    S = d.size
    third = max(1, S // 3)
    early, late = d[:third], d[S - third:]
    fwd = trajA.times[S - third:][late < tol]
    bwd = trajA.times[:third][early < tol]
    return {"two_sided": bool(fwd.size and bwd.size), "forward": bool(fwd.size),
            "backward": bool(bwd.size), "forward_dips": fwd.tolist(), "backward_dips": bwd.tolist(),
            "forward_min": float(late.min()), "backward_min": float(early.min())}


def sign_stabilization(s: OmegaSample, probes: int = 16, dead_band: float = SIGN_DEAD_BAND,
                       tail: float = 0.5) -> dict:
    """Is sgn u_x(t, a) eventually constant over the sampled tail at each probe point a?"""
    a = TWO_PI * np.arange(probes) / probes
    N = s.N
    k = wavenumbers(N)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 0.0
    c = np.fft.rfft(s.states, axis=1) / N * w * 1j * k
    ux = np.real(c @ np.exp(1j * np.outer(k, a)))
    start = int(len(s) * (1 - tail))
    sg = np.sign(ux[start:])
    sg[np.abs(ux[start:]) < dead_band] = 0
    stable = []
    for j in range(probes):
        nz = sg[:, j][sg[:, j] != 0]
        stable.append(bool(nz.size == 0 or np.all(nz == nz[0])))
    return {"probes": a.tolist(), "stable": stable, "all_stable": all(stable)}


def reflection_residual(s: OmegaSample, x0: float) -> float:
    """max_i ||rho_{x0} u_i - u_i||_inf."""
    N = s.N
    k = wavenumbers(N)
    c = np.fft.rfft(s.states, axis=1)
    r = np.conj(c) * np.exp(-2j * k * x0)
    r[:, -1] = c[:, -1]  # Nyquist column is left alone by the reflection
    return float(np.max(np.abs(np.fft.irfft(r, n=N, axis=1) - s.states)))


# ---------------------------------------------------------------------------


@dataclass
class OmegaReport:
    x0: float | None
    x0_every_point: bool
    x0_max_slope: float | None
    homogeneous: bool
    minimal_set_count: int
    connecting_detected: bool
    cover_cardinality: int
    trichotomy_case: str
    dim_u: int | None
    dim_c: int | None
    rule: str
    rule_status: str
    rule_expectations: dict
    falsifications: list
    fiber_coverage: float
    recurrent_fraction: float
    tolerances: dict
    connecting_note: str = ("connecting evidence is forward-only: non-recurrent snapshots whose "
                            "section values lie outside every recurrent cluster")

    def to_dict(self) -> dict:
        return {
            "x0": self.x0 if self.x0 is None else float(self.x0),
            "x0_every_point": self.x0_every_point,
            "x0_max_slope": None if self.x0_max_slope is None else float(self.x0_max_slope),
            "homogeneous": self.homogeneous,
            "minimal_set_count": int(self.minimal_set_count),
            "connecting_detected": self.connecting_detected,
            "cover_cardinality": int(self.cover_cardinality),
            "trichotomy_case": self.trichotomy_case,
            "dim_u": self.dim_u,
            "dim_c": self.dim_c,
            "rule": self.rule,
            "rule_status": self.rule_status,
            "rule_expectations": self.rule_expectations,
            "falsifications": self.falsifications,
            "fiber_coverage": float(self.fiber_coverage),
            "recurrent_fraction": float(self.recurrent_fraction),
            "tolerances": self.tolerances,
            "connecting_note": self.connecting_note,
        }


def trichotomy(count: int, connecting: bool) -> str:
    if count >= 2:
        return CASE_III
    return CASE_II if connecting else CASE_I


def apply_rules(dim_u: int | None, dim_c: int | None, homogeneous: bool, count: int,
                cover: int) -> tuple[str, str, dict]:
    """Cross-check the spectral implications; returns (rule, status, expectations)."""
    if dim_c is None:
        return NO_IMPLICATION, "not-applicable", {}
    if dim_c == 0:
        exp = {"homogeneous": True, "minimal_set_count": 1, "cover_cardinality": 1}
        ok = homogeneous and count == 1 and cover == 1
        return "a", "pass" if ok else "fail", exp
    if dim_c == 1 and dim_u > 0:
        exp = {"homogeneous": False, "cover_cardinality": 1}
        ok = (not homogeneous) and cover == 1
        return "b", "pass" if ok else "fail", exp
    if dim_c == 1 and dim_u == 0:
        exp = {"homogeneous": True}
        return "c", "pass" if homogeneous else "fail", exp
    return NO_IMPLICATION, "not-applicable", {}


def classify(s: OmegaSample, spectrum: SpectrumEstimate | None, hull_tol=HULL_TOL,
             fiber_tol=FIBER_TOL, t_min=T_MIN, min_returns=MIN_RETURNS, min_fiber=MIN_FIBER,
             gap_factor=GAP_FACTOR, critical_tol=CRITICAL_TOL,
             homogeneity_tol=HOMOGENEITY_TOL) -> OmegaReport:
    """Run every component analysis on the sample and assemble the report."""
    homog = homogeneity_test(s, homogeneity_tol)
    cp = find_common_critical_point(s, critical_tol)
    falsifications = []
    if cp is None:
        falsifications.append({"event": "no common critical point",
                               "detail": f"tol {critical_tol:g}"})
        x0 = 0.0
    else:
        x0 = 0.0 if cp.every_point else cp.x0
    msc = count_minimal_sets(s, x0, hull_tol, gap_factor, fiber_tol, t_min, min_returns, min_fiber)
    if msc.falsified:
        falsifications.append({"event": "more than two minimal sets", "count": msc.count})
    cover = cover_test(s, msc.fibers, fiber_tol, min_fiber)
    dim_u = spectrum.dim_u if spectrum is not None else None
    dim_c = spectrum.dim_c if spectrum is not None else None
    rule, status, exp = apply_rules(dim_u, dim_c, homog, msc.count, cover)
    if status == "fail":
        falsifications.append({"event": f"rule ({rule}) violated", "expected": exp,
                               "observed": {"homogeneous": homog, "minimal_set_count": msc.count,
                                            "cover_cardinality": cover}})
    for ev in falsifications:
        log.warning("falsification event: %s", ev)
    tol = {"hull_tol": hull_tol, "fiber_tol": fiber_tol, "t_min": t_min, "min_returns": min_returns,
           "min_fiber": min_fiber, "gap_factor": gap_factor, "critical_tol": critical_tol,
           "homogeneity_tol": homogeneity_tol}
    return OmegaReport(
        None if cp is None else (None if cp.every_point else cp.x0),
        bool(cp is not None and cp.every_point),
        None if cp is None else cp.max_slope,
        homog, msc.count, msc.connecting_detected, cover, trichotomy(msc.count, msc.connecting_detected),
        dim_u, dim_c, rule, status, exp, falsifications, fiber_coverage(s, hull_tol),
        msc.recurrent_fraction, tol)
