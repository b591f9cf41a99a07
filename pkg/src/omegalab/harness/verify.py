"""Acceptance checks shared by the ``verify`` command and the test suite.

Each check returns a :class:`CheckResult` with a stable id, a short statement of
the claim being checked, measured values and the tolerances applied.  Reports
contain no timings so that repeated runs are byte-identical; runtime limits are
enforced inside the checks and surface only through the pass/fail status.
"""
from __future__ import annotations

import logging
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..errors import OmegaLabError
from ..forcing import dyadic_series_truncation, example_61_signal, integral_signal
from ..omega_limit import (CASE_II, NO_IMPLICATION, classify, find_common_critical_point,
                           homogeneity_test, sample_omega)
from ..scenarios import CATALOG, get_scenario
from ..spectral import GridFunction, evolve, evolve_ensemble, grid, reflect
from ..variational import floquet_vs_frame_crosscheck, linearization_consistency, lyapunov_spectrum
from ..zero_number import lap_monitor
from .io import dumps

log = logging.getLogger(__name__)

PASS, FAIL, NA = "pass", "fail", "not-applicable"

# minimum of the dyadic weight over all dyadic times, and the floor it is compared with
DYADIC_FLOOR = float(np.exp(-2 * np.pi - 2))


@dataclass
class SuiteParams:
    name: str
    lap_pairs: int
    omega_random: int
    bistable_runs: int
    seed: int = 0

    @classmethod
    def quick(cls, seed: int = 0):
        return cls("quick", lap_pairs=10, omega_random=3, bistable_runs=3, seed=seed)

    @classmethod
    def full(cls, seed: int = 0):
        return cls("full", lap_pairs=50, omega_random=20, bistable_runs=10, seed=seed)


@dataclass
class CheckResult:
    id: str
    anchor: str
    status: str
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    runtime: float = 0.0  # never serialized

    def to_dict(self) -> dict:
        return {"id": self.id, "anchor": self.anchor, "status": self.status,
                "measured": self.measured, "tolerance": self.tolerance,
                "diagnostics": self.diagnostics}

    def line(self) -> str:
        return f"{self.id} {self.status.upper():<14} {self.anchor}"


@dataclass
class VerifyReport:
    suite: str
    seed: int
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def summary(self) -> dict:
        out = {PASS: 0, FAIL: 0, NA: 0}
        for c in self.checks:
            out[c.status] += 1
        return out

    def to_dict(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "version": __version__,
                "checks": [c.to_dict() for c in sorted(self.checks, key=lambda c: c.id)],
                "summary": self.summary()}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def lines(self) -> list[str]:
        return [c.line() for c in sorted(self.checks, key=lambda c: c.id)]


class Context:
    """Caches trajectories and spectra shared between checks of one suite run."""

    def __init__(self, params: SuiteParams, flip_diffusion: bool = False):
        self.params = params
        self.flip = flip_diffusion
        self._cache = {}

    def rng(self, tag: str) -> np.random.Generator:
        # a separate stream per check keeps results independent of check order
        return np.random.default_rng([self.params.seed, sum(map(ord, tag)), len(tag)])

    def scenario_run(self, name: str):
        """Default-u0 trajectory of a catalog scenario over its full run length."""
        key = ("run", name)
        if key not in self._cache:
            sc = get_scenario(name)
            st = sc.settings
            t_end = max(st.t_end, st.horizon)
            self._cache[key] = evolve(sc.initial(), sc.field, t_end, sc.config, st.sample_stride,
                                      flip_diffusion=self.flip)
        return self._cache[key]

    def spectrum(self, name: str):
        key = ("spec", name)
        if key not in self._cache:
            sc = get_scenario(name)
            self._cache[key] = lyapunov_spectrum(self.scenario_run(name), sc.settings.m,
                                                 sc.settings.horizon, seed=self.params.seed)
        return self._cache[key]


def _guard(check_id: str, anchor: str):
    """Turn exceptions inside a check into a failing result with diagnostics."""
    def deco(fn):
        def wrapper(ctx: Context) -> CheckResult:
            t0 = time.perf_counter()
            try:
                res = fn(ctx)
            except (OmegaLabError, ValueError, ArithmeticError, AssertionError) as exc:
                log.warning("%s raised %r", check_id, exc)
                res = CheckResult(check_id, anchor, FAIL,
                                  diagnostics=[f"{type(exc).__name__}: {exc}",
                                               traceback.format_exc(limit=3).splitlines()[-1]])
            res.runtime = time.perf_counter() - t0
            if res.status == FAIL and not res.diagnostics:
                res.diagnostics.append(f"measured {dumps(res.measured).strip()} outside "
                                       f"tolerance {dumps(res.tolerance).strip()}")
            return res
        wrapper.check_id = check_id
        wrapper.anchor = anchor
        return wrapper
    return deco


def _ok(flag: bool) -> str:
    return PASS if flag else FAIL


# ---------------------------------------------------------------------------


@_guard("A01", "closed-form solution of the dyadic linear example with lambda=-1")
def check_closed_form(ctx: Context) -> CheckResult:
    sc = get_scenario("ex61-l-1").with_overrides(dt=1e-3)
    t0 = time.perf_counter()
    tr = evolve(sc.initial(), sc.field, 10.0, sc.config, sample_stride=100, flip_diffusion=ctx.flip)
    elapsed = time.perf_counter() - t0
    x = grid(tr.N)
    err = 0.0
    for t, u in zip(tr.times, tr.states):
        ref = sc.oracle(t, x)
        err = max(err, float(np.max(np.abs(u - ref)) / np.max(np.abs(ref))))
    ok = err <= 1e-6 and elapsed < 10.0
    return CheckResult("A01", check_closed_form.anchor, _ok(ok),
                       {"relative_c0_error": err, "samples": int(tr.times.size)},
                       {"relative_c0_error": 1e-6, "runtime_s": 10.0, "N": 64, "dt": 1e-3, "t_end": 10.0})


@_guard("A02", "the dyadic weight stays above exp(-2 pi - 2) at dyadic times")
def check_dyadic_lower_bound(ctx: Context) -> CheckResult:
    sig = example_61_signal()
    ts = 2.0 ** np.arange(1, 15)
    psi = np.exp(integral_signal(sig, ts))
    ok = bool(np.all(psi >= DYADIC_FLOOR))
    return CheckResult("A02", check_dyadic_lower_bound.anchor, _ok(ok),
                       {"min_psi": float(psi.min()), "argmin_n": int(np.argmin(psi)) + 1},
                       {"floor": DYADIC_FLOOR, "n_range": [1, 14]})


@_guard("A03", "the dyadic weight comes arbitrarily close to zero")
def check_dyadic_infimum(ctx: Context) -> CheckResult:
    sig = example_61_signal()
    t0 = time.perf_counter()
    ts = np.arange(0.0, 2.0 ** 20 + 0.125, 0.25)
    psi = np.exp(integral_signal(sig, ts))
    elapsed = time.perf_counter() - t0
    i = int(np.argmin(psi))
    ok = psi[i] <= 0.05 and elapsed < 60.0
    return CheckResult("A03", check_dyadic_infimum.anchor, _ok(ok),
                       {"min_psi": float(psi[i]), "argmin_t": float(ts[i]),
                        "truncation_K": dyadic_series_truncation()},
                       {"threshold": 0.05, "grid_step": 0.25, "t_max": 2.0 ** 20, "runtime_s": 60.0})


def _spectrum_check(ctx: Context, check_id: str, anchor: str, name: str) -> CheckResult:
    sc = get_scenario(name)
    exp = sc.expected
    t0 = time.perf_counter()
    sp = ctx.spectrum(name)
    elapsed = time.perf_counter() - t0
    dev = float(np.max(np.abs(np.asarray(sp.exponents) - np.asarray(exp["spectrum"]))))
    dims = (sp.dim_u, sp.dim_c, sp.N_u) == (exp["dim_u"], exp["dim_c"], exp["N_u"])
    ok = dev <= exp["spectrum_tol"] and dims and elapsed < 300.0
    return CheckResult(check_id, anchor, _ok(ok),
                       {"exponents": list(sp.exponents), "max_deviation": dev, "dim_u": sp.dim_u,
                        "dim_c": sp.dim_c, "N_u": sp.N_u, "intervals": sp.intervals.tolist()},
                       {"expected": exp["spectrum"], "abs_tol": exp["spectrum_tol"],
                        "dims": [exp["dim_u"], exp["dim_c"], exp["N_u"]], "m": sc.settings.m,
                        "horizon": sc.settings.horizon, "runtime_s": 300.0})


@_guard("A04", "Lyapunov spectrum and centre dimension for lambda=0")
def check_spectrum_l0(ctx: Context) -> CheckResult:
    return _spectrum_check(ctx, "A04", check_spectrum_l0.anchor, "ex61-l0")


@_guard("A05", "Lyapunov spectrum and unstable dimension for lambda=-1")
def check_spectrum_l1(ctx: Context) -> CheckResult:
    return _spectrum_check(ctx, "A05", check_spectrum_l1.anchor, "ex61-l-1")


@_guard("A06", "Floquet exponents agree with QR exponents for homogeneous coefficients")
def check_floquet(ctx: Context) -> CheckResult:
    meas, ok = {}, True
    for name, tol in (("ex61-l0", 0.05), ("ex61-l-1", 0.05)):
        r = floquet_vs_frame_crosscheck(ctx.scenario_run(name), 2, spectrum=ctx.spectrum(name))
        meas[name] = r["discrepancy"]
        ok &= r["discrepancy"] < tol
    heat = get_scenario("heat")
    tr = evolve(heat.initial(), heat.field, 200.0, heat.config, heat.settings.sample_stride,
                flip_diffusion=ctx.flip)
    r = floquet_vs_frame_crosscheck(tr, 2)
    meas["heat"] = r["discrepancy"]
    ok &= r["discrepancy"] < 1e-6
    return CheckResult("A06", check_floquet.anchor, _ok(ok), {"discrepancy": meas},
                       {"dyadic": 0.05, "heat": 1e-6, "k_max": 2})


@_guard("A07", "lap number of differences never increases and drops only at multiple zeros")
def check_lap(ctx: Context) -> CheckResult:
    meas, diag, ok = {}, [], True
    for name, stride in (("bistable", 10), ("ex62", 4)):
        sc = get_scenario(name)
        rng = ctx.rng("A07" + name)
        u0s = [sc.random_initial(rng) for _ in range(2 * ctx.params.lap_pairs)]
        trs = evolve_ensemble(u0s, sc.field, 50.0, sc.config, stride, flip_diffusion=ctx.flip)
        viol = drops = bad_witness = odd = indet_tail = 0
        for i in range(0, len(trs), 2):
            r = lap_monitor(trs[i], trs[i + 1])
            viol += len(r.violations)
            drops += len(r.drops)
            bad_witness += sum(not d.witness_ok for d in r.drops)
            fc = r.final_count
            if fc is not None and fc % 2:
                odd += 1
                diag.append(f"{name} pair {i // 2}: odd final count {fc}")
            tail = r.times >= r.times[0] + 0.8 * (r.times[-1] - r.times[0])
            indet_tail += int(np.sum(r.indeterminate[tail]))
            for v in r.violations:
                diag.append(f"{name} pair {i // 2}: increase {v}")
        meas[name] = {"pairs": ctx.params.lap_pairs, "violations": viol, "drops": drops,
                      "drops_without_witness": bad_witness, "odd_final_counts": odd,
                      "indeterminate_in_last_fifth": indet_tail}
        ok &= viol == 0 and bad_witness == 0 and odd == 0 and indet_tail == 0
    return CheckResult("A07", check_lap.anchor, _ok(ok), meas,
                       {"T": 50.0, "tol_val_rel": 1e-9, "tol_slope_rel": 1e-6,
                        "indeterminate_in_last_fifth": 0}, diag)


@_guard("A08", "a common critical point of the omega-limit set exists")
def check_critical_point(ctx: Context) -> CheckResult:
    sc = get_scenario("ex61-l-1")
    s = sample_omega(ctx.scenario_run("ex61-l-1"), sc.settings.t_transient)
    cp = find_common_critical_point(s, 1e-4)
    cell = 2 * np.pi / sc.config.N
    ok = cp is not None and not cp.every_point
    dist = None
    if ok:
        dist = float(min(abs(np.angle(np.exp(1j * (cp.x0 - c)))) for c in sc.expected["critical_points"]))
        ok = dist <= cell and cp.max_slope < 1e-4
    meas = {"x0": None if cp is None else cp.x0, "max_slope": None if cp is None else cp.max_slope,
            "distance_to_expected": dist}
    b = get_scenario("bistable")
    rng = ctx.rng("A08")
    u0s = [b.random_initial(rng) for _ in range(ctx.params.bistable_runs)]
    trs = evolve_ensemble(u0s, b.field, b.settings.t_end, b.config, b.settings.sample_stride,
                          flip_diffusion=ctx.flip)
    bis = []
    for tr in trs:
        sb = sample_omega(tr, b.settings.t_transient)
        found = find_common_critical_point(sb, 1e-4) is not None or homogeneity_test(sb)
        bis.append(bool(found))
    meas["bistable_runs"] = len(bis)
    meas["bistable_passing"] = int(sum(bis))
    ok = ok and all(bis)
    return CheckResult("A08", check_critical_point.anchor, _ok(ok), meas,
                       {"grid_cell": cell, "slope_tol": 1e-4})


def _builtin_fields():
    return [(name, get_scenario(name)) for name in CATALOG]


@_guard("A09", "solutions commute with spatial reflections")
def check_reflection(ctx: Context) -> CheckResult:
    rng = ctx.rng("A09")
    meas, ok = {}, True
    for name, sc in _builtin_fields():
        u0s, refl = [], []
        for _ in range(10):
            a = float(rng.uniform(0, 2 * np.pi))
            u = sc.random_initial(rng)
            u0s += [u, reflect(u, a)]
            refl.append(a)
        trs = evolve_ensemble(u0s, sc.field, 5.0, sc.config, sample_stride=10, flip_diffusion=ctx.flip)
        worst = 0.0
        for j, a in enumerate(refl):
            A, B = trs[2 * j], trs[2 * j + 1]
            for i in range(A.times.size):
                d = reflect(GridFunction(A.states[i]), a).values - B.states[i]
                worst = max(worst, float(np.max(np.abs(d))))
        meas[name] = worst
        ok &= worst < 1e-8
    return CheckResult("A09", check_reflection.anchor, _ok(ok), {"max_defect": meas},
                       {"abs_tol": 1e-8, "samples_per_field": 10, "t_range": [0.0, 5.0]})


@_guard("A10", "at most two minimal sets; lambda=0 shows one minimal set plus connecting orbits")
def check_trichotomy(ctx: Context) -> CheckResult:
    meas, diag, ok = {}, [], True
    for name in CATALOG:
        sc = get_scenario(name)
        st = sc.settings
        rng = ctx.rng("A10" + name)
        u0s = [sc.random_initial(rng) for _ in range(ctx.params.omega_random)]
        trs = [ctx.scenario_run(name)] + evolve_ensemble(u0s, sc.field, st.t_end, sc.config,
                                                         st.sample_stride, flip_diffusion=ctx.flip)
        counts = []
        for k, tr in enumerate(trs):
            try:
                r = classify(sample_omega(tr, st.t_transient), None)
            except OmegaLabError as exc:
                diag.append(f"{name} run {k}: {type(exc).__name__}: {exc}")
                counts.append(-1)
                ok = False
                continue
            counts.append(r.minimal_set_count)
            if k == 0 and name == "ex61-l0":
                meas["ex61-l0_default"] = {"count": r.minimal_set_count,
                                           "connecting_detected": r.connecting_detected,
                                           "case": r.trichotomy_case}
                ok &= r.minimal_set_count == 1 and r.connecting_detected and r.trichotomy_case == CASE_II
        meas[name] = {"runs": len(counts), "max_count": max(counts), "counts": counts}
        ok &= max(counts) <= 2
    return CheckResult("A10", check_trichotomy.anchor, _ok(ok), meas,
                       {"max_count": 2, "random_u0_per_scenario": ctx.params.omega_random}, diag)


@_guard("A11", "spectral implications on homogeneity and the number of minimal sets")
def check_rules(ctx: Context) -> CheckResult:
    meas, ok = {}, True
    b = get_scenario("bistable")
    tr = ctx.scenario_run("bistable")
    late = tr.window(b.settings.t_transient, tr.t_end)
    sp = lyapunov_spectrum(late, b.settings.m, seed=ctx.params.seed)
    r = classify(sample_omega(tr, b.settings.t_transient), sp)
    meas["bistable"] = {"dim_u": sp.dim_u, "dim_c": sp.dim_c, "rule": r.rule, "status": r.rule_status}
    ok &= (sp.dim_u, sp.dim_c) == (0, 0) and r.rule == "a" and r.rule_status == PASS
    for name, rule in (("ex61-l0", "c"), ("ex61-l-1", NO_IMPLICATION)):
        sc = get_scenario(name)
        sp = ctx.spectrum(name)
        r = classify(sample_omega(ctx.scenario_run(name), sc.settings.t_transient), sp)
        meas[name] = {"dim_u": sp.dim_u, "dim_c": sp.dim_c, "rule": r.rule, "status": r.rule_status}
        ok &= r.rule == rule and r.rule_status in (PASS, NA)
    return CheckResult("A11", check_rules.anchor, _ok(ok), meas,
                       {"expected_rules": {"bistable": "a", "ex61-l0": "c", "ex61-l-1": NO_IMPLICATION}})


@_guard("A12", "the tangent flow is the derivative of the solution map")
def check_linearization(ctx: Context) -> CheckResult:
    rng = ctx.rng("A12")
    meas, ok = {}, True
    for name, sc in _builtin_fields():
        u0 = sc.random_initial(rng)
        v = GridFunction(sum(rng.normal() * np.cos(k * grid(sc.config.N) + rng.uniform(0, 2 * np.pi))
                             for k in range(4)))
        v = v * (1.0 / v.sup())
        r = linearization_consistency(sc.field, u0, v, sc.config, t_end=1.0)
        meas[name] = {"slope": r["slope"], "linear_regime": r["linear_regime"], "ratios": r["ratios"]}
        ok &= r["passed"]
    return CheckResult("A12", check_linearization.anchor, _ok(ok), meas,
                       {"min_slope": 0.9, "eps": [1e-3, 1e-4, 1e-5], "t_end": 1.0})


@_guard("A13", "identical configurations give byte-identical output")
def check_determinism(ctx: Context) -> CheckResult:
    outs = []
    for _ in range(2):
        sub = Context(ctx.params, ctx.flip)
        res = [check_dyadic_lower_bound(sub), check_reflection(sub)]
        sc = get_scenario("ex62")
        tr = evolve(sc.random_initial(sub.rng("A13")), sc.field, 5.0, sc.config, 4, flip_diffusion=ctx.flip)
        outs.append(dumps({"checks": [r.to_dict() for r in res], "states": tr.states}))
    ok = outs[0] == outs[1]
    return CheckResult("A13", check_determinism.anchor, _ok(ok), {"identical": ok, "bytes": len(outs[0])},
                       {"comparison": "byte-identical"})


CHECKS = [check_closed_form, check_dyadic_lower_bound, check_dyadic_infimum, check_spectrum_l0,
          check_spectrum_l1, check_floquet, check_lap, check_critical_point, check_reflection,
          check_trichotomy, check_rules, check_linearization, check_determinism]
CHECK_IDS = [c.check_id for c in CHECKS]


def run_suite(params: SuiteParams, only=None, flip_diffusion: bool = False, progress=None) -> VerifyReport:
    """Run the selected checks (all by default) sequentially in id order."""
    ctx = Context(params, flip_diffusion)
    results = []
    for chk in CHECKS:
        if only is not None and chk.check_id not in only:
            continue
        res = chk(ctx)
        log.info("%s %s (%.1fs)", res.id, res.status, res.runtime)
        if progress is not None:
            progress(res)
        results.append(res)
    return VerifyReport(params.name, params.seed, results)
