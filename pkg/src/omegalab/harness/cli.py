"""Command line entry point: ``omegalab <command> [options]``.

Exit status: 0 when everything passes, 1 when a check or expectation fails,
2 on runtime errors (blow-up, bad input, insufficient recurrence, ...).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from ..errors import OmegaLabError
from ..omega_limit import classify, sample_omega
from ..scenarios import Scenario, list_scenarios
from ..spectral import evolve, evolve_ensemble
from ..variational import floquet_vs_frame_crosscheck, lyapunov_spectrum
from ..zero_number import lap_monitor
from . import plots
from .config import RunConfig, load_schema
from .io import dumps, write_json
from .verify import CHECK_IDS, SuiteParams, run_suite

log = logging.getLogger("omegalab")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
HISTORY_ROWS = 2000
CLASSIFY_TOLS = ("hull_tol", "fiber_tol", "t_min", "min_returns", "min_fiber", "gap_factor",
                 "critical_tol", "homogeneity_tol")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--scenario", help="catalog scenario name (see list-scenarios)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for every randomized choice")
    p.add_argument("--n", type=int, dest="N", help="grid size (power of two)")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--t-end", type=float, dest="t_end", help="integration length")
    p.add_argument("--t-transient", type=float, dest="t_transient", help="transient discarded")
    p.add_argument("--stride", type=int, dest="sample_stride", help="steps between stored samples")
    p.add_argument("--horizon", type=float, help="spectrum averaging horizon")
    p.add_argument("--m", type=int, help="number of Lyapunov exponents")
    p.add_argument("--random-u0", action="store_true", default=None,
                   help="draw u0 from the scenario's random family using --seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="omegalab", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="evolve a scenario and write the trajectory")
    _common(p)
    p.add_argument("--spectral", action="store_true", default=None, help="write Fourier coefficients")

    p = sub.add_parser("spectrum", help="Lyapunov spectrum with Floquet cross-check")
    _common(p)

    p = sub.add_parser("omega", help="classify the omega-limit set")
    _common(p)
    p.add_argument("--no-spectrum", action="store_true", help="skip the spectral rule checks")

    p = sub.add_parser("lap", help="zero-number monitor on a random pair of solutions")
    _common(p)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--quick", dest="suite", action="store_const", const="quick")
    g.add_argument("--full", dest="suite", action="store_const", const="full")
    p.add_argument("--only", nargs="+", choices=CHECK_IDS, help="run a subset of checks")

    p = sub.add_parser("export-plot", help="write plain-text plot columns")
    p.add_argument("--input", required=True, help="trajectory CSV, spectrum history or lap CSV")
    p.add_argument("--kind", required=True, help="field | section | exponents | lap")
    p.add_argument("--x0", type=float, help="section point for kind=section")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("list-scenarios", help="list the scenario catalog")
    p.add_argument("--json", action="store_true")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if args.scenario:
        cfg.scenario = args.scenario
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.random_u0:
        cfg.random_u0 = True
    if getattr(args, "spectral", None):
        cfg.spectral_csv = True
    for k in ("N", "dt", "t_end", "t_transient", "sample_stride", "horizon", "m"):
        v = getattr(args, k, None)
        if v is not None:
            cfg.overrides[k] = v
    jsonschema.validate(cfg.to_dict() if isinstance(cfg.scenario, str) else
                        {**cfg.to_dict(), "scenario": {"name": "inline"}},
                        load_schema("config.schema.json"))
    return cfg


def _initial(sc: Scenario, cfg: RunConfig):
    if cfg.random_u0:
        return sc.random_initial(np.random.default_rng(cfg.seed))
    return sc.initial()


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spectrum_start(sc: Scenario) -> float:
    # for state-independent linearizations the base point is irrelevant
    return 0.0 if sc.field.state_independent_rate else sc.settings.t_transient


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    sc = cfg.resolve()
    tr = evolve(_initial(sc, cfg), sc.field, sc.settings.t_end, sc.config, sc.settings.sample_stride)
    out = _outdir(cfg)
    tr.to_csv(out / "trajectory.csv", spectral=cfg.spectral_csv)
    write_json(out / "metadata.json", {"run_config": cfg.to_dict(), "scenario": sc.to_dict(),
                                       "samples": len(tr), "t_end": tr.t_end,
                                       "dt_effective": tr.step_dt})
    print(f"wrote {len(tr)} samples to {out / 'trajectory.csv'}")
    return EXIT_OK


def _compute_spectrum(sc: Scenario, cfg: RunConfig, tr=None):
    st = sc.settings
    t0 = _spectrum_start(sc)
    if tr is None:
        tr = evolve(_initial(sc, cfg), sc.field, t0 + st.horizon, sc.config, st.sample_stride)
    win = tr.window(tr.t0 + t0, tr.t_end) if t0 > 0 else tr
    horizon = min(st.horizon, win.duration)
    kw = {"gap_tol": cfg.tolerances["gap_tol"]} if "gap_tol" in cfg.tolerances else {}
    sp = lyapunov_spectrum(win, st.m, horizon, seed=cfg.seed, qr_interval=sc.config.qr_interval, **kw)
    try:
        fl = floquet_vs_frame_crosscheck(win, min(2, (st.m - 1) // 2), spectrum=sp)
        fl = {k: v for k, v in fl.items() if k in ("discrepancy", "drift_max", "horizon", "floquet", "frame")}
    except OmegaLabError as exc:
        fl = {"skipped": str(exc)}
    return win, sp, fl


def _spectrum_ok(sc: Scenario, sp) -> bool | None:
    exp = sc.expected
    if "spectrum" not in exp:
        return None
    ref = np.asarray(exp["spectrum"], float)
    n = min(ref.size, sp.m)
    ok = bool(np.all(np.abs(np.asarray(sp.exponents)[:n] - ref[:n]) <= exp.get("spectrum_tol", 0.05)))
    for key in ("dim_u", "dim_c", "N_u"):
        if key in exp and n == ref.size:
            ok &= getattr(sp, key) == exp[key]
    return ok


def cmd_spectrum(args) -> int:
    cfg = resolve_config(args)
    sc = cfg.resolve()
    win, sp, fl = _compute_spectrum(sc, cfg)
    ok = _spectrum_ok(sc, sp)
    out = _outdir(cfg)
    rep = {**sp.to_dict(), "scenario": sc.name, "t_start": win.t0, "floquet_crosscheck": fl,
           "within_tolerance": ok}
    jsonschema.validate(rep, load_schema("spectrum.schema.json"))
    write_json(out / "spectrum.json", rep)
    if sp.history_t is not None:
        step = max(1, sp.history_t.size // HISTORY_ROWS)
        rows = np.column_stack([sp.history_t, sp.history_exponents])[::step]
        header = "t," + ",".join(f"lambda_{i + 1}" for i in range(sp.m))
        np.savetxt(out / "spectrum_history.csv", rows, delimiter=",", fmt="%.12e", header=header,
                   comments="")
    print("exponents: " + " ".join(f"{x:+.4f}" for x in sp.exponents)
          + f"  dim_u={sp.dim_u} dim_c={sp.dim_c} N_u={sp.N_u}")
    if ok is not None:
        print("within scenario tolerance" if ok else "OUTSIDE scenario tolerance")
    return EXIT_FAIL if ok is False else EXIT_OK


def _omega_mismatch(sc: Scenario, rep: dict) -> list[str]:
    bad = []
    for key, want in sc.expected.items():
        if key in rep and rep[key] != want:
            bad.append(f"{key}: expected {want!r}, got {rep[key]!r}")
    cap = sc.expected.get("max_minimal_set_count")
    if cap is not None and rep["minimal_set_count"] > cap:
        bad.append(f"minimal_set_count {rep['minimal_set_count']} exceeds {cap}")
    return bad


def cmd_omega(args) -> int:
    cfg = resolve_config(args)
    sc = cfg.resolve()
    st = sc.settings
    tr = evolve(_initial(sc, cfg), sc.field, st.t_end, sc.config, st.sample_stride)
    s = sample_omega(tr, st.t_transient)
    sp = None if args.no_spectrum else _compute_spectrum(sc, cfg, tr)[1]
    tols = {k: v for k, v in cfg.tolerances.items() if k in CLASSIFY_TOLS}
    rep = classify(s, sp, **tols).to_dict()
    rep["scenario"] = sc.name
    jsonschema.validate(rep, load_schema("omega_report.schema.json"))
    write_json(_outdir(cfg) / "omega.json", rep)
    print(f"case {rep['trichotomy_case']}; minimal sets {rep['minimal_set_count']}; "
          f"homogeneous {rep['homogeneous']}; rule {rep['rule']} ({rep['rule_status']})")
    bad = _omega_mismatch(sc, rep) if not cfg.random_u0 else []
    for b in bad:
        print("mismatch: " + b)
    return EXIT_FAIL if bad or rep["falsifications"] else EXIT_OK


def cmd_lap(args) -> int:
    cfg = resolve_config(args)
    sc = cfg.resolve()
    rng = np.random.default_rng(cfg.seed)
    u1, u2 = sc.random_initial(rng), sc.random_initial(rng)
    t_end = cfg.overrides.get("t_end", 50.0)
    tr1, tr2 = evolve_ensemble([u1, u2], sc.field, t_end, sc.config, sc.settings.sample_stride)
    r = lap_monitor(tr1, tr2)
    out = _outdir(cfg)
    r.to_csv(out / "lap.csv")
    (out / "drops.json").write_text(r.drops_json() + "\n")
    print(f"initial count {r.certified_counts[0] if r.certified_counts.size else 'n/a'}, "
          f"final {r.final_count}, drops {len(r.drops)}, violations {len(r.violations)}")
    return EXIT_FAIL if r.violations else EXIT_OK


def cmd_verify(args) -> int:
    suite = args.suite or "quick"
    params = SuiteParams.quick(args.seed) if suite == "quick" else SuiteParams.full(args.seed)
    rep = run_suite(params, only=set(args.only) if args.only else None,
                    progress=lambda c: print(c.line(), flush=True))
    d = rep.to_dict()
    jsonschema.validate(d, load_schema("verify_report.schema.json"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.json").write_text(rep.to_json())
    s = rep.summary()
    print(f"{suite} suite: {s['pass']} pass, {s['fail']} fail, {s['not-applicable']} not applicable")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_export_plot(args) -> int:
    if not Path(args.input).exists():
        raise FileNotFoundError(args.input)
    text = plots.export(args.kind, args.input, args.x0)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_list(args) -> int:
    rows = list_scenarios()
    if args.json:
        sys.stdout.write(dumps(rows))
    else:
        for r in rows:
            print(f"{r['name']:<10} {r['kind']:<16} {r['description']}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "omega": cmd_omega, "lap": cmd_lap,
            "verify": cmd_verify, "export-plot": cmd_export_plot, "list-scenarios": cmd_list}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OmegaLabError, ValueError, KeyError, OSError, jsonschema.ValidationError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
