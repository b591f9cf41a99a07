"""Canned experiments: forcing field, initial data, solver and run settings, oracles.

Expected fragments are plain data; the verify pipeline reads them generically and
never branches on scenario names.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np

from .forcing import (BISTABLE_MAP, ForcingField, QuasiPeriodicSum, autonomous_even,
                      example_61_signal, pendulum, scalar_linear)
from .omega_limit import CASE_I, CASE_II, NO_IMPLICATION
from .spectral import GridFunction, SolverConfig, deriv_x, grid

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierData:
    """u0(x) = mean + sum_k (cos_k cos kx + sin_k sin kx), k = 1, 2, ..."""

    mean: float = 0.0
    cos: tuple = ()
    sin: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.mean))
        for k, c in enumerate(self.cos, start=1):
            out = out + c * np.cos(k * x)
        for k, s in enumerate(self.sin, start=1):
            out = out + s * np.sin(k * x)
        return out

    def grid_function(self, N: int) -> GridFunction:
        return GridFunction(self(grid(N)))

    def to_dict(self) -> dict:
        return {"mean": float(self.mean), "cos": [float(c) for c in self.cos],
                "sin": [float(s) for s in self.sin]}

    @classmethod
    def from_dict(cls, d: dict) -> "FourierData":
        return cls(d.get("mean", 0.0), tuple(d.get("cos", ())), tuple(d.get("sin", ())))


@dataclass(frozen=True)
class RunSettings:
    t_end: float
    t_transient: float
    sample_stride: int
    horizon: float
    m: int = 5
    qr_interval: int = 10

    def to_dict(self) -> dict:
        return {"t_end": self.t_end, "t_transient": self.t_transient,
                "sample_stride": self.sample_stride, "horizon": self.horizon, "m": self.m,
                "qr_interval": self.qr_interval}


# random initial-data families; each returns FourierData from a Generator
def _random_generic(rng, mean_range=(0.5, 1.5), amp=0.3, kmax=4):
    k = np.arange(1, kmax + 1)
    return FourierData(float(rng.uniform(*mean_range)),
                       tuple(rng.normal(0, amp / k)), tuple(rng.normal(0, amp / k)))


def _random_mean_zero(rng, kmax=4):
    k = np.arange(1, kmax + 1)
    scale = np.where(k == 1, 1.0, 0.2 / k)
    return FourierData(0.0, tuple(rng.normal(0, scale)), tuple(rng.normal(0, scale)))


def _random_bistable(rng, kmax=5):
    k = np.arange(1, kmax + 1)
    mean = float(rng.choice([-1, 1]) * rng.uniform(0.05, 0.5))
    return FourierData(mean, tuple(rng.normal(0, 0.3 / k)), tuple(rng.normal(0, 0.3 / k)))


def _random_small(rng, kmax=4):
    k = np.arange(1, kmax + 1)
    return FourierData(float(rng.normal(0, 0.2)), tuple(rng.normal(0, 0.3 / k)),
                       tuple(rng.normal(0, 0.3 / k)))


RANDOM_FAMILIES: dict[str, Callable] = {
    "generic": _random_generic,
    "mean_zero": _random_mean_zero,
    "bistable": _random_bistable,
    "small": _random_small,
}


@dataclass
class Scenario:
    name: str
    field: ForcingField
    u0: FourierData
    config: SolverConfig
    settings: RunSettings
    expected: dict
    random_family: str = "generic"
    oracle: Callable | None = None
    description: str = ""
    reference_case: bool = True
    params: dict = dc_field(default_factory=dict)

    def initial(self, N: int | None = None) -> GridFunction:
        return self.u0.grid_function(N or self.config.N)

    def random_initial(self, rng: np.random.Generator, N: int | None = None) -> GridFunction:
        return RANDOM_FAMILIES[self.random_family](rng).grid_function(N or self.config.N)

    def with_overrides(self, **kw) -> "Scenario":
        cfg_keys = {"N", "dt", "dealias", "blowup_threshold", "qr_interval", "spectral_floor"}
        set_keys = {"t_end", "t_transient", "sample_stride", "horizon", "m"}
        cfg = {k: v for k, v in kw.items() if k in cfg_keys and v is not None}
        st = {k: v for k, v in kw.items() if k in set_keys and v is not None}
        return replace(self, config=replace(self.config, **cfg), settings=replace(self.settings, **st))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "reference_case": self.reference_case,
            "field": self.field.to_dict(),
            "u0": self.u0.to_dict(),
            "config": self.config.to_dict(),
            "settings": self.settings.to_dict(),
            "expected": self.expected,
            "random_family": self.random_family,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        base = None
        if d.get("name") in CATALOG and "field" not in d:
            return CATALOG[d["name"]]()
        if d.get("name") in CATALOG:
            base = CATALOG[d["name"]]()
        cfg = SolverConfig(**d["config"])
        return cls(d["name"], ForcingField.from_dict(d["field"]), FourierData.from_dict(d["u0"]), cfg,
                   RunSettings(**d["settings"]), d.get("expected", {}), d.get("random_family", "generic"),
                   base.oracle if base is not None else None, d.get("description", ""),
                   d.get("reference_case", False), d.get("params", {}))


# ---------------------------------------------------------------------------


def ex61(lam: float, u0: str = "sin") -> Scenario:
    """Scalar linear equation u_t = u_xx + (f(t) - lam) u with the dyadic signal f."""
    if lam not in (0.0, -1.0):
        raise ValueError("lambda must be 0 or -1 (an eigenvalue -k^2 with k = 0 or 1)")
    sig = example_61_signal()
    fld = scalar_linear(sig, lam)
    if lam == 0.0:
        data = FourierData(1.0)
        expected = {
            "homogeneous": True, "dim_u": 0, "dim_c": 1, "N_u": 0,
            "spectrum": [0.0, -1.0, -1.0, -4.0, -4.0], "spectrum_tol": 0.05,
            "minimal_set_count": 1, "connecting_detected": True, "trichotomy_case": CASE_II,
            "rule": "c", "rule_status": "pass",
        }
        family = "generic"
    else:
        data = FourierData(0.0, (0.0,), (1.0,)) if u0 == "sin" else FourierData(0.0, (1.0,))
        expected = {
            "homogeneous": False, "dim_u": 1, "dim_c": 2, "N_u": 2,
            "spectrum": [1.0, 0.0, 0.0, -3.0, -3.0], "spectrum_tol": 0.05,
            "minimal_set_count": 1, "rule": NO_IMPLICATION, "rule_status": "not-applicable",
            "critical_points": [np.pi / 2, 3 * np.pi / 2] if u0 == "sin" else [0.0, np.pi],
        }
        family = "mean_zero"

    def oracle(t, x, _d=data, _s=sig):
        return np.exp(_s.integral(t)) * _d(x)

    name = "ex61-l0" if lam == 0.0 else "ex61-l-1"
    # the unstable constant mode of lam=-1 must stay exactly empty: see clean_hat
    cfg = SolverConfig(N=64, dt=1e-2, spectral_floor=1e-13)
    sc = Scenario(name, fld, data, cfg, RunSettings(4096.0, 2000.0, 100, 4096.0, 5), expected,
                  family, oracle, f"dyadic almost-periodic linear equation, lambda={lam:g}",
                  True, {"lambda": lam, "u0": u0})
    check_oracle(sc)
    return sc


DEFAULT_EX62_A = QuasiPeriodicSum((0.5, 0.25), (1.0, 2.0), (0.0, 0.3), mean=1.0)
DEFAULT_EX62_B = QuasiPeriodicSum((0.5,), (1.0,), (0.0,))


def ex62(a: QuasiPeriodicSum | None = None, b: QuasiPeriodicSum | None = None,
         u0: FourierData | None = None) -> Scenario:
    """Pendulum-type field -(a cos u + b sin u) sin u with user-chosen surrogate a, b."""
    a = DEFAULT_EX62_A if a is None else a
    b = DEFAULT_EX62_B if b is None else b
    data = u0 if u0 is not None else FourierData(0.1, (0.2, 0.05), (0.15, -0.05))
    return Scenario("ex62", pendulum(a, b), data, SolverConfig(N=64, dt=0.025),
                    RunSettings(1000.0, 400.0, 10, 400.0, 5),
                    {"max_minimal_set_count": 2}, "small", None,
                    "pendulum-type field with surrogate coefficients", True)


def bistable() -> Scenario:
    """h(u, q) = u - u^3: an autonomous symmetric field used only as plumbing."""
    return Scenario("bistable", autonomous_even(BISTABLE_MAP), FourierData(0.1, (), (0.05,)),
                    SolverConfig(N=64, dt=0.01), RunSettings(200.0, 50.0, 20, 200.0, 5),
                    {"homogeneous": True, "dim_u": 0, "dim_c": 0, "N_u": 0,
                     "minimal_set_count": 1, "cover_cardinality": 1, "trichotomy_case": CASE_I,
                     "rule": "a", "rule_status": "pass",
                     "spectrum": [-2.0, -3.0, -3.0, -6.0, -6.0], "spectrum_tol": 1e-2},
                    "bistable", None, "bistable autonomous field (plumbing check, no reference solution)", False)


def heat() -> Scenario:
    zero = QuasiPeriodicSum((), (), ())
    data = FourierData(0.0, (0.5,), (0.3, 0.2))

    def oracle(t, x, _d=data):
        out = np.full(np.shape(x), _d.mean) * np.ones_like(np.asarray(t, float))
        for k, c in enumerate(_d.cos, start=1):
            out = out + c * np.exp(-k * k * t) * np.cos(k * x)
        for k, s in enumerate(_d.sin, start=1):
            out = out + s * np.exp(-k * k * t) * np.sin(k * x)
        return out

    sc = Scenario("heat", scalar_linear(zero, 0.0), data, SolverConfig(N=64, dt=0.01),
                  RunSettings(200.0, 50.0, 20, 200.0, 5),
                  {"homogeneous": True, "dim_u": 0, "dim_c": 1, "N_u": 0,
                   "spectrum": [0.0, -1.0, -1.0, -4.0, -4.0], "spectrum_tol": 1e-3,
                   "minimal_set_count": 1, "cover_cardinality": 1, "trichotomy_case": CASE_I,
                   "rule": "c", "rule_status": "pass"},
                  "generic", oracle, "heat equation (zero forcing)", False)
    check_oracle(sc)
    return sc


CATALOG: dict[str, Callable[[], Scenario]] = {
    "ex61-l0": lambda: ex61(0.0),
    "ex61-l-1": lambda: ex61(-1.0),
    "ex62": ex62,
    "bistable": bistable,
    "heat": heat,
}


def get_scenario(name: str) -> Scenario:
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(CATALOG)}") from None


def list_scenarios() -> list[dict]:
    out = []
    for name in CATALOG:
        sc = get_scenario(name)
        out.append({"name": name, "kind": sc.field.kind, "description": sc.description,
                    "reference_case": sc.reference_case})
    return out


# ---------------------------------------------------------------------------


def oracle_residual(sc: Scenario, n: int = 100, seed: int = 0, N: int = 64,
                    t_range=(0.0, 50.0), dt_fd: float = 1e-5) -> float:
    """Max PDE residual of the oracle at random (t, x), relative to the oracle's size.

    Space derivatives are spectral on an N-point grid; the time derivative is a
    central difference.
    """
    if sc.oracle is None:
        raise ValueError(f"scenario {sc.name} has no oracle")
    rng = np.random.default_rng(seed)
    xs = grid(N)
    worst = 0.0
    for _ in range(n):
        t = float(rng.uniform(*t_range)) + dt_fd
        j = int(rng.integers(N))
        u = GridFunction(sc.oracle(t, xs))
        ux = deriv_x(u)
        uxx = deriv_x(u, 2)
        ut = (sc.oracle(t + dt_fd, xs[j]) - sc.oracle(t - dt_fd, xs[j])) / (2 * dt_fd)
        f = sc.field(t, u.values[j], ux.values[j])
        scale = max(u.sup(), 1e-300)
        worst = max(worst, abs(ut - uxx.values[j] - f) / scale)
    return float(worst)


def check_oracle(sc: Scenario, tol: float = 1e-6):
    r = oracle_residual(sc)
    if r >= tol:
        raise AssertionError(f"oracle of {sc.name} fails its residual self-check ({r:.2e})")
    return r


def ode_scalar_solve(a: QuasiPeriodicSum, b: QuasiPeriodicSum, y0: float, t_end: float, dt: float,
                     limit: float = 1e12):
    """Classical RK4 for y' = a(t) y + b(t).  Returns (t, y, diverged)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(1, int(np.ceil(t_end / dt - 1e-9)))
    h = t_end / n
    ts = h * np.arange(n + 1)
    A0, Ah, A1 = a(ts[:-1]), a(ts[:-1] + h / 2), a(ts[1:])
    B0, Bh, B1 = b(ts[:-1]), b(ts[:-1] + h / 2), b(ts[1:])
    y = np.empty(n + 1)
    y[0] = y0
    diverged = False
    for i in range(n):
        yi = y[i]
        k1 = A0[i] * yi + B0[i]
        k2 = Ah[i] * (yi + h / 2 * k1) + Bh[i]
        k3 = Ah[i] * (yi + h / 2 * k2) + Bh[i]
        k4 = A1[i] * (yi + h * k3) + B1[i]
        y[i + 1] = yi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not abs(y[i + 1]) <= limit:
            diverged = True
            y = y[: i + 2]
            ts = ts[: i + 2]
            break
    return ts, y, diverged
