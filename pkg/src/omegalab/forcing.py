"""Almost-periodic signals and reflection-symmetric nonlinearities f(t, u, p).

A signal is a finite trigonometric sum ``mean + sum_k a_k sin(w_k t + theta_k)``.
Its hull is realized as the torus of phase vectors: translating in time
advances every phase by ``w_k * tau``.  A :class:`ForcingField` bundles one or
two signals into a nonlinearity that is even in the slope argument ``p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import IncomparableFieldsError

TWO_PI = 2.0 * np.pi

# Keeps (len(t) x K) temporaries for long time grids below ~32 MB.
_EVAL_CHUNK = 1 << 18


def wrap_phase(theta):
    """Reduce phases to [0, 2pi).  ``np.mod`` can return 2pi for tiny negatives."""
    th = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    return np.where(th >= TWO_PI, 0.0, th)


@dataclass(frozen=True)
class QuasiPeriodicSum:
    """``mean + sum_k a_k sin(w_k t + theta_k)`` with distinct positive frequencies."""

    amplitudes: tuple[float, ...]
    frequencies: tuple[float, ...]
    phases: tuple[float, ...]
    mean: float = 0.0
    truncation: int | None = None

    def __post_init__(self):
        a = tuple(float(x) for x in self.amplitudes)
        w = tuple(float(x) for x in self.frequencies)
        th = tuple(float(x) for x in wrap_phase(np.asarray(self.phases, dtype=float)))
        if not (len(a) == len(w) == len(th)):
            raise ValueError("amplitudes, frequencies and phases must have equal length")
        if any(not (x > 0.0) for x in w):
            raise ValueError("frequencies must be positive")
        if len(set(w)) != len(w):
            raise ValueError("frequencies must be distinct")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", th)
        object.__setattr__(self, "mean", float(self.mean))

    @classmethod
    def constant(cls, value: float) -> "QuasiPeriodicSum":
        return cls((), (), (), mean=value)

    @classmethod
    def from_terms(cls, terms: Sequence[tuple[float, float, float]], mean: float = 0.0,
                   truncation: int | None = None) -> "QuasiPeriodicSum":
        terms = list(terms)
        return cls(tuple(t[0] for t in terms), tuple(t[1] for t in terms),
                   tuple(t[2] for t in terms), mean=mean, truncation=truncation)

    @property
    def K(self) -> int:
        return self.truncation if self.truncation is not None else len(self.amplitudes)

    @property
    def terms(self) -> list[tuple[float, float, float]]:
        return list(zip(self.amplitudes, self.frequencies, self.phases))

    @cached_property
    def _arrays(self):
        return (np.array(self.amplitudes), np.array(self.frequencies), np.array(self.phases))

    def sup_bound(self) -> float:
        return abs(self.mean) + float(np.sum(np.abs(self._arrays[0])))

    def __call__(self, t):
        return eval_signal(self, t)

    def integral(self, t):
        return integral_signal(self, t)

    def derivative(self, t):
        a, w, th = self._arrays
        t = np.asarray(t, dtype=float)
        return np.sum(a * w * np.cos(np.multiply.outer(t, w) + th), axis=-1)

    def translate(self, tau: float) -> "QuasiPeriodicSum":
        _, w, th = self._arrays
        return QuasiPeriodicSum(self.amplitudes, self.frequencies, tuple(wrap_phase(th + w * tau)),
                                mean=self.mean, truncation=self.truncation)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "terms": [[a, w, th] for a, w, th in self.terms],
            "truncation": self.truncation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuasiPeriodicSum":
        return cls.from_terms([tuple(x) for x in d.get("terms", [])], mean=d.get("mean", 0.0),
                              truncation=d.get("truncation"))


def _chunked(t, fn):
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return fn(t[None])[0]
    flat = t.ravel()
    out = np.empty(flat.shape)
    for i in range(0, flat.size, _EVAL_CHUNK):
        out[i:i + _EVAL_CHUNK] = fn(flat[i:i + _EVAL_CHUNK])
    return out.reshape(t.shape)


def eval_signal(s: QuasiPeriodicSum, t):
    """Value of the signal at time(s) ``t``."""
    a, w, th = s._arrays
    if a.size == 0:
        return np.full(np.shape(t), s.mean) if np.ndim(t) else s.mean
    res = _chunked(t, lambda tt: np.sin(np.multiply.outer(tt, w) + th) @ a)
    return res + s.mean


def integral_signal(s: QuasiPeriodicSum, t):
    """Exact ``int_0^t s(tau) dtau`` from the antiderivative of each sinusoid."""
    a, w, th = s._arrays
    if a.size == 0:
        return s.mean * np.asarray(t, dtype=float) if np.ndim(t) else s.mean * float(t)
    scale = a / w
    res = _chunked(t, lambda tt: (np.cos(th) - np.cos(np.multiply.outer(tt, w) + th)) @ scale)
    return res + s.mean * np.asarray(t, dtype=float)


def dyadic_series_truncation(tail_tol: float = 1e-12) -> int:
    """Smallest K with sum_{k>K} 2^-k pi = 2^-K pi below ``tail_tol``."""
    K = 1
    while math.ldexp(math.pi, -K) >= tail_tol:
        K += 1
    return K


def example_61_signal(tail_tol: float = 1e-12) -> QuasiPeriodicSum:
    """f(t) = -sum_k 2^-k pi sin(2^-k pi t), truncated so the dropped tail is < tail_tol."""
    K = dyadic_series_truncation(tail_tol)
    k = np.arange(1, K + 1)
    w = np.ldexp(np.pi, -k)
    return QuasiPeriodicSum(tuple(-w), tuple(w), (0.0,) * K, truncation=K)


# ---------------------------------------------------------------------------
# maps h(u, q), q = p**2, for autonomous even fields


@dataclass(frozen=True)
class PolynomialEvenMap:
    """h(u, q) = sum c_ij u^i q^j; serializable and differentiated exactly."""

    terms: tuple[tuple[int, int, float], ...]
    name: str = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((int(i), int(j), float(c)) for i, j, c in self.terms))

    @property
    def depends_on_slope(self) -> bool:
        return any(j > 0 and c != 0.0 for _, j, c in self.terms)

    @staticmethod
    def _monomial_sum(items, u, q):
        out = np.zeros(np.broadcast(u, q).shape)
        for c, i, j in items:
            term = c
            if i:
                term = term * (u if i == 1 else u ** i)
            if j:
                term = term * (q if j == 1 else q ** j)
            out = out + term
        return out

    def h(self, u, q):
        return self._monomial_sum([(c, i, j) for i, j, c in self.terms], u, q)

    def h_u(self, u, q):
        return self._monomial_sum([(c * i, i - 1, j) for i, j, c in self.terms if i > 0], u, q)

    def h_q(self, u, q):
        return self._monomial_sum([(c * j, i, j - 1) for i, j, c in self.terms if j > 0], u, q)

    def to_dict(self) -> dict:
        return {"type": "polynomial", "name": self.name, "terms": [list(t) for t in self.terms]}


@dataclass(frozen=True)
class CallableEvenMap:
    """User-supplied h(u, q); partials by central differences with relative step."""

    func: Callable
    name: str = "callable"
    rel_step: float = 1e-6

    depends_on_slope = True

    def h(self, u, q):
        return self.func(u, q)

    def h_u(self, u, q):
        d = self.rel_step * np.maximum(1.0, np.abs(u))
        return (self.func(u + d, q) - self.func(u - d, q)) / (2 * d)

    def h_q(self, u, q):
        d = self.rel_step * np.maximum(1.0, np.abs(q))
        return (self.func(u, q + d) - self.func(u, q - d)) / (2 * d)

    def to_dict(self) -> dict:
        raise TypeError(f"even map {self.name!r} wraps a Python callable and cannot be serialized")


BISTABLE_MAP = PolynomialEvenMap(((1, 0, 1.0), (3, 0, -1.0)), name="bistable")


def even_map_from_dict(d: dict):
    if d.get("type") != "polynomial":
        raise ValueError(f"unknown even map type {d.get('type')!r}")
    return PolynomialEvenMap(tuple(tuple(t) for t in d["terms"]), name=d.get("name", "polynomial"))


# ---------------------------------------------------------------------------

KINDS = ("scalar_linear", "pendulum", "autonomous_even")


@dataclass(frozen=True)
class ForcingField:
    """Nonlinearity f(t, u, p), even in p, with its position on the hull.

    ``hull_phase`` holds one phase per distinct frequency of the member signals
    and starts at zero for the untranslated field.
    """

    kind: str
    signals: tuple[QuasiPeriodicSum, ...] = ()
    lam: float = 0.0
    even_map: PolynomialEvenMap | CallableEvenMap | None = None
    hull_phase: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        expected = {"scalar_linear": 1, "pendulum": 2, "autonomous_even": 0}[self.kind]
        if len(self.signals) != expected:
            raise ValueError(f"{self.kind} needs {expected} signal(s)")
        if self.kind == "autonomous_even" and self.even_map is None:
            raise ValueError("autonomous_even needs an even map h(u, q)")
        object.__setattr__(self, "signals", tuple(self.signals))
        n = len(self.frequencies)
        hp = tuple(float(x) for x in wrap_phase(np.asarray(self.hull_phase, dtype=float)))
        if not hp:
            hp = (0.0,) * n
        if len(hp) != n:
            raise ValueError("hull_phase needs one entry per distinct frequency")
        object.__setattr__(self, "hull_phase", hp)
        object.__setattr__(self, "lam", float(self.lam))

    @cached_property
    def frequencies(self) -> np.ndarray:
        freqs = sorted({w for s in self.signals for w in s.frequencies})
        return np.array(freqs, dtype=float)

    @cached_property
    def hull_weights(self) -> np.ndarray:
        """Sum of |amplitude| per distinct frequency; bounds sup|g - g'| per radian of phase."""
        idx = {w: i for i, w in enumerate(self.frequencies)}
        wts = np.zeros(len(idx))
        for s in self.signals:
            for a, w, _ in s.terms:
                wts[idx[w]] += abs(a)
        return wts

    @property
    def needs_slope(self) -> bool:
        return self.kind == "autonomous_even" and bool(getattr(self.even_map, "depends_on_slope", True))

    @property
    def state_independent_rate(self) -> bool:
        """True when f = c(t) u, so the flow is linear and diagonal in Fourier space."""
        return self.kind == "scalar_linear"

    def linear_rate(self, t):
        s, = self.signals
        return eval_signal(s, t) - self.lam

    def __call__(self, t, u, p):
        if self.kind == "scalar_linear":
            return self.linear_rate(t) * u
        if self.kind == "pendulum":
            a, b = (eval_signal(s, t) for s in self.signals)
            return -(a * np.cos(u) + b * np.sin(u)) * np.sin(u)
        return self.even_map.h(u, p * p)

    def partials(self, t, u, p):
        """(df/du, df/dp) at (t, u, p)."""
        if self.kind == "scalar_linear":
            fu = self.linear_rate(t) + 0.0 * u
            return fu, np.zeros_like(fu)
        if self.kind == "pendulum":
            a, b = (eval_signal(s, t) for s in self.signals)
            fu = -(a * np.cos(2 * u) + b * np.sin(2 * u))
            return fu, np.zeros_like(fu)
        q = p * p
        return self.even_map.h_u(u, q) + 0.0 * p, 2.0 * p * self.even_map.h_q(u, q)

    def translate(self, tau: float) -> "ForcingField":
        return translate(self, tau)

    def hull_phase_at(self, times) -> np.ndarray:
        """Hull phases of the translates g*t for each t in ``times``; shape (len(times), n_freq)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return wrap_phase(np.asarray(self.hull_phase) + np.multiply.outer(times, self.frequencies))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "signals": [s.to_dict() for s in self.signals],
             "lam": self.lam, "hull_phase": list(self.hull_phase)}
        if self.even_map is not None:
            d["even_map"] = self.even_map.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ForcingField":
        em = d.get("even_map")
        return cls(d["kind"], tuple(QuasiPeriodicSum.from_dict(s) for s in d.get("signals", [])),
                   lam=d.get("lam", 0.0), even_map=even_map_from_dict(em) if em else None,
                   hull_phase=tuple(d.get("hull_phase", ())))


def scalar_linear(signal: QuasiPeriodicSum, lam: float = 0.0) -> ForcingField:
    return ForcingField("scalar_linear", (signal,), lam=lam)


def pendulum(a: QuasiPeriodicSum, b: QuasiPeriodicSum) -> ForcingField:
    return ForcingField("pendulum", (a, b))


def autonomous_even(h) -> ForcingField:
    """Field f(t,u,p) = h(u, p**2).  ``h`` may be an even-map object or a plain callable."""
    if callable(h) and not hasattr(h, "h_u"):
        h = CallableEvenMap(h)
    return ForcingField("autonomous_even", (), even_map=h)


def zero_field() -> ForcingField:
    return scalar_linear(QuasiPeriodicSum((), (), ()), 0.0)


def translate(fld: ForcingField, tau: float) -> ForcingField:
    """The time-translate g(t, u, p) = f(t + tau, u, p)."""
    hp = wrap_phase(np.asarray(fld.hull_phase) + fld.frequencies * tau)
    return ForcingField(fld.kind, tuple(s.translate(tau) for s in fld.signals), lam=fld.lam,
                        even_map=fld.even_map, hull_phase=tuple(hp))


def _comparable(f1: ForcingField, f2: ForcingField) -> bool:
    if f1.kind != f2.kind or not np.array_equal(f1.frequencies, f2.frequencies):
        return False
    return f1.kind != "autonomous_even" or f1.even_map == f2.even_map


def hull_distance(f1: ForcingField, f2: ForcingField, window: float = 50.0, samples: int = 1001,
                  box: float = 2.0, box_points: int = 5) -> float:
    """Sampled sup of |f1 - f2| over t in [-window, window] and (u, p) in [-box, box]^2."""
    if not _comparable(f1, f2):
        raise IncomparableFieldsError("incomparable fields")
    t = np.linspace(-window, window, samples)
    uu, pp = np.meshgrid(np.linspace(-box, box, box_points), np.linspace(-box, box, box_points))
    uu, pp = uu.ravel(), pp.ravel()
    best = 0.0
    for i in range(0, t.size, 4096):
        tt = t[i:i + 4096, None]
        d = np.abs(f1(tt, uu, pp) - f2(tt, uu, pp))
        best = max(best, float(np.max(d)))
    return best


def reflection_defect(fld: ForcingField, n: int = 10_000, seed: int = 0, scale: float = 10.0) -> float:
    """max |f(t,u,p) - f(t,u,-p)| over ``n`` random points; zero for every built-in kind."""
    rng = np.random.default_rng(seed)
    t, u, p = (rng.uniform(-scale, scale, n) for _ in range(3))
    t = t * 100.0
    return float(np.max(np.abs(fld(t, u, p) - fld(t, u, -p))))
