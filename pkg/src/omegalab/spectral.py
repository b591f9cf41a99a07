"""Fourier pseudospectral discretization of S^1 and the ETDRK4 semiflow.

States live on the uniform grid x_j = 2 pi j / N.  Internally the stepper works
with unnormalized ``np.fft.rfft`` coefficients; :attr:`GridFunction.coeffs`
exposes the normalized ones (``rfft / N``) so that u(x) = sum_k c_k e^{ikx}.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property

import numpy as np

from .errors import BlowUpError
from .forcing import ForcingField

TWO_PI = 2.0 * np.pi
_CONTOUR_POINTS = 32


def grid(N: int) -> np.ndarray:
    return TWO_PI * np.arange(N) / N


def wavenumbers(N: int) -> np.ndarray:
    return np.arange(N // 2 + 1, dtype=float)


def _check_N(N: int):
    if N < 16 or N & (N - 1):
        raise ValueError(f"grid size must be a power of two >= 16, got {N}")


class GridFunction:
    """Real periodic function sampled on N points, with cached spectral coefficients."""

    __slots__ = ("values", "__dict__")

    def __init__(self, values):
        v = np.array(values, dtype=float)
        if v.ndim != 1:
            raise ValueError("GridFunction values must be one-dimensional")
        _check_N(v.size)
        v.setflags(write=False)
        self.values = v

    @classmethod
    def from_callable(cls, fn, N: int) -> "GridFunction":
        return cls(np.broadcast_to(fn(grid(N)), (N,)))

    @classmethod
    def constant(cls, c: float, N: int) -> "GridFunction":
        return cls(np.full(N, float(c)))

    @classmethod
    def from_coeffs(cls, coeffs, N: int) -> "GridFunction":
        """Inverse of :attr:`coeffs` (normalized rfft coefficients)."""
        return cls(np.fft.irfft(np.asarray(coeffs) * N, n=N))

    @property
    def N(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return grid(self.N)

    @cached_property
    def coeffs(self) -> np.ndarray:
        c = np.fft.rfft(self.values) / self.N
        c.setflags(write=False)
        return c

    @cached_property
    def dx(self) -> "GridFunction":
        return deriv_x(self)

    # norms -----------------------------------------------------------------
    def l2(self) -> float:
        return float(np.sqrt(TWO_PI / self.N * np.dot(self.values, self.values)))

    def l2_spectral(self) -> float:
        c = self.coeffs
        w = np.full(c.size, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return float(np.sqrt(TWO_PI * np.sum(w * np.abs(c) ** 2)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def h1(self) -> float:
        return self.l2() + self.dx.l2()

    def c1(self) -> float:
        return self.sup() + self.dx.sup()

    # arithmetic --------------------------------------------------------------
    def _other(self, other):
        return other.values if isinstance(other, GridFunction) else other

    def __add__(self, other):
        return GridFunction(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(-self.values)

    def __call__(self, x):
        return eval_at(self, x)

    def __repr__(self):
        return f"GridFunction(N={self.N}, sup={self.sup():.3e})"


def c1_distance(u: GridFunction, v: GridFunction) -> float:
    return (u - v).c1()


def _nyquist_free(c: np.ndarray, N: int) -> np.ndarray:
    c = np.array(c)
    c[..., N // 2] = 0.0
    return c


def deriv_x(u: GridFunction, order: int = 1) -> GridFunction:
    """Spectral derivative; the Nyquist mode is dropped for odd orders."""
    N = u.N
    c = u.coeffs * (1j * wavenumbers(N)) ** order
    if order % 2:
        c = _nyquist_free(c, N)
    return GridFunction.from_coeffs(c, N)


def eval_at(u: GridFunction, x, deriv: int = 0):
    """Evaluate the trigonometric interpolant (or its ``deriv``-th derivative) at arbitrary x."""
    x = np.asarray(x, dtype=float)
    N = u.N
    k = wavenumbers(N)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    c = u.coeffs * w * (1j * k) ** deriv
    if deriv % 2:
        c = _nyquist_free(c, N)
    return np.real(np.exp(1j * np.multiply.outer(x, k)) @ c)


def refine(u: GridFunction, M: int) -> np.ndarray:
    """Values of the interpolant on an M-point grid (M >= N), by zero padding.

    The Nyquist coefficient is halved because mode N/2 is no longer Nyquist on the finer grid.
    """
    N = u.N
    if M < N:
        raise ValueError("refine only to finer grids")
    c = np.zeros(M // 2 + 1, dtype=complex)
    c[: N // 2 + 1] = u.coeffs
    if M > N:
        c[N // 2] *= 0.5
    return np.fft.irfft(c * M, n=M)


def reflect(u: GridFunction, a: float) -> GridFunction:
    """rho_a u(x) = u(2a - x), exactly in spectral space."""
    k = wavenumbers(u.N)
    return GridFunction.from_coeffs(np.conj(u.coeffs) * np.exp(-2j * k * a), u.N)


def translate_space(u: GridFunction, a: float) -> GridFunction:
    """sigma_a u(x) = u(x + a)."""
    k = wavenumbers(u.N)
    return GridFunction.from_coeffs(u.coeffs * np.exp(1j * k * a), u.N)


def max_value(u: GridFunction, newton_steps: int = 3) -> tuple[float, float]:
    """max_x u(x) and a maximizer, polished by Newton on u_x of the interpolant."""
    j = int(np.argmax(u.values))
    x = float(u.x[j])
    h = TWO_PI / u.N
    best, xbest = float(u.values[j]), x
    for _ in range(newton_steps):
        d1 = float(eval_at(u, x, 1))
        d2 = float(eval_at(u, x, 2))
        if d2 >= 0 or not np.isfinite(d1 / d2):
            break
        xn = x - d1 / d2
        if abs(xn - u.x[j]) > h:
            break
        x = xn
    val = float(eval_at(u, x))
    if val > best:
        best, xbest = val, x
    return best, float(np.mod(xbest, TWO_PI))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    N: int = 64
    dt: float = 1e-3
    dealias: bool | None = None
    blowup_threshold: float = 1e6
    qr_interval: int = 10
    spectral_floor: float = 0.0

    def __post_init__(self):
        _check_N(self.N)
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def resolved_dealias(self, fld: ForcingField) -> bool:
        if self.dealias is None:
            return not fld.state_independent_rate
        return bool(self.dealias)

    def to_dict(self) -> dict:
        return {"N": self.N, "dt": self.dt, "dealias": self.dealias,
                "blowup_threshold": self.blowup_threshold, "qr_interval": self.qr_interval,
                "spectral_floor": self.spectral_floor}


def etdrk4_coefficients(L: np.ndarray, h: float, M: int = _CONTOUR_POINTS):
    """E, E2, Q, f1, f2, f3 for a diagonal linear part, via contour integrals."""
    E = np.exp(h * L)
    E2 = np.exp(h * L / 2)
    r = np.exp(1j * np.pi * (np.arange(1, M + 1) - 0.5) / M)
    LR = h * L[:, None] + r[None, :]
    Q = h * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = h * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR ** 2)) / LR ** 3, axis=1))
    f2 = h * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR ** 3, axis=1))
    f3 = h * np.real(np.mean((-4 - 3 * LR - LR ** 2 + np.exp(LR) * (4 - LR)) / LR ** 3, axis=1))
    return E, E2, Q, f1, f2, f3


class Stepper:
    """ETDRK4 for u_t = u_xx + f(t, u, u_x) acting on rows of rfft coefficients.

    One stepper per worker; it holds the precomputed coefficient arrays only.
    ``flip_diffusion`` exists for fault-injection tests.
    """

    def __init__(self, fld: ForcingField, config: SolverConfig, dt: float | None = None,
                 flip_diffusion: bool = False):
        self.field = fld
        self.config = config
        self.N = config.N
        self.dt = float(config.dt if dt is None else dt)
        k = wavenumbers(self.N)
        self.ik = 1j * k
        self.ik[-1] = 0.0
        L = -k ** 2
        if flip_diffusion:
            L = -L
        self.L = L
        self.E, self.E2, self.Q, self.f1, self.f2, self.f3 = etdrk4_coefficients(L, self.dt)
        mask = np.ones(k.size)
        if config.resolved_dealias(fld):
            mask[k > self.N / 3] = 0.0
        mask[-1] = 0.0
        self.mask = mask
        self.fast = fld.state_independent_rate

    # nonlinear terms ----------------------------------------------------------
    def nonlinear(self, v: np.ndarray, t: float) -> np.ndarray:
        if self.fast:
            return self.field.linear_rate(t) * v
        N = self.N
        u = np.fft.irfft(v, n=N)
        ux = np.fft.irfft(self.ik * v, n=N) if self.field.needs_slope else np.zeros_like(u)
        return self.mask * np.fft.rfft(self.field(t, u, ux))

    def nonlinear_joint(self, v: np.ndarray, W: np.ndarray, t: float):
        """Nonlinear term for the state row ``v`` (1, K) and the tangent rows ``W`` (m, K)."""
        if self.fast:
            c = self.field.linear_rate(t)
            return c * v, c * W
        N = self.N
        need_p = self.field.needs_slope
        stack = np.concatenate([v, W], axis=0)
        vals = np.fft.irfft(stack, n=N)
        u, Wv = vals[:1], vals[1:]
        if need_p:
            ders = np.fft.irfft(self.ik * stack, n=N)
            ux, Wx = ders[:1], ders[1:]
        else:
            ux = np.zeros_like(u)
        fu, fp = self.field.partials(t, u, ux)
        lin = fu * Wv
        if need_p:
            lin = lin + fp * Wx
        out = np.fft.rfft(np.concatenate([self.field(t, u, ux), lin], axis=0))
        out *= self.mask
        return out[:1], out[1:]

    def linear_multipliers(self, t_start: float, n: int) -> np.ndarray:
        """Per-step diagonal ETDRK4 maps for f = c(t) u, shape (n, K), steps from t_start.

        For such fields every stage is diagonal in Fourier space, so a step is
        exactly ``v -> G[i] * v`` and long runs reduce to cumulative products.
        """
        h = self.dt
        ts = t_start + h * np.arange(n)
        c0 = self.field.linear_rate(ts)[:, None]
        ch = self.field.linear_rate(ts + h / 2)[:, None]
        c1 = self.field.linear_rate(ts + h)[:, None]
        E, E2, Q = self.E, self.E2, self.Q
        a = E2 + Q * c0
        Na = ch * a
        b = E2 + Q * Na
        Nb = ch * b
        c = E2 * a + Q * (2 * Nb - c0)
        return E + c0 * self.f1 + 2 * (Na + Nb) * self.f2 + c1 * c * self.f3

    # steps -------------------------------------------------------------------
    def step_hat(self, v: np.ndarray, t: float) -> np.ndarray:
        h = self.dt
        E, E2, Q = self.E, self.E2, self.Q
        Nv = self.nonlinear(v, t)
        a = E2 * v + Q * Nv
        Na = self.nonlinear(a, t + h / 2)
        b = E2 * v + Q * Na
        Nb = self.nonlinear(b, t + h / 2)
        c = E2 * a + Q * (2 * Nb - Nv)
        Nc = self.nonlinear(c, t + h)
        out = E * v + Nv * self.f1 + 2 * (Na + Nb) * self.f2 + Nc * self.f3
        if not self.fast:
            out[..., -1] = 0.0
        return out

    def step_joint(self, v: np.ndarray, W: np.ndarray, t: float):
        """ETDRK4 on the state and its variational equation together.

        Coefficients are taken at the stage states, so the tangent update is the
        exact derivative of the discrete state map.
        """
        h = self.dt
        E, E2, Q = self.E, self.E2, self.Q
        Nv, NW = self.nonlinear_joint(v, W, t)
        a, aW = E2 * v + Q * Nv, E2 * W + Q * NW
        Na, NaW = self.nonlinear_joint(a, aW, t + h / 2)
        b, bW = E2 * v + Q * Na, E2 * W + Q * NaW
        Nb, NbW = self.nonlinear_joint(b, bW, t + h / 2)
        c, cW = E2 * a + Q * (2 * Nb - Nv), E2 * aW + Q * (2 * NbW - NW)
        Nc, NcW = self.nonlinear_joint(c, cW, t + h)
        vn = E * v + Nv * self.f1 + 2 * (Na + Nb) * self.f2 + Nc * self.f3
        Wn = E * W + NW * self.f1 + 2 * (NaW + NbW) * self.f2 + NcW * self.f3
        if not self.fast:
            vn[..., -1] = 0.0
            Wn[..., -1] = 0.0
        return vn, Wn

    def check_blowup(self, v: np.ndarray, t: float):
        """Cheap sup-norm bound from coefficients; exact check only when the bound trips."""
        bound = (np.abs(v[..., 0]) + 2 * np.sum(np.abs(v[..., 1:]), axis=-1)) / self.N
        thr = self.config.blowup_threshold
        if not np.all(np.isfinite(bound)):
            raise BlowUpError(t, float("inf"))
        if np.any(bound >= thr):
            sup = float(np.max(np.abs(np.fft.irfft(v, n=self.N))))
            if sup >= thr:
                raise BlowUpError(t, sup)


def clean_hat(v: np.ndarray, floor: float) -> np.ndarray:
    """Zero coefficients below ``floor`` times the row's largest one.

    Transforms leave roundoff in modes that are exactly absent; when such a mode
    is linearly unstable that roundoff would grow without bound.
    """
    if floor <= 0:
        return v
    v = np.array(v)
    big = np.max(np.abs(v), axis=-1, keepdims=True)
    v[np.abs(v) < floor * big] = 0.0
    return v


def to_hat(values: np.ndarray) -> np.ndarray:
    return np.fft.rfft(values, axis=-1)


def from_hat(v: np.ndarray, N: int) -> np.ndarray:
    return np.fft.irfft(v, n=N, axis=-1)


def step(u: GridFunction, fld: ForcingField, t: float, dt: float,
         config: SolverConfig | None = None) -> GridFunction:
    """One ETDRK4 step of size dt from time t."""
    config = config or SolverConfig(N=u.N, dt=dt)
    if u.sup() >= config.blowup_threshold:
        raise BlowUpError(t, u.sup())
    st = Stepper(fld, replace(config, N=u.N), dt=dt)
    v = st.step_hat(to_hat(u.values)[None, :], t)
    st.check_blowup(v, t + dt)
    return GridFunction(from_hat(v[0], u.N))


# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled orbit: times (S,), grid values (S, N), plus the field and solver settings."""

    times: np.ndarray
    states: np.ndarray
    field: ForcingField
    config: SolverConfig
    stride: int = 1
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def N(self) -> int:
        return self.states.shape[1]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.t_end - self.t0

    @property
    def step_dt(self) -> float:
        return float(self.meta.get("dt_effective", self.config.dt))

    def state(self, i: int) -> GridFunction:
        return GridFunction(self.states[i])

    def final(self) -> GridFunction:
        return self.state(-1)

    @cached_property
    def hull_phases(self) -> np.ndarray:
        return self.field.hull_phase_at(self.times)

    def derivatives(self) -> np.ndarray:
        """u_x at every sample, shape (S, N)."""
        ik = 1j * wavenumbers(self.N)
        ik[-1] = 0.0
        return np.fft.irfft(ik * np.fft.rfft(self.states, axis=1), n=self.N, axis=1)

    def window(self, t_lo: float, t_hi: float = np.inf) -> "Trajectory":
        sel = (self.times >= t_lo - 1e-9) & (self.times <= t_hi + 1e-9)
        return Trajectory(self.times[sel], self.states[sel], self.field, self.config,
                          self.stride, dict(self.meta))

    def to_csv(self, path, spectral: bool = False):
        """Columnar export; grid values or (re_k, im_k) pairs, all in %.12e."""
        N = self.N
        if spectral:
            header = ["t"] + [f"{p}_{k}" for k in range(N // 2 + 1) for p in ("re", "im")]
            c = np.fft.rfft(self.states, axis=1) / N
            body = np.empty((len(self), 2 * c.shape[1]))
            body[:, 0::2] = c.real
            body[:, 1::2] = c.imag
        else:
            header = ["t"] + [f"x_{j}" for j in range(N)]
            body = self.states
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, row in zip(self.times, body):
                w.writerow([f"{t:.12e}"] + [f"{x:.12e}" for x in row])


def _plan_steps(t_end: float, dt: float) -> tuple[int, float]:
    n = int(np.ceil(t_end / dt - 1e-9))
    n = max(n, 1)
    return n, t_end / n


def evolve_ensemble(u0s, fld: ForcingField, t_end: float, config: SolverConfig,
                    sample_stride: int = 1, t0: float = 0.0, flip_diffusion: bool = False
                    ) -> list[Trajectory]:
    """Evolve several initial data together (one batched stepper), same sample times."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    rows = np.array([u.values if isinstance(u, GridFunction) else np.asarray(u, float) for u in u0s])
    B, N = rows.shape
    config = replace(config, N=N) if config.N != N else config
    n, h = _plan_steps(t_end, config.dt)
    n_steps = n
    st = Stepper(fld, config, dt=h, flip_diffusion=flip_diffusion)
    v = clean_hat(to_hat(rows), config.spectral_floor)
    if not st.fast:
        v[:, -1] = 0.0
    sample_steps = list(range(0, n + 1, sample_stride))
    if sample_steps[-1] != n:
        sample_steps.append(n)
    out = np.empty((len(sample_steps), B, N))
    out[0] = rows
    si = 1
    if st.fast:
        _evolve_linear(st, v, t0, sample_steps, out)
        n = 0
    for i in range(n):
        t = t0 + i * h
        v = st.step_hat(v, t)
        if i + 1 == sample_steps[si]:
            st.check_blowup(v, t0 + (i + 1) * h)
            out[si] = from_hat(v, N)
            si += 1
    times = t0 + np.array(sample_steps, dtype=float) * h
    meta = {"dt_effective": h, "steps": n_steps}
    return [Trajectory(times.copy(), out[:, b].copy(), fld, config, sample_stride, dict(meta))
            for b in range(B)]


def _evolve_linear(st: Stepper, v: np.ndarray, t0: float, sample_steps, out, block: int = 8192):
    """Fast path for f = c(t) u: chained products of per-step diagonal multipliers."""
    N, h = st.N, st.dt
    done = 0
    for si in range(1, len(sample_steps)):
        target = sample_steps[si]
        while done < target:
            n = min(block, target - done)
            G = st.linear_multipliers(t0 + done * h, n)
            with np.errstate(over="ignore", invalid="ignore"):
                v = v * np.prod(G, axis=0)
            done += n
        st.check_blowup(v, t0 + done * h)
        out[si] = from_hat(v, N)
    return v


def evolve(u0: GridFunction, fld: ForcingField, t_end: float, config: SolverConfig,
           sample_stride: int = 1, t0: float = 0.0, flip_diffusion: bool = False) -> Trajectory:
    """Evolve from t0 to t0 + t_end, sampling every ``sample_stride`` steps and at the end."""
    return evolve_ensemble([u0], fld, t_end, config, sample_stride, t0, flip_diffusion)[0]
