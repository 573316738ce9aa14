"""State, operators, norms and closed-form constants of the dyadic model.

The model is the infinite system

    u_n' = -nu lam^(2 alpha n) u_n + lam^n u_{n-1}^2 - lam^(n+1) u_n u_{n+1} + g_n,

with u_0 = 0, truncated at N modes by setting u_{N+1} = 0.  Mode indices are
1-based in the formulas and 0-based in the arrays (``u[k]`` holds u_{k+1}).
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AdmissibilityError, DimensionError, UnsupportedConversionError

# largest x with exp(x) finite in float64
_LOG_MAX = math.log(np.finfo(np.float64).max)


@dataclass(frozen=True)
class ModelParams:
    """Static problem data.

    ``force`` may be shorter than ``n_modes``; it is zero-padded (and
    truncated) to the model length by :attr:`g`.
    """

    lam: float = 2.0
    nu: float = 1.0
    alpha: float = 0.5
    force: tuple[float, ...] = (1.0,)
    n_modes: int = 32

    def __post_init__(self):
        object.__setattr__(self, "force", tuple(float(x) for x in np.atleast_1d(self.force)))
        if not self.lam > 1:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValueError(f"n_modes must be a positive integer, got {self.n_modes}")
        object.__setattr__(self, "n_modes", int(self.n_modes))
        if any(not math.isfinite(x) or x < 0 for x in self.force):
            raise ValueError("force entries must be finite and nonnegative")

    @cached_property
    def g(self) -> np.ndarray:
        out = np.zeros(self.n_modes)
        k = min(len(self.force), self.n_modes)
        out[:k] = self.force[:k]
        out.flags.writeable = False
        return out

    @cached_property
    def log_lam(self) -> float:
        return math.log(self.lam)

    @cached_property
    def dissipation_rates(self) -> np.ndarray:
        """nu * lam^(2 alpha n), the decay rate of each mode (inf on overflow)."""
        with np.errstate(over="ignore"):
            out = self.nu * np.power(self.lam, 2 * self.alpha * self.index)
        out.flags.writeable = False
        return out

    @cached_property
    def index(self) -> np.ndarray:
        out = np.arange(1, self.n_modes + 1, dtype=float)
        out.flags.writeable = False
        return out

    @cached_property
    def _lam_n(self) -> np.ndarray:
        return weights(self.lam, 1.0, self.n_modes + 1)

    def with_modes(self, n_modes: int) -> "ModelParams":
        return ModelParams(self.lam, self.nu, self.alpha, self.force, n_modes)

    def replace(self, **changes) -> "ModelParams":
        kw = dict(lam=self.lam, nu=self.nu, alpha=self.alpha, force=self.force, n_modes=self.n_modes)
        kw.update(changes)
        return ModelParams(**kw)


@dataclass(frozen=True, eq=False)
class State:
    t: float
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 1:
            raise DimensionError("state vector must be one-dimensional")
        if not np.all(np.isfinite(u)):
            raise ValueError("state contains non-finite amplitudes")
        u.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n_modes(self) -> int:
        return self.u.size


@dataclass(frozen=True)
class ConstantSet:
    c_b_paper: float
    c_b_impl: float
    epsilon: float
    a_gamma: float
    c1: float
    c2: float
    c3: float
    m_gamma: float
    c_riccati: float
    gamma: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# helpers


def weights(lam: float, exponent: float, n: int) -> np.ndarray:
    """lam^(exponent * k) for k = 1..n, raising OverflowError instead of inf."""
    k = np.arange(1, n + 1, dtype=float)
    if n and exponent * math.log(lam) * n > _LOG_MAX:
        raise OverflowError(
            f"weight lam^({exponent}*n) overflows float64 at n={n} (lam={lam})"
        )
    # pow rather than exp(log): exact whenever the power is representable
    return np.power(float(lam), exponent * k)


def _vec(u, params: ModelParams | None = None) -> np.ndarray:
    u = np.asarray(u.u if isinstance(u, State) else u, dtype=float)
    if u.ndim != 1:
        raise DimensionError("expected a one-dimensional vector")
    if params is not None and u.size != params.n_modes:
        raise DimensionError(f"vector has {u.size} entries, model has {params.n_modes} modes")
    return u


def inner(u, v) -> float:
    """l2 scalar product (u, v)."""
    u, v = _vec(u), _vec(v)
    if u.size != v.size:
        raise DimensionError(f"length mismatch: {u.size} vs {v.size}")
    return float(np.dot(u, v))


def _shift_down(u: np.ndarray) -> np.ndarray:
    """(u_{n-1})_n with u_0 = 0."""
    out = np.empty_like(u)
    out[0] = 0.0
    out[1:] = u[:-1]
    return out


def _shift_up(u: np.ndarray) -> np.ndarray:
    """(u_{n+1})_n with u_{N+1} = 0."""
    out = np.empty_like(u)
    out[-1] = 0.0
    out[:-1] = u[1:]
    return out


# ---------------------------------------------------------------------------
# operators


def bilinear_b(u, v, params: ModelParams) -> np.ndarray:
    """(B(u,v))_n = -lam^n u_{n-1} v_{n-1} + lam^(n+1) u_n v_{n+1}, truncated."""
    u, v = _vec(u, params), _vec(v, params)
    lam_n = params._lam_n
    return -lam_n[:-1] * _shift_down(u) * _shift_down(v) + lam_n[1:] * u * _shift_up(v)


def apply_a(u, params: ModelParams, power: float = 1.0) -> np.ndarray:
    """(A^p u)_n = lam^(2 alpha p n) u_n."""
    if power < 0:
        raise ValueError("power must be nonnegative")
    u = _vec(u, params)
    return weights(params.lam, 2 * params.alpha * power, u.size) * u


def galerkin_rhs(s, params: ModelParams, nonlinear: bool = True) -> np.ndarray:
    """du/dt of the N-mode Galerkin system, i.e. g - nu A u - B(u, u)."""
    u = _vec(s, params)
    out = params.g - params.dissipation_rates * u
    if nonlinear:
        out = out - bilinear_b(u, u, params)
    return out


# ---------------------------------------------------------------------------
# norms and metrics


def norm_gamma(u, gamma: float, params: ModelParams) -> float:
    """||u||_gamma = (sum lam^(2 gamma n) u_n^2)^(1/2).

    Weights beyond the float64 range are handled by accumulating in log space;
    an OverflowError is raised only if the norm itself is not representable.
    """
    u = _vec(u)
    n = u.size
    if n == 0:
        return 0.0
    top = 2 * gamma * params.log_lam * n
    if top < 600:
        val = math.sqrt(float(np.dot(weights(params.lam, 2 * gamma, n), u * u)))
        if math.isfinite(val):
            return val
    nz = np.nonzero(u)[0]
    if nz.size == 0:
        return 0.0
    logs = 2 * gamma * params.log_lam * (nz + 1.0) + 2 * np.log(np.abs(u[nz]))
    m = logs.max()
    log_norm = 0.5 * (m + math.log(np.exp(logs - m).sum()))
    if log_norm > _LOG_MAX:
        raise OverflowError(f"||u||_{gamma} exceeds float64 range (log = {log_norm:.1f})")
    return math.exp(log_norm)


def energy(u) -> float:
    """|u|^2."""
    u = _vec(u)
    return float(np.dot(u, u))


def enstrophy(u, params: ModelParams) -> float:
    """||u||^2 = ||u||_alpha^2."""
    return norm_gamma(u, params.alpha, params) ** 2


def weak_distance(u, v) -> float:
    """d_w(u, v) = sum 2^(-n^2) |u_n - v_n| / (1 + |u_n - v_n|)."""
    u, v = _vec(u), _vec(v)
    n = max(u.size, v.size)
    d = np.zeros(n)
    d[: u.size] += u
    d[: v.size] -= v
    d = np.abs(d)
    k = np.arange(1, n + 1)
    return float(np.sum(np.ldexp(1.0, -(k * k)) * d / (1 + d)))


# ---------------------------------------------------------------------------
# trilinear forms


def trilinear_b_au(u, params: ModelParams, method: str = "closed") -> float:
    """(B(u,u), Au).

    ``method="closed"`` uses -sum lam^(n+1) (lam^(2a(n+1)) - lam^(2an)) u_n^2 u_{n+1};
    ``method="inner"`` takes the scalar product directly.
    """
    u = _vec(u, params)
    if method == "inner":
        return inner(bilinear_b(u, u, params), apply_a(u, params))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    n = u.size
    if n < 2:
        return 0.0
    a = params.alpha
    coef = (
        weights(params.lam, 1.0 + 2 * a, n - 1)
        * params.lam
        * math.expm1(2 * a * params.log_lam)
    )
    return -float(np.sum(coef * u[:-1] ** 2 * u[1:]))


def _c1(lam: float, gamma: float) -> float:
    return lam * math.expm1(2 * gamma * math.log(lam))


def trilinear_b_agamma(u, gamma: float, params: ModelParams, method: str = "closed") -> float:
    """(B(u,u), A^(gamma/alpha) u) = -c1 sum lam^((1+2 gamma) n) u_n^2 u_{n+1}."""
    u = _vec(u, params)
    if method == "inner":
        return inner(bilinear_b(u, u, params), apply_a(u, params, gamma / params.alpha))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    n = u.size
    if n < 2:
        return 0.0
    w = weights(params.lam, 1 + 2 * gamma, n - 1)
    return -_c1(params.lam, gamma) * float(np.sum(w * u[:-1] ** 2 * u[1:]))


# ---------------------------------------------------------------------------
# constants


def gamma_interval(alpha: float) -> tuple[float, float]:
    """Open interval of admissible gamma for the blow-up constants."""
    return 0.0, min(1.0 / 3.0, 1.0 - 3.0 * alpha)


def default_gamma(alpha: float) -> float:
    return gamma_interval(alpha)[1] / 4


def constants(params: ModelParams, gamma: float, strict: bool = True) -> ConstantSet:
    """All closed-form constants for ``(params, gamma)``.

    The blow-up fields (epsilon onwards) need alpha < 1/3 and
    0 < gamma < min(1/3, 1 - 3 alpha).  Outside that range a strict call raises
    AdmissibilityError; a non-strict call still evaluates every formula that is
    defined (c1, c2, c3 need gamma > 0; A, M and c need epsilon > 0) and leaves
    the rest NaN.
    """
    lam, a, nu = params.lam, params.alpha, params.nu
    ll = params.log_lam
    c_b_paper = lam**a - lam**-a
    c_b_impl = lam ** (1 + a) - lam ** (1 - a)

    lo, hi = gamma_interval(a)
    if strict and not (a < 1.0 / 3.0 and lo < gamma < hi):
        if a >= 1.0 / 3.0:
            raise AdmissibilityError(f"blow-up constants need alpha < 1/3, got alpha={a}")
        raise AdmissibilityError(
            f"gamma={gamma} outside the admissible interval ({lo}, {hi:.6g}) for alpha={a}"
        )

    nan = float("nan")
    eps = 2 - 6 * a - 2 * gamma
    a_gamma = math.sqrt(math.expm1(eps * ll)) if eps > 0 else nan
    c1 = c2 = c3 = m_gamma = c_riccati = nan
    if gamma > 0:
        c1 = _c1(lam, gamma)
        c2 = 2 * c1 / (2 * lam + lam**2 / 2 + lam ** (1 - 2 * gamma))
        c3 = (1 + lam ** (2 * a)) * c2
        if eps > 0:
            m_gamma = 8 * nu * (2 + c3) * math.sqrt(1 + c2) / (a_gamma * lam * c2)
            c_riccati = a_gamma * lam * c2 / 8
    return ConstantSet(
        c_b_paper, c_b_impl, eps, a_gamma, c1, c2, c3, m_gamma, c_riccati, float(gamma)
    )


def lyapunov_h(u, gamma: float, consts: ConstantSet, params: ModelParams) -> float:
    """H = ||u||_gamma^2 + c2 sum lam^(2 gamma n) u_n u_{n+1}."""
    if consts.gamma != gamma:
        raise ValueError(f"constants were built for gamma={consts.gamma}, not {gamma}")
    u = _vec(u)
    cross = 0.0
    if u.size > 1:
        cross = float(np.sum(weights(params.lam, 2 * gamma, u.size - 1) * u[:-1] * u[1:]))
    return norm_gamma(u, gamma, params) ** 2 + consts.c2 * cross


# ---------------------------------------------------------------------------
# wavelet coefficients <-> model variables (lam = 2 only)


def wavelet_to_model(v, t_wavelet: float, nu: float, lam: float = 2.0) -> tuple[State, dict]:
    """Map wavelet amplitudes v_j(t_w) to model amplitudes u_j(8 t_w) = 2^(3j/2) v_j(t_w).

    Returns the model state and the model parameters implied by the change of
    variables (lam = 2, viscosity nu/8).
    """
    if lam != 2:
        raise UnsupportedConversionError(f"the wavelet reduction fixes lambda = 2, got {lam}")
    v = _vec(v)
    j = np.arange(1, v.size + 1)
    u = np.exp2(1.5 * j) * v
    return State(8.0 * t_wavelet, u), {"lam": 2.0, "nu": nu / 8.0}


def model_to_wavelet(s: State, nu_tilde: float) -> tuple[np.ndarray, float, float]:
    """Inverse of :func:`wavelet_to_model`: returns (v, t_wavelet, nu)."""
    j = np.arange(1, s.u.size + 1)
    return np.exp2(-1.5 * j) * s.u, s.t / 8.0, 8.0 * nu_tilde
