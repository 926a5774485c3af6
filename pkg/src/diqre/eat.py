"""Finite-size entropy bounds from the entropy accumulation theorem.

The certified smooth min-entropy of a non-aborted run is

    n (1 - gamma)(A - B lambda . (omega - delta_sgn)) - n (eps_V + eps_K) - eps_Omega

for the round-by-round min-tradeoff function, where ``delta_sgn`` shifts each
score by its confidence width in the direction that lowers the bound.  The
blocked variant replaces rounds by ``m = n / s_bar`` blocks with alphabet
``|AB|^s_max``.  The older blocked bound with a single square-root error term
is kept for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .digp import DualCertificate
from .game import as_vector
from .mtf import MinTradeoff

LN2 = np.log(2.0)
BETA_GRID = np.logspace(-12, np.log10(1 - 1e-6), 200)


@dataclass(frozen=True)
class ProtocolParams:
    n: float
    gamma: float
    delta: np.ndarray
    eps_s: float = 1e-8
    eps_eat: float = 1e-8
    eps_ext: float = 1e-8
    ell_ext: float = 0.0
    ab_size: int = 4

    def __post_init__(self):
        object.__setattr__(self, "delta", np.atleast_1d(np.asarray(self.delta, dtype=float)))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        for name in ("eps_s", "eps_eat"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.eps_ext <= 0 or self.ell_ext < 0 or self.ab_size < 1:
            raise ValueError("eps_ext must be positive, ell_ext nonnegative and ab_size at least 1")
        if np.any(self.delta < 0):
            raise ValueError("confidence widths must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "n": self.n, "gamma": self.gamma, "delta": self.delta.tolist(), "eps_s": self.eps_s,
            "eps_eat": self.eps_eat, "eps_ext": self.eps_ext, "ell_ext": self.ell_ext, "ab_size": self.ab_size,
        }


@dataclass(frozen=True)
class RateReport:
    beta: float
    eps_v: float
    eps_k: float
    eps_omega: float
    entropy_bound_bits: float
    rate_per_round: float
    asymptotic_rate: float
    output_length: int
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "beta", "eps_v", "eps_k", "eps_omega", "entropy_bound_bits", "rate_per_round",
            "asymptotic_rate", "output_length")}
        d.update(self.extra)
        return d


class InvalidCorner(ValueError):
    """The worst accepted score distribution leaves the certificate's range."""


def delta_sgn(delta, lam) -> np.ndarray:
    """``delta(c) * sgn(-lambda(c))`` componentwise."""
    delta, lam = np.asarray(delta, float), np.asarray(lam, float)
    if delta.shape != lam.shape:
        raise ValueError("delta and lambda lengths differ")
    return delta * np.sign(-lam)


def _alphabet_bits(f: MinTradeoff, ab_size: int) -> float:
    return f.s_max * math.log2(ab_size) if f.variant == "blocked" else math.log2(ab_size)


def error_terms(beta, f: MinTradeoff, ab_size: int, eps_eat: float = 1e-8, eps_s: float = 1e-8):
    """``(eps_V, eps_K, eps_Omega)`` for one or many ``beta`` in (0, 1)."""
    beta = np.asarray(beta, dtype=float)
    if np.any((beta <= 0) | (beta >= 1)):
        raise ValueError("beta must lie in (0, 1)")
    L = _alphabet_bits(f, ab_size)
    spread = f.fmax - f.fmin_bound
    # log2(2 |AB|^2 + 1) and ln(2^(L + spread) + e^2) without overflow
    log_term = np.logaddexp2(0.0, 1.0 + 2.0 * L)
    eps_v = beta * LN2 / 2 * (log_term + np.sqrt(f.fvar_bound + 2.0)) ** 2
    ln_inner = np.logaddexp((L + spread) * LN2, 2.0)
    with np.errstate(over="ignore"):
        eps_k = beta ** 2 / (6 * (1 - beta) ** 3 * LN2) * np.exp(beta * (L + spread) * LN2) * ln_inner ** 3
    eps_omega = (1.0 - 2.0 * math.log2(eps_eat * eps_s)) / beta
    if eps_v.ndim == 0:
        return float(eps_v), float(eps_k), float(eps_omega)
    return eps_v, eps_k, eps_omega


def corner_value(f: MinTradeoff, omega, delta) -> float:
    """``lambda . (omega - delta_sgn)``, the worst accepted score distribution."""
    omega, delta = as_vector(omega), np.asarray(delta, float)
    if omega.shape != delta.shape or omega.shape != f.lam.shape:
        raise ValueError("omega, delta and lambda lengths differ")
    if np.any(delta >= omega) and np.any(omega > 0):
        bad = np.nonzero(delta >= omega)[0]
        if np.any(omega[bad] > 0) or np.any(delta[bad] > 0):
            raise ValueError("each confidence width must be below its score frequency")
    value = float(f.lam @ (omega - delta_sgn(delta, f.lam)))
    if not 0.0 < value <= 1.0:
        raise InvalidCorner(f"invalid corner: lambda . (omega - delta_sgn) = {value!r} is outside (0, 1]")
    return value


def _invalid_report(params: ProtocolParams, f: MinTradeoff, omega, reason: str) -> RateReport:
    try:
        asym = asymptotic_rate(f.cert, omega)
    except ValueError:
        asym = float("nan")
    return RateReport(
        beta=float("nan"), eps_v=float("nan"), eps_k=float("nan"), eps_omega=float("nan"),
        entropy_bound_bits=0.0, rate_per_round=0.0, asymptotic_rate=asym,
        output_length=0, extra={"variant": f.variant, "invalid_corner": reason},
    )


def _entropy(params: ProtocolParams, f: MinTradeoff, value: float, beta):
    eps_v, eps_k, eps_omega = error_terms(beta, f, params.ab_size, params.eps_eat, params.eps_s)
    units = params.n / f.s_bar
    first = params.n * (1 - f.gamma) * (f.A_v - f.B_v * value)
    with np.errstate(over="ignore"):
        return first - units * (eps_v + eps_k) - eps_omega, (eps_v, eps_k, eps_omega)


def _check_gamma(params: ProtocolParams, f: MinTradeoff):
    if not math.isclose(params.gamma, f.gamma, rel_tol=1e-12):
        raise ValueError("min-tradeoff function built for a different gamma")


def certified_entropy(params: ProtocolParams, f: MinTradeoff, omega, beta: float) -> RateReport:
    """Smooth min-entropy bound of a non-aborted run at a fixed ``beta``.

    An invalid corner gives a zero report flagged with ``extra["invalid_corner"]``.
    """
    _check_gamma(params, f)
    try:
        value = corner_value(f, omega, params.delta)
    except InvalidCorner as exc:
        return _invalid_report(params, f, omega, str(exc))
    h, (eps_v, eps_k, eps_omega) = _entropy(params, f, value, float(beta))
    return _report(params, f, omega, float(beta), h, eps_v, eps_k, eps_omega)


def _report(params, f, omega, beta, h, eps_v, eps_k, eps_omega) -> RateReport:
    ell = max(0, math.floor(h - params.ell_ext)) if np.isfinite(h) else 0
    return RateReport(
        beta=beta, eps_v=float(eps_v), eps_k=float(eps_k), eps_omega=float(eps_omega),
        entropy_bound_bits=float(h), rate_per_round=float(h / params.n) if params.n else float("nan"),
        asymptotic_rate=asymptotic_rate(f.cert, omega), output_length=int(ell),
        extra={"variant": f.variant},
    )


def optimize_beta(params: ProtocolParams, f: MinTradeoff, omega) -> float:
    """``beta`` maximizing the certified entropy: log grid, then golden section in log-beta."""
    _check_gamma(params, f)
    value = corner_value(f, omega, params.delta)
    h, _ = _entropy(params, f, value, BETA_GRID)
    h = np.where(np.isfinite(h), h, -np.inf)
    i = int(np.argmax(h))
    best_beta, best_h = float(BETA_GRID[i]), float(h[i])
    if 0 < i < len(BETA_GRID) - 1:
        logs = np.log(BETA_GRID)

        def neg(t):
            val, _ = _entropy(params, f, value, float(np.exp(t)))
            return -val if np.isfinite(val) else np.inf

        res = optimize.minimize_scalar(neg, bracket=(logs[i - 1], logs[i], logs[i + 1]), method="golden",
                                       options={"xtol": 1e-10})
        if res.success and -res.fun > best_h and 0 < np.exp(res.x) < 1:
            best_beta = float(np.exp(res.x))
    return best_beta


def certified_rate(params: ProtocolParams, f: MinTradeoff, omega) -> RateReport:
    """Certified entropy at the optimized ``beta``."""
    try:
        beta = optimize_beta(params, f, omega)
    except InvalidCorner as exc:
        return _invalid_report(params, f, omega, str(exc))
    return certified_entropy(params, f, omega, beta)


def asymptotic_rate(cert: DualCertificate, omega, gamma: float = 0.0) -> float:
    """``-(1 - gamma) log2(lambda . omega)``; the rate as ``n`` grows and ``delta``, ``gamma`` vanish."""
    value = cert.value(omega)
    # certificates are repaired to solver accuracy, so allow that much above 1
    if not 0.0 < value <= 1.0 + 1e-6:
        raise ValueError(f"lambda . omega = {value!r} is outside (0, 1]")
    return float(-(1 - gamma) * np.log2(min(value, 1.0)))


def completeness_error(n: float, gamma: float, omega, delta) -> float:
    """Chernoff/union bound on the abort probability of honest devices."""
    omega, delta = as_vector(omega), np.asarray(delta, float)
    if np.any(delta >= omega):
        raise ValueError("each confidence width must be below its score frequency")
    terms = 2.0 * np.exp(-gamma * delta ** 2 * n / (3.0 * omega))
    return float(min(1.0, terms.sum()))


def delta_for_target(omega, gamma: float, n: float, eps_comp_target: float) -> np.ndarray:
    """Per-score widths making each completeness term equal to the target."""
    if not 0.0 < eps_comp_target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    omega = as_vector(omega)
    delta = np.sqrt(3.0 * omega * np.log(2.0 / eps_comp_target) / (gamma * n))
    if np.any(delta >= omega):
        bad = [int(k) for k in np.nonzero(delta >= omega)[0]]
        raise ValueError(f"width reaches the score frequency for scores {bad}; increase n or gamma")
    return delta


def soundness_error(params: ProtocolParams) -> float:
    return max(params.eps_ext + 2 * params.eps_s, params.eps_eat)


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1 - x) * math.log2(1 - x))


def expected_seed_bits(n: float, gamma: float, mu) -> float:
    """Expected uniform seed needed to sample the round types and test inputs."""
    return (gamma * shannon_entropy(mu) + binary_entropy(gamma)) * n


def dfr16_blocked_entropy(params: ProtocolParams, f_blocked: MinTradeoff, omega, s_max: int | None = None) -> RateReport:
    """Older entropy accumulation bound for the blocked protocol.

    ``m g - sqrt(m) eps`` with ``eps = 2 (log2(1 + 2 |AB|^s_max) + ceil(D)) sqrt(1 - 2 log2(eps_s eps_EAT))``
    where ``D`` is the largest difference between vertex values.  The report
    stores ``eps`` in ``eps_v``; ``beta`` does not apply.
    """
    if f_blocked.variant != "blocked":
        raise ValueError("needs a blocked min-tradeoff function")
    _check_gamma(params, f_blocked)
    if s_max is not None and s_max != f_blocked.s_max:
        raise ValueError("s_max differs from the min-tradeoff function's")
    try:
        value = corner_value(f_blocked, omega, params.delta)
    except InvalidCorner as exc:
        return _invalid_report(params, f_blocked, omega, str(exc))
    m = params.n / f_blocked.s_bar
    g = (1 - f_blocked.gamma) * f_blocked.s_bar * (f_blocked.A_v - f_blocked.B_v * value)
    vert = f_blocked.vertex_values()
    grad = math.ceil(float(vert.max() - vert.min()))
    L = _alphabet_bits(f_blocked, params.ab_size)
    eps = 2.0 * (float(np.logaddexp2(0.0, 1.0 + L)) + grad) * math.sqrt(1 - 2 * math.log2(params.eps_s * params.eps_eat))
    h = m * g - math.sqrt(m) * eps
    return _report(params, f_blocked, omega, float("nan"), h, eps, 0.0, 0.0)
