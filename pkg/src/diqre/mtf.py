"""Affine min-tradeoff functions built from guessing-probability certificates.

A certificate ``lambda`` with ``lambda . v >= p_guess(v)`` for every
achievable score distribution gives, through the tangent of ``-log2`` at
``lambda . v``, the affine lower bound ``g(q) = (1 - gamma)(A - B lambda . q)``
on the single-round entropy.  The min-tradeoff function is its affine
extension to distributions over the scores plus the abort symbol, with the
abort vertex chosen so that protocol-respecting distributions
``(gamma q, 1 - gamma)`` evaluate to ``g(q)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .digp import DualCertificate
from .game import as_vector

LN2 = np.log(2.0)


def tangent_coefficients(value: float) -> tuple[float, float]:
    """``(A, B)`` of the tangent of ``-log2`` at ``value``."""
    if not 0.0 < value <= 1.0 + 1e-12:
        raise ValueError(f"lambda . v = {value!r} is outside (0, 1]")
    return 1.0 / LN2 - np.log2(value), 1.0 / (value * LN2)


def mean_block_length(gamma: float, s_max: int) -> float:
    """Expected rounds per block when blocks end at a test or after ``s_max`` rounds."""
    if s_max < 1:
        raise ValueError("s_max must be at least 1")
    return float(-np.expm1(s_max * np.log1p(-gamma)) / gamma)


@dataclass(frozen=True)
class MinTradeoff:
    cert: DualCertificate
    gamma: float
    A_v: float
    B_v: float
    variant: str = "round"
    s_max: int = 1
    s_bar: float = 1.0
    fmax: float = np.nan
    fmin_bound: float = np.nan
    fvar_bound: float = np.nan

    @property
    def lam(self) -> np.ndarray:
        return self.cert.lam

    @property
    def n_scores(self) -> int:
        return len(self.cert.lam)

    def vertex_values(self) -> np.ndarray:
        """``f(e_c)`` for every score, followed by ``f(e_perp)``."""
        g, s, A, B = self.gamma, self.s_bar, self.A_v, self.B_v
        lmin = float(np.min(self.lam))
        scores = (1 - g) * s * (A - B * (self.lam - (1 - g * s) * lmin) / (g * s))
        perp = (1 - g) * s * (A - B * lmin)
        return np.append(scores, perp)

    def evaluate(self, p) -> float:
        return evaluate(self, p)

    def to_dict(self) -> dict:
        return {
            "certificate": self.cert.to_dict(),
            "gamma": self.gamma,
            "variant": self.variant,
            "s_max": self.s_max,
            "A_v": self.A_v,
            "B_v": self.B_v,
            "s_bar": self.s_bar,
            "fmax": self.fmax,
            "fmin_bound": self.fmin_bound,
            "fvar_bound": self.fvar_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MinTradeoff":
        cert = DualCertificate.from_dict(d["certificate"])
        if d.get("variant", "round") == "blocked":
            return build_blocked(cert, d["gamma"], d["s_max"])
        return build(cert, d["gamma"])


def _check_gamma(gamma: float):
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")


def build(cert: DualCertificate, gamma: float) -> MinTradeoff:
    """Round-by-round min-tradeoff function with its EAT bounds."""
    _check_gamma(gamma)
    A, B = tangent_coefficients(cert.dual_value)
    lmax, lmin = cert.lambda_max, cert.lambda_min
    return MinTradeoff(
        cert=cert, gamma=gamma, A_v=A, B_v=B,
        fmax=(1 - gamma) * (A - B * lmin),
        fmin_bound=(1 - gamma) * (A - B * lmax),
        fvar_bound=(1 - gamma) ** 2 * B ** 2 * (lmax - lmin) ** 2 / gamma,
    )


def build_blocked(cert: DualCertificate, gamma: float, s_max: int) -> MinTradeoff:
    """Min-tradeoff function for blocks ending at a test or after ``s_max`` rounds."""
    _check_gamma(gamma)
    A, B = tangent_coefficients(cert.dual_value)
    s = mean_block_length(gamma, int(s_max))
    lmax, lmin = cert.lambda_max, cert.lambda_min
    return MinTradeoff(
        cert=cert, gamma=gamma, A_v=A, B_v=B, variant="blocked", s_max=int(s_max), s_bar=s,
        fmax=(1 - gamma) * s * (A - B * lmin),
        fmin_bound=(1 - gamma) * s * (A - B * lmax),
        fvar_bound=(1 - gamma) ** 2 * s * B ** 2 * (lmax - lmin) ** 2 / gamma,
    )


def evaluate(f: MinTradeoff, p) -> float:
    """Affine value ``sum_c p(c) f(e_c)`` on a distribution including the abort symbol."""
    p = as_vector(p)
    if len(p) != f.n_scores + 1:
        raise ValueError(f"expected {f.n_scores + 1} entries (scores and abort), got {len(p)}")
    return float(p @ f.vertex_values())


def tangent_lower_bound(cert: DualCertificate, gamma: float, q) -> float:
    """``(1 - gamma)(A - B lambda . q)``, never above ``(1 - gamma)(-log2(lambda . q))``."""
    q = as_vector(q)
    value = float(cert.lam @ q)
    if value <= 0:
        raise ValueError("lambda . q must be positive")
    A, B = tangent_coefficients(cert.dual_value)
    return (1 - gamma) * (A - B * value)
