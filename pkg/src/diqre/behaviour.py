"""Device behaviours and the two-qubit implementation family.

A behaviour is a table ``p[a, b, x, y] = p(a, b | x, y)``.  Qubit setups use
the partially entangled state ``cos(theta)|00> + sin(theta)|11>``, projective
measurements in the x-z plane, optional Werner noise on the state and a
detector model where a missed click is reported as outcome 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Behaviour:
    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 4:
            raise ValueError("behaviour table must have shape (A, B, X, Y)")
        if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        sums = t.sum(axis=(0, 1))
        if np.max(np.abs(sums - 1.0)) > 1e-12:
            raise ValueError("each p(., .|x, y) must sum to 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        A, B, X, Y = self.table.shape
        return X, Y, A, B

    @property
    def p(self) -> np.ndarray:
        """Flat vector indexed ``(a, b, x, y)`` in C order."""
        return self.table.ravel()

    def alice_marginal(self) -> np.ndarray:
        """``p_A(a|x)`` read at ``y = 0``, shape ``(A, X)``."""
        return self.table.sum(axis=1)[:, :, 0]

    def bob_marginal(self) -> np.ndarray:
        """``p_B(b|y)`` read at ``x = 0``, shape ``(B, Y)``."""
        return self.table.sum(axis=0)[:, 0, :]


@dataclass(frozen=True)
class QubitSetup:
    theta: float
    alice_angles: tuple[float, ...]
    bob_angles: tuple[float, ...]
    eta: float = 1.0
    werner: float = 1.0
    eta_b: float | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "alice_angles", tuple(float(a) for a in self.alice_angles))
        object.__setattr__(self, "bob_angles", tuple(float(b) for b in self.bob_angles))
        if not 0.0 < self.theta <= np.pi / 4 + 1e-12:
            raise ValueError("theta must lie in (0, pi/4]")
        for v in (self.eta, self.werner, self.efficiency_b):
            if not 0.0 <= v <= 1.0:
                raise ValueError("efficiencies and Werner weight must lie in [0, 1]")
        if not self.alice_angles or not self.bob_angles:
            raise ValueError("each party needs at least one measurement")

    @property
    def efficiency_b(self) -> float:
        return self.eta if self.eta_b is None else self.eta_b

    def to_dict(self) -> dict:
        d = {
            "theta": self.theta,
            "alice_angles": list(self.alice_angles),
            "bob_angles": list(self.bob_angles),
            "eta": self.eta,
            "werner": self.werner,
        }
        if self.eta_b is not None:
            d["eta_b"] = self.eta_b
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QubitSetup":
        return cls(
            d["theta"], d["alice_angles"], d["bob_angles"],
            d.get("eta", 1.0), d.get("werner", 1.0), d.get("eta_b"),
        )


def projector(phi: float) -> np.ndarray:
    """Projector onto the +1 eigenvector of ``cos(phi) Z + sin(phi) X``."""
    c, s = np.cos(phi / 2), np.sin(phi / 2)
    return np.array([[c * c, c * s], [c * s, s * s]])


def measurement(phi: float) -> tuple[np.ndarray, np.ndarray]:
    P = projector(phi)
    return P, np.eye(2) - P


def state(theta: float, werner: float = 1.0) -> np.ndarray:
    psi = np.zeros(4)
    psi[0], psi[3] = np.cos(theta), np.sin(theta)
    return werner * np.outer(psi, psi) + (1 - werner) * np.eye(4) / 4


def born_table(rho: np.ndarray, alice_angles: Sequence[float], bob_angles: Sequence[float]) -> np.ndarray:
    M = np.array([measurement(phi) for phi in alice_angles])  # (X, A, 2, 2)
    N = np.array([measurement(phi) for phi in bob_angles])
    r = rho.reshape(2, 2, 2, 2)
    # tr[(M (x) N) rho] with rho indexed (row_a, row_b, col_a, col_b)
    t = np.einsum("xaij,ybkl,jlik->abxy", M, N, r)
    return t


def apply_detectors(table: np.ndarray, eta_a: float, eta_b: float) -> np.ndarray:
    """Bin missed clicks into outcome 0, independently for each party."""
    pa = table.sum(axis=1)[:, :, 0]
    pb = table.sum(axis=0)[:, 0, :]
    d0 = np.array([1.0, 0.0])
    out = eta_a * eta_b * table
    out = out + (1 - eta_a) * (1 - eta_b) * d0[:, None, None, None] * d0[None, :, None, None]
    out = out + (1 - eta_a) * eta_b * d0[:, None, None, None] * pb[None, :, None, :]
    out = out + eta_a * (1 - eta_b) * pa[:, None, :, None] * d0[None, :, None, None]
    return out


def behaviour_from_setup(s: QubitSetup) -> Behaviour:
    t = born_table(state(s.theta, s.werner), s.alice_angles, s.bob_angles)
    t = apply_detectors(t, s.eta, s.efficiency_b)
    return Behaviour(np.clip(t, 0.0, 1.0))


FIG1_ALICE = (0.0, np.pi / 2)
FIG1_BOB = (np.pi / 4, -np.pi / 4, 0.0)


def ideal_chsh_setup(eta: float = 1.0) -> QubitSetup:
    return QubitSetup(np.pi / 4, FIG1_ALICE, FIG1_BOB, eta=eta)


def ideal_chsh_behaviour() -> Behaviour:
    return behaviour_from_setup(ideal_chsh_setup())


def validate_no_signalling(p, tol: float = 1e-10) -> dict:
    """Largest spread of each party's marginal across the other party's inputs.

    Accepts a :class:`Behaviour` or a raw ``(A, B, X, Y)`` table, so that
    tables failing normalization can still be diagnosed.
    """
    t = p.table if isinstance(p, Behaviour) else np.asarray(p, dtype=float)
    bob = t.sum(axis=0)  # (B, X, Y)
    alice = t.sum(axis=1)  # (A, X, Y)
    bob_spread = float(np.max(bob.max(axis=1) - bob.min(axis=1)))
    alice_spread = float(np.max(alice.max(axis=2) - alice.min(axis=2)))
    norm = float(np.max(np.abs(t.sum(axis=(0, 1)) - 1.0)))
    worst = max(bob_spread, alice_spread, norm)
    return {
        "alice_spread": alice_spread,
        "bob_spread": bob_spread,
        "normalization": norm,
        "max_discrepancy": worst,
        "passes": worst <= tol,
    }


def pr_box() -> np.ndarray:
    t = np.zeros((2, 2, 2, 2))
    for a, b, x, y in np.ndindex(t.shape):
        t[a, b, x, y] = 0.5 if (a ^ b) == (x * y) else 0.0
    return t
