"""Relaxed device-independent guessing probability and its dual certificates.

For each joint guess ``c = (a, b)`` of the adversary there is a moment
matrix ``Gamma_c(u_c) = sum_k u_{c,k} F_k``, where ``F_k`` marks the cells of
moment class ``k``.  The guessing program maximizes the probability that the
devices output the guessed pair on the generation inputs, subject to

* the mixture reproducing every score except the last (implied by
  normalization) and ``sum_c <1>_c = 1``;
* the trace bound ``sum_c tr Gamma_c <= d``, which holds for every quantum
  realization because each diagonal moment is the squared norm of a projector
  product applied to the state;
* ``Gamma_c >= 0``.

The moment variables are the multipliers ``y`` of the SDP handed to the
solver, whose primal is the adversary's dual program: PSD matrices ``Z_c``, a
trace multiplier ``z`` (1x1 block) and free multipliers for the score and
normalization rows, one equality per moment variable.  Posing it this way
avoids the cell-tying equalities of the matrix form, which make the Newton
system singular near the optimum.

A certificate is read off the solver primal.  The equality residual is
projected out class by class, and then every ``Z_c`` and ``z`` are raised by
the same ``t``.  Because ``<F_k, I>`` equals the trace coefficient of
``u_{c,k}``, this keeps the equalities exact and costs ``d * t`` in value.
"""
from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import npa, sdp
from .game import Game, ScoreDistribution, as_vector, deterministic_score_vectors


class InfeasibleParameter(ValueError):
    """Raised when a score distribution lies outside the relaxed quantum set."""


class SolverStall(InfeasibleParameter):
    """The solver stopped before reaching the requested accuracy."""


def class_matrices(r: npa.Relaxation) -> np.ndarray:
    """Indicator matrices ``F_k`` of every moment class, shape ``(K, d, d)``."""
    K = len(r.classes)
    F = np.zeros((K, r.size, r.size))
    for k, cells in enumerate(r.class_cells):
        for i, j in cells:
            F[k, i, j] = F[k, j, i] = 1.0
    return F


def _expr_vector(n_classes: int, expr: dict[int, float]) -> np.ndarray:
    v = np.zeros(n_classes)
    for k, c in expr.items():
        v[k] += c
    return v


@dataclass(frozen=True, eq=False)
class GuessingProgram:
    """Index bookkeeping of an assembled guessing program.

    Constraint ``c * n_classes + k`` belongs to moment variable ``k`` of guess
    block ``c``.  Free variable ``i < len(score_rows)`` multiplies score
    ``score_rows[i]``; the last free variable is the normalization multiplier.
    """

    game: Game
    x_gen: int
    y_gen: int
    level: object
    relaxation: npa.Relaxation
    score_rows: tuple[int, ...]
    trace_block: int
    trace_bound: float
    score_coefficients: np.ndarray  # (n_scores, n_classes): score s of one block

    @property
    def n_guess_blocks(self) -> int:
        return self.game.a_size * self.game.b_size

    @property
    def n_classes(self) -> int:
        return len(self.relaxation.classes)

    @property
    def normalization_free(self) -> int:
        return len(self.score_rows)

    def free_objective(self, omega) -> np.ndarray:
        """Solver free-variable objective: minus the right-hand sides of the rows."""
        omega = as_vector(omega)
        return -np.append(omega[list(self.score_rows)], 1.0)

    def moments(self, y: np.ndarray) -> np.ndarray:
        """Moment variables per guess block from solver multipliers, ``(AB, K)``."""
        return np.asarray(y).reshape(self.n_guess_blocks, self.n_classes)

    def moment_matrices(self, y: np.ndarray) -> list[np.ndarray]:
        return [npa.moment_matrix(self.relaxation, u) for u in self.moments(y)]


@functools.lru_cache(maxsize=32)
def _template(game_key: str, x_gen: int, y_gen: int, level):
    """Build the omega-independent part of the program (cached per game)."""
    game = Game.from_dict(json.loads(game_key))
    X, Y, A, B = game.sizes
    r = npa.build_relaxation(X, Y, A, B, level)
    d = r.size
    K = len(r.classes)
    n_guess = A * B
    F = class_matrices(r)
    tau = np.einsum("kii->k", F)

    score_coef = np.zeros((game.n_scores, K))
    for a, b, x, y in itertools.product(range(A), range(B), range(X), range(Y)):
        if game.mu[x, y] > 0:
            score_coef[game.rule[a, b, x, y]] += game.mu[x, y] * _expr_vector(K, r.probability_expression(a, b, x, y))
    kept = tuple(range(game.n_scores - 1))

    constraints: list[dict[int, np.ndarray]] = []
    free = np.zeros((n_guess * K, len(kept) + 1))
    rhs = np.zeros(n_guess * K)
    norm_col = np.zeros(K)
    norm_col[0] = 1.0
    for c, (a, b) in enumerate(itertools.product(range(A), range(B))):
        obj = _expr_vector(K, r.probability_expression(a, b, x_gen, y_gen))
        for k in range(K):
            constraints.append({c: F[k], n_guess: np.array([[-tau[k]]])})
        rows = slice(c * K, (c + 1) * K)
        free[rows, : len(kept)] = -score_coef[list(kept)].T
        free[rows, -1] = -norm_col
        rhs[rows] = -obj

    objective = [np.zeros((d, d))] * n_guess + [np.array([[-float(d)]])]
    prog = GuessingProgram(
        game=game, x_gen=x_gen, y_gen=y_gen, level=level, relaxation=r,
        score_rows=kept, trace_block=n_guess, trace_bound=float(d), score_coefficients=score_coef,
    )
    base = sdp.SdpProblem([d] * n_guess + [1], objective, constraints, rhs, free, np.zeros(len(kept) + 1))
    base.stacks()
    return prog, base


def _game_key(game: Game) -> str:
    return json.dumps(game.to_dict(), sort_keys=True)


def assemble(game: Game, x_gen: int, y_gen: int, level, omega) -> tuple[GuessingProgram, sdp.SdpProblem]:
    """Guessing program and its solver-ready SDP for score distribution ``omega``."""
    omega = as_vector(omega)
    if len(omega) != game.n_scores:
        raise ValueError(f"omega has {len(omega)} entries, game has {game.n_scores} scores")
    if not (0 <= x_gen < game.x_size and 0 <= y_gen < game.y_size):
        raise ValueError("generation inputs out of range")
    prog, base = _template(_game_key(game), int(x_gen), int(y_gen), level)
    return prog, base.with_data(free_objective=prog.free_objective(omega))


def _solve(game, x_gen, y_gen, level, omega, **kw):
    prog, problem = assemble(game, x_gen, y_gen, level, omega)
    sol = sdp.solve(problem, **kw)
    if sol.status in ("primal_infeasible", "dual_unbounded"):
        raise InfeasibleParameter(f"score distribution outside the level-{level} set ({sol.status})")
    return prog, problem, sol


def guessing_probability(game: Game, x_gen: int, y_gen: int, level, omega, accuracy: float = 1e-4,
                         **solver_kw) -> float:
    """Relaxed guessing probability from the moment side (advisory, not certified).

    A solve that stops short of the solver tolerances is accepted when the
    moment point is feasible to 1e-6 and both sides agree to ``accuracy``,
    which is the typical outcome at boundary points of the relaxed set.
    """
    _, _, sol = _solve(game, x_gen, y_gen, level, omega, **solver_kw)
    if sol.status != "optimal" and (sol.dual_residual > 1e-6 or abs(sol.gap) > accuracy):
        raise SolverStall(f"solver did not converge (gap {sol.gap:.2e}, residual {sol.dual_residual:.2e})")
    return float(-sol.dual_value)


@dataclass(frozen=True)
class DualCertificate:
    """Dual-feasible point: ``lambda . v' >= p_guess(v')`` for every feasible ``v'``."""

    lam: np.ndarray
    normalization_multiplier: float
    v: np.ndarray
    level: object
    dual_value: float
    feasibility_margin: float
    primal_value: float = np.nan

    @property
    def lambda_max(self) -> float:
        return float(np.max(self.lam))

    @property
    def lambda_min(self) -> float:
        return float(np.min(self.lam))

    def value(self, q) -> float:
        return float(self.lam @ as_vector(q))

    def to_dict(self) -> dict:
        return {
            "lambda": [float(v) for v in self.lam],
            "normalization_multiplier": float(self.normalization_multiplier),
            "v": [float(v) for v in self.v],
            "level": self.level,
            "dual_value": float(self.dual_value),
            "feasibility_margin": float(self.feasibility_margin),
            "primal_value": float(self.primal_value),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DualCertificate":
        return cls(
            np.array(d["lambda"], float), d["normalization_multiplier"], np.array(d["v"], float),
            d["level"], d["dual_value"], d["feasibility_margin"], d.get("primal_value", np.nan),
        )


def certificate_from_solution(prog: GuessingProgram, problem: sdp.SdpProblem, sol: sdp.SdpSolution, v,
                              feas_margin: float = 1e-10) -> DualCertificate:
    """Repaired adversary-dual point and its folded score multipliers."""
    K, n_guess = prog.n_classes, prog.n_guess_blocks
    F = class_matrices(prog.relaxation)
    norms = np.einsum("kij,kij->k", F, F)
    Z = [np.array(z, dtype=float) for z in sol.X]
    u = np.array(sol.u, dtype=float)
    res = problem.residual(Z, u).reshape(n_guess, K)
    for c in range(n_guess):
        Z[c] = Z[c] + np.tensordot(res[c] / norms, F, axes=1)
    eig = float(min(sdp._min_eigs(Z[:n_guess]).min(), Z[n_guess][0, 0]))
    shift = max(0.0, -eig + feas_margin)
    z_trace = float(Z[n_guess][0, 0]) + shift
    margin = eig + shift

    scores = np.zeros(prog.game.n_scores)
    scores[list(prog.score_rows)] = u[: len(prog.score_rows)]
    folded = u[prog.normalization_free] + prog.trace_bound * z_trace
    lam = scores + folded
    v = as_vector(v)
    return DualCertificate(
        lam=lam, normalization_multiplier=float(folded), v=v.copy(), level=prog.level,
        dual_value=float(lam @ v), feasibility_margin=margin, primal_value=float(-sol.dual_value),
    )


def interior_point(game: Game) -> np.ndarray:
    """Score vector of devices answering uniformly at random."""
    from .game import expected_score_distribution

    X, Y, A, B = game.sizes
    return expected_score_distribution(game, np.full((A, B, X, Y), 1.0 / (A * B))).values


NUDGES = (1e-6, 1e-7, 1e-8, 1e-9)


def dual_certificate(game: Game, x_gen: int, y_gen: int, level, v, cert_tol: float = 1e-6,
                     **solver_kw) -> DualCertificate:
    """Repaired dual point of the program at parameter ``v``.

    At boundary points of the relaxed set the adversary's dual optimum is not
    attained and the solver stalls well above the optimum.  When the repaired
    value exceeds the moment-side value by more than ``cert_tol``, programs at
    points moved a fraction ``t`` towards the uniform-output point are solved
    as well, and the certificate with the smallest ``lambda . v`` is kept.
    Every such vector bounds the guessing probability everywhere, so it stays
    valid at ``v``.
    """
    v = as_vector(v)
    prog, problem, sol = _solve(game, x_gen, y_gen, level, v, **solver_kw)
    cert = certificate_from_solution(prog, problem, sol, v)
    if cert.dual_value - cert.primal_value <= cert_tol:
        return cert
    centre = interior_point(game)
    for t in NUDGES:
        try:
            prog, problem, sol = _solve(game, x_gen, y_gen, level, (1 - t) * v + t * centre, **solver_kw)
        except InfeasibleParameter:
            continue
        alt = certificate_from_solution(prog, problem, sol, v)
        if alt.dual_value < cert.dual_value:
            cert = DualCertificate(
                lam=alt.lam, normalization_multiplier=alt.normalization_multiplier, v=v.copy(),
                level=level, dual_value=alt.dual_value, feasibility_margin=alt.feasibility_margin,
                primal_value=cert.primal_value,
            )
    return cert


@dataclass
class VerificationReport:
    passed: bool
    worst_margin: float
    n_probes: int
    n_skipped: int
    margins: np.ndarray


def verify_certificate(cert: DualCertificate, game: Game, x_gen: int, y_gen: int, probes, tol: float = 1e-7,
                       known_values=None) -> VerificationReport:
    """Check ``lambda . v' >= p_guess(v') - tol`` on each probe.

    ``known_values`` may supply exact guessing probabilities (for instance 1 for
    deterministic strategies) in place of a solve; probes outside the relaxed
    set are skipped and counted.
    """
    margins = []
    skipped = 0
    known = [None] * len(probes) if known_values is None else list(known_values)
    for q, pk in zip(probes, known):
        if pk is None:
            try:
                pk = guessing_probability(game, x_gen, y_gen, cert.level, q)
            except InfeasibleParameter:
                skipped += 1
                continue
        margins.append(cert.value(q) - pk)
    margins = np.array(margins)
    worst = float(margins.min()) if len(margins) else np.inf
    return VerificationReport(bool(worst >= -tol), worst, len(margins), skipped, margins)


def random_quantum_scores(game: Game, rng: np.random.Generator, count: int, eta_range=(0.7, 1.0)) -> np.ndarray:
    """Score vectors of random qubit strategies (with lossy detectors)."""
    from .behaviour import QubitSetup, behaviour_from_setup
    from .game import expected_score_distribution

    out = []
    for _ in range(count):
        s = QubitSetup(
            rng.uniform(0.05, np.pi / 4),
            rng.uniform(-np.pi, np.pi, game.x_size),
            rng.uniform(-np.pi, np.pi, game.y_size),
            eta=rng.uniform(*eta_range),
            werner=rng.uniform(0.6, 1.0),
        )
        out.append(expected_score_distribution(game, behaviour_from_setup(s)).values)
    return np.array(out)


def probe_set(game: Game, v, rng: np.random.Generator, n_random: int = 20, min_total: int = 50):
    """Probe distributions and their known guessing probabilities (None = solve).

    Contains ``v``, Dirichlet mixtures of quantum score vectors and, for small
    games, every deterministic-strategy score vector (guessing probability 1).
    """
    probes = [as_vector(v)]
    known: list = [None]
    if game.x_size * game.y_size <= 6:
        det = deterministic_score_vectors(game)
        probes += list(det)
        known += [1.0] * len(det)
    n_random = max(n_random, min_total - len(probes))
    for _ in range(n_random):
        pts = random_quantum_scores(game, rng, 4)
        w = rng.dirichlet(np.ones(len(pts)))
        probes.append(w @ pts)
        known.append(None)
    return probes, known
