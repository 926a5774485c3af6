"""Command-line front end.

Every verb reads one JSON config (schema in ``config_schema.json``) and writes
CSV (rate, sweep, optimize-mtf, optimize-setup) or JSON (simulate,
seed-account) to ``--out`` or stdout.  Outputs depend only on the config and
the seed.

Exit codes: 0 ok, 2 protocol abort, 3 infeasible parameters, 4 config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema
import numpy as np

from . import digp, eat, engine, game as game_mod, mtf, seed as seed_mod
from .behaviour import Behaviour, QubitSetup, behaviour_from_setup

log = logging.getLogger("diqre")

EXIT_OK, EXIT_ABORT, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 2, 3, 4
CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "grid", "theta", "alice_angles", "bob_angles", "v", "asymptotic_rate", "eat_rate", "beta",
    "eps_v", "eps_k", "eps_omega", "eps_comp", "entropy_bits", "seed_bits", "net_gain", "output_length",
)

# starting points that reach about 2 bits per round at eta = 1: (alice, bob, generation inputs)
DEFAULT_SETUPS = {
    "chsh": ((0.0, np.pi / 2), (np.pi / 4, -np.pi / 4, 0.0), (1, 2)),
    "eb23": ((0.0, np.pi / 2), (np.pi / 4, -np.pi / 4, 0.0), (1, 2)),
    "ab22": ((0.0, 2 * np.pi / 3), (np.pi / 6, -np.pi / 6), (1, 0)),
}
DEFAULT_PROTOCOL = {"n": 1e10, "gamma": 5e-3, "eps_comp_target": 1e-6}
DEFAULT_OPTIMIZER = {
    "restarts": 2, "iterations": 30, "step": 0.05, "min_step": 2e-3, "tolerance": 1e-9,
    "fd_step": 1e-4, "radius": 1e-3, "max_evals": 300,
}


class ConfigError(ValueError):
    pass


def schema() -> dict:
    return json.loads(resources.files("diqre").joinpath("config_schema.json").read_text())


@dataclass
class RunConfig:
    game: game_mod.Game
    gen: tuple[int, int]
    level: object
    setup: QubitSetup | None
    behaviour: Behaviour | None
    omega: np.ndarray | None
    v: np.ndarray | None
    protocol: dict
    asymptotic_only: bool = False
    sweep: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    seed_account: dict | None = None
    simulate: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1

    def current_behaviour(self) -> Behaviour:
        if self.behaviour is not None:
            return self.behaviour
        if self.setup is None:
            raise ConfigError("need a setup or a behaviour")
        return behaviour_from_setup(self.setup)

    def current_omega(self) -> np.ndarray:
        if self.omega is not None:
            return self.omega
        return game_mod.expected_score_distribution(self.game, self.current_behaviour()).values


def load_config(raw: dict, level=None, seed=None, threads=None) -> RunConfig:
    """Validate a config dict and build the typed configuration."""
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config: {e.message}") from None
    try:
        name = raw.get("game", "chsh")
        g = game_mod.builtin_game(name) if isinstance(name, str) else game_mod.Game.from_dict(name)
        default = DEFAULT_SETUPS.get(g.name)
        gen = tuple(raw.get("generation_inputs", default[2] if default else (0, 0)))
        if not (gen[0] < g.x_size and gen[1] < g.y_size):
            raise ConfigError("generation inputs out of range")
        setup = None
        if "setup" in raw:
            setup = QubitSetup.from_dict(raw["setup"])
        elif default and "behaviour" not in raw and "omega" not in raw:
            setup = QubitSetup(np.pi / 4, default[0], default[1])
        if setup is not None and (len(setup.alice_angles) != g.x_size or len(setup.bob_angles) != g.y_size):
            raise ConfigError("setup angles do not match the game's inputs")
        if setup is not None and (g.a_size != 2 or g.b_size != 2):
            raise ConfigError("qubit setups need two outcomes per party")
        beh = Behaviour(np.array(raw["behaviour"], dtype=float)) if "behaviour" in raw else None
        if beh is not None and beh.table.shape != g.rule.shape:
            raise ConfigError("behaviour shape does not match the game")
        omega = np.array(raw["omega"], float) if "omega" in raw else None
        v = np.array(raw["v"], float) if "v" in raw else None
        for vec, label in ((omega, "omega"), (v, "v")):
            if vec is not None and (len(vec) != g.n_scores or abs(vec.sum() - 1) > 1e-9):
                raise ConfigError(f"{label} must be a distribution over the {g.n_scores} scores")
        protocol = {**DEFAULT_PROTOCOL, **raw.get("protocol", {})}
        if "delta" in protocol:
            protocol.pop("eps_comp_target", None)
        optimizer = {**DEFAULT_OPTIMIZER, **raw.get("optimizer", {})}
        sweep = dict(raw.get("sweep", {}))
        sweep.setdefault("parameter", "eta")
        sweep.setdefault("optimize_setup", True)
        lvl = raw.get("level", 2) if level is None else level
        lvl = int(lvl) if isinstance(lvl, str) and lvl.isdigit() else lvl
        from .npa import parse_level

        parse_level(lvl)
        return RunConfig(
            game=g, gen=(int(gen[0]), int(gen[1])), level=lvl, setup=setup, behaviour=beh, omega=omega, v=v,
            protocol=protocol, asymptotic_only=bool(raw.get("asymptotic_only", False)), sweep=sweep,
            optimizer=optimizer, seed_account=raw.get("seed_account"), simulate=dict(raw.get("simulate", {})),
            seed=int(raw.get("seed", 0) if seed is None else seed),
            threads=int(raw.get("threads", 1) if threads is None else threads),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"config: {e}") from None


def protocol_params(cfg: RunConfig, omega, n=None) -> eat.ProtocolParams:
    """Protocol parameters, filling ``delta`` from the completeness target when it is absent."""
    pr = cfg.protocol
    n = float(pr["n"] if n is None else n)
    omega = np.asarray(omega, float)
    if "delta" in pr:
        delta = np.broadcast_to(np.asarray(pr["delta"], float), omega.shape).copy()
    else:
        delta = eat.delta_for_target(omega, pr["gamma"], n, pr["eps_comp_target"])
    return eat.ProtocolParams(
        n=n, gamma=pr["gamma"], delta=delta, eps_s=pr.get("eps_s", 1e-8), eps_eat=pr.get("eps_eat", 1e-8),
        eps_ext=pr.get("eps_ext", 1e-8), ell_ext=pr.get("ell_ext", 0.0), ab_size=cfg.game.a_size * cfg.game.b_size,
    )


def asymptotic_rate(cfg: RunConfig, omega) -> float:
    """``-log2 p_guess(omega)``; when the solver stalls the certified bound ``lambda . omega`` is used."""
    try:
        p = digp.guessing_probability(cfg.game, *cfg.gen, cfg.level, omega)
    except digp.SolverStall:
        p = digp.dual_certificate(cfg.game, *cfg.gen, cfg.level, omega).value(omega)
    return float(-math.log2(min(max(p, 1e-300), 1.0)))


# ---------------------------------------------------------------- rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (list, tuple, np.ndarray)):
        return ";".join(_fmt(v) for v in x)
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def make_row(grid=None, setup: QubitSetup | None = None, v=None, asym=None, report: eat.RateReport | None = None,
             seed_bits=None) -> dict:
    row = dict.fromkeys(CSV_COLUMNS)
    row.update(grid=grid, v=None if v is None else list(v), asymptotic_rate=asym, seed_bits=seed_bits)
    if setup is not None:
        row.update(theta=setup.theta, alice_angles=list(setup.alice_angles), bob_angles=list(setup.bob_angles))
    if report is not None:
        row.update(
            eat_rate=report.rate_per_round, beta=report.beta, eps_v=report.eps_v, eps_k=report.eps_k,
            eps_omega=report.eps_omega, eps_comp=report.extra.get("eps_comp"),
            entropy_bits=report.entropy_bound_bits, output_length=report.output_length,
        )
        if seed_bits is not None:
            row["net_gain"] = report.entropy_bound_bits - seed_bits - report.extra.get("ell_ext", 0.0)
    return row


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def to_json(obj) -> str:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(type(o))

    return json.dumps(obj, indent=2, sort_keys=True, default=conv) + "\n"


# ---------------------------------------------------------------- rate


def _certify(cfg: RunConfig, omega, v=None, n=None):
    params = protocol_params(cfg, omega, n)
    report, cert = engine.certify_pipeline(
        cfg.game, *cfg.gen, cfg.level, omega, params, v=v, variant=cfg.protocol.get("variant", "round"),
        s_max=cfg.protocol.get("s_max"),
    )
    report.extra["ell_ext"] = params.ell_ext
    return report, cert, params


def cmd_rate(cfg: RunConfig) -> list[dict]:
    """One row: asymptotic rate and, unless asymptotic-only, the finite-size report at ``v``."""
    omega = cfg.current_omega()
    if cfg.asymptotic_only:
        return [make_row(setup=cfg.setup, v=cfg.v if cfg.v is not None else omega, asym=asymptotic_rate(cfg, omega))]
    report, cert, params = _certify(cfg, omega, cfg.v)
    seed_bits = eat.expected_seed_bits(params.n, params.gamma, cfg.game.mu)
    return [make_row(setup=cfg.setup, v=cert.v, asym=asymptotic_rate(cfg, omega), report=report, seed_bits=seed_bits)]


# ---------------------------------------------------------------- setup optimization


def _setup_vector(s: QubitSetup) -> np.ndarray:
    return np.array([s.theta, *s.alice_angles, *s.bob_angles])


def _vector_setup(z, template: QubitSetup) -> QubitSetup:
    na = len(template.alice_angles)
    return replace(template, theta=float(z[0]), alice_angles=tuple(z[1:1 + na]), bob_angles=tuple(z[1 + na:]))


THETA_RANGE = (1e-3, np.pi / 4)


def coordinate_ascent(objective, z0, step: float, min_step: float, max_evals: int, tolerance: float = 1e-9,
                      fixed=(), bounds=None, rng: np.random.Generator | None = None):
    """Maximize ``objective`` one coordinate at a time, halving the step when no move helps.

    Returns ``(z, value, history)``; ``history`` lists accepted values and
    never decreases.
    """
    z = np.array(z0, dtype=float)
    best = objective(z)
    history = [best]
    evals = 1
    free = [i for i in range(len(z)) if i not in set(fixed)]
    while step >= min_step and evals < max_evals:
        improved = False
        order = rng.permutation(free) if rng is not None else free
        for i in order:
            for sign in (1.0, -1.0):
                cand = z.copy()
                cand[i] += sign * step
                if bounds is not None and i in bounds:
                    cand[i] = float(np.clip(cand[i], *bounds[i]))
                if cand[i] == z[i]:
                    continue
                val = objective(cand)
                evals += 1
                if val > best + tolerance:
                    z, best = cand, val
                    history.append(best)
                    improved = True
                    break
                if evals >= max_evals:
                    break
            if evals >= max_evals:
                break
        if not improved:
            step /= 2
    return z, best, history


def optimize_setup(cfg: RunConfig, start: QubitSetup, step=None, fixed=()):
    """Coordinate ascent of the asymptotic rate over the state angle and measurement angles."""
    opt = cfg.optimizer

    def objective(z):
        try:
            s = _vector_setup(z, start)
        except ValueError:
            return -np.inf
        omega = game_mod.expected_score_distribution(cfg.game, behaviour_from_setup(s)).values
        try:
            return asymptotic_rate(cfg, omega)
        except (digp.InfeasibleParameter, np.linalg.LinAlgError):
            return -np.inf

    z, val, hist = coordinate_ascent(
        objective, _setup_vector(start), opt["step"] if step is None else step, opt["min_step"], opt["max_evals"],
        opt["tolerance"], fixed=fixed, bounds={0: THETA_RANGE}, rng=np.random.default_rng(cfg.seed),
    )
    return _vector_setup(z, start), val, hist


def cmd_optimize_setup(cfg: RunConfig) -> tuple[QubitSetup, float, list[dict]]:
    if cfg.setup is None:
        raise ConfigError("optimize-setup needs a qubit setup")
    s, val, _ = optimize_setup(cfg, cfg.setup)
    return s, val, [make_row(grid=s.eta, setup=s, asym=val)]


# ---------------------------------------------------------------- sweep


# fractions of the way from omega to the uniform-output point tried as tangent points
TANGENT_PULLS = (0.0, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


def _eat_report(cfg: RunConfig, omega):
    """Best finite-size report over tangent points pulled from ``omega`` towards the interior.

    At boundary points the certificate at ``omega`` itself is very steep and
    the worst accepted distribution can leave its range; any tangent point
    gives a valid bound, so a short one-dimensional search is made.
    Returns ``(report, v)`` or ``(None, None)``.
    """
    centre = digp.interior_point(cfg.game)
    best, best_v = None, None
    for t in TANGENT_PULLS:
        v = (1 - t) * np.asarray(omega, float) + t * centre
        try:
            report, _, _ = _certify(cfg, omega, v)
        except (digp.InfeasibleParameter, ValueError) as e:
            log.info("no finite-size bound at pull %g: %s", t, e)
            continue
        if best is None or report.rate_per_round > best.rate_per_round:
            best, best_v = report, v
    return best, best_v


def _sweep_point(cfg: RunConfig, setup: QubitSetup, step, fixed):
    if cfg.sweep.get("optimize_setup", True):
        setup, asym, _ = optimize_setup(cfg, setup, step=step, fixed=fixed)
    else:
        omega = game_mod.expected_score_distribution(cfg.game, behaviour_from_setup(setup)).values
        asym = asymptotic_rate(cfg, omega)
    return setup, asym


def cmd_sweep(cfg: RunConfig) -> list[dict]:
    """Rates over a grid of one setup parameter, optimizing the setup at each point.

    The grid is visited from its largest value down, each point warm-started
    from the previous optimum.  A second pass restarts any point that is
    beaten by the next lower grid value from that value's setup.
    """
    if cfg.setup is None:
        raise ConfigError("sweep needs a qubit setup")
    par = cfg.sweep["parameter"]
    grid = sorted((float(g) for g in cfg.sweep["grid"]), reverse=True)
    fixed = (0,) if par == "theta" else ()
    small = cfg.optimizer["step"] / 2
    setups, asyms = [], []
    current = cfg.setup
    for i, val in enumerate(grid):
        start = replace(current, **{par: val})
        current, asym = _sweep_point(cfg, start, None if i == 0 else small, fixed)
        setups.append(current)
        asyms.append(asym)
        log.info("%s=%g asymptotic %.6f", par, val, asym)
    for i in range(len(grid) - 1, 0, -1):
        if asyms[i] > asyms[i - 1] + cfg.optimizer["tolerance"]:
            alt, a = _sweep_point(cfg, replace(setups[i], **{par: grid[i - 1]}), small, fixed)
            if a > asyms[i - 1]:
                setups[i - 1], asyms[i - 1] = alt, a
    rows = []
    for val, s, a in zip(grid, setups, asyms):
        omega = game_mod.expected_score_distribution(cfg.game, behaviour_from_setup(s)).values
        report, v = (None, None) if cfg.asymptotic_only else _eat_report(cfg, omega)
        rows.append(make_row(grid=val, setup=s, v=v, asym=a, report=report))
    return rows


def threshold(rows) -> float | None:
    """Smallest grid value with a positive finite-size rate."""
    ok = [r["grid"] for r in rows if r.get("eat_rate") is not None and r["eat_rate"] > 0]
    return min(ok) if ok else None


# ---------------------------------------------------------------- min-tradeoff optimization


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def tangent_basis(k: int) -> np.ndarray:
    """Orthonormal basis (rows) of the zero-sum subspace of R^k (Helmert rows)."""
    rows = []
    for i in range(1, k):
        r = np.zeros(k)
        r[:i] = 1.0
        r[i] = -float(i)
        rows.append(r / np.linalg.norm(r))
    return np.array(rows)


def optimize_mtf(cfg: RunConfig, omega, params: eat.ProtocolParams, v0=None):
    """Projected gradient ascent of the certified rate over the tangent point ``v``.

    Gradients are central differences along an orthonormal basis of the
    simplex tangent space.  Every trial point is re-solved; points outside
    the relaxed set score minus infinity.  Restarts begin at random points
    near the incumbent.  Returns ``(v, report, cert)`` of the best point.
    """
    opt = cfg.optimizer
    cache: dict[bytes, tuple] = {}

    def evaluate(v):
        key = np.asarray(v, float).tobytes()
        if key not in cache:
            try:
                cert = digp.dual_certificate(cfg.game, *cfg.gen, cfg.level, v)
                f = mtf.build(cert, params.gamma)
                rep = eat.certified_rate(params, f, omega)
                val = -np.inf if "invalid_corner" in rep.extra else rep.rate_per_round
                cache[key] = (val, rep, cert)
            except (digp.InfeasibleParameter, ValueError):
                cache[key] = (-np.inf, None, None)
        return cache[key]

    basis = tangent_basis(len(omega))
    h = opt["fd_step"]

    def gradient(v, fv):
        g = np.zeros(len(v))
        for u in basis:
            fp = evaluate(project_simplex(v + h * u))[0]
            fm = evaluate(project_simplex(v - h * u))[0]
            if np.isfinite(fp) and np.isfinite(fm):
                d = (fp - fm) / (2 * h)
            elif np.isfinite(fp):
                d = (fp - fv) / h
            elif np.isfinite(fm):
                d = (fv - fm) / h
            else:
                d = 0.0
            g += d * u
        return g

    def ascend(v, budget):
        fv = evaluate(v)[0]
        alpha = opt["radius"]
        for _ in range(budget):
            g = gradient(v, fv)
            norm = np.linalg.norm(g)
            if norm == 0 or not np.isfinite(norm):
                break
            moved = False
            while alpha >= opt["tolerance"] * 1e-3 + 1e-12:
                cand = project_simplex(v + alpha * g / norm)
                fc = evaluate(cand)[0]
                if fc > fv:
                    v, fv, moved = cand, fc, True
                    alpha *= 1.5
                    break
                alpha /= 2
            if not moved:
                break
        return v, fv

    start = project_simplex(omega if v0 is None else v0)
    best_v, best_f = start, evaluate(start)[0]
    iters = opt["iterations"] - 1
    if iters > 0:
        best_v, best_f = ascend(best_v, iters)
        rng = np.random.default_rng(cfg.seed)
        for _ in range(opt["restarts"]):
            d = rng.standard_normal(len(basis)) @ basis
            cand = project_simplex(best_v + opt["radius"] * d / np.linalg.norm(d))
            v, fv = ascend(cand, iters)
            if fv > best_f:
                best_v, best_f = v, fv
    _, rep, cert = evaluate(best_v)
    if rep is None:
        raise digp.InfeasibleParameter("no feasible tangent point found")
    return best_v, rep, cert


def cmd_optimize_mtf(cfg: RunConfig):
    omega = cfg.current_omega()
    params = protocol_params(cfg, omega)
    v, rep, cert = optimize_mtf(cfg, omega, params, cfg.v)
    rep.extra["eps_comp"] = eat.completeness_error(params.n, params.gamma, omega, params.delta)
    seed_bits = eat.expected_seed_bits(params.n, params.gamma, cfg.game.mu)
    rep.extra["ell_ext"] = params.ell_ext
    return v, rep, [make_row(setup=cfg.setup, v=v, asym=asymptotic_rate(cfg, omega), report=rep, seed_bits=seed_bits)]


# ---------------------------------------------------------------- simulation and seeds


def _classical_behaviour(g: game_mod.Game) -> Behaviour:
    t = np.zeros(g.rule.shape)
    t[0, 0] = 1.0
    return Behaviour(t)


def _bits_per_output(size: int) -> int:
    return max(1, int(math.ceil(math.log2(size))))


def cmd_simulate(cfg: RunConfig) -> tuple[dict, int]:
    """RIA inputs, accumulation, abort test, certification and extraction for a desk-scale run."""
    sim = {"block_length": 64, "desk_cap": 10 ** 6, "device": "honest", "extract": True, **cfg.simulate}
    n = int(cfg.protocol["n"])
    if n > sim["desk_cap"]:
        raise ConfigError(f"n={n} exceeds the desk cap {sim['desk_cap']}")
    omega = cfg.current_omega()
    params = protocol_params(cfg, omega)
    model = seed_mod.RoundInputModel(params.gamma, cfg.game.mu, *cfg.gen)
    k_max = sim.get("k_max") or int(math.ceil(2 * sim["block_length"] * model.entropy_bits())) + 64
    if "seed_file" in sim:
        bits = seed_mod.BitStream.from_file(sim["seed_file"])
    else:
        bits = seed_mod.BitStream.pseudorandom(cfg.seed, key=0)
    inputs = engine.ria_inputs(model, n, bits, sim["block_length"], k_max)
    beh = cfg.current_behaviour() if sim["device"] == "honest" else _classical_behaviour(cfg.game)
    device = engine.HonestDevice(beh, stream=1)
    tr = engine.run_accumulation(device, cfg.game, params, inputs=inputs, seed=cfg.seed, log=True,
                                 threads=cfg.threads)
    abort = engine.abort_decision(tr, omega, params.delta, params.gamma)
    tr = tr.with_abort(abort)
    out = {
        "transcript": tr.to_dict(), "score_names": list(cfg.game.score_names), "omega": omega,
        "delta": params.delta, "k_max": k_max, "block_length": sim["block_length"],
        "seed_cryptographic": bits.cryptographic,
    }
    if abort:
        return out, EXIT_ABORT
    report, cert = engine.certify_pipeline(cfg.game, *cfg.gen, cfg.level, omega, params, v=cfg.v)
    out["report"] = report.to_dict()
    out["certificate"] = cert.to_dict()
    ell = 0
    raw_len = 0
    extracted = np.zeros(0, np.uint8)
    if sim["extract"]:
        wa, wb = _bits_per_output(cfg.game.a_size), _bits_per_output(cfg.game.b_size)
        a, b = tr.rounds[:, 3], tr.rounds[:, 4]
        raw = np.concatenate([(a[:, None] >> np.arange(wa - 1, -1, -1)) & 1,
                              (b[:, None] >> np.arange(wb - 1, -1, -1)) & 1], axis=1).ravel()
        raw_len = len(raw)
        ell = min(report.output_length, raw_len)
        ext_seed = bits.take(raw_len + ell - 1) if ell else np.zeros(0, np.uint8)
        extracted = engine.extract_stub(raw, ext_seed, ell)
    out["extraction"] = {
        "raw_length": raw_len, "output_length": int(ell),
        "output_hex": np.packbits(extracted).tobytes().hex() if ell else "",
        "seed_bits_total": int(bits.consumed),
    }
    return out, EXIT_OK


def cmd_seed_account(cfg: RunConfig) -> dict:
    if not cfg.seed_account:
        raise ConfigError("seed-account needs a seed_account section")
    n = int(cfg.protocol["n"])
    m = cfg.seed_account["m_blocks"]
    req = seed_mod.seed_requirements(n, m, cfg.protocol["gamma"], cfg.game.mu, cfg.seed_account["k_max"])
    return {**req._asdict(), "n_padded": seed_mod.padded_length(n, m), "m_blocks": m}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diqre", description="Device-independent randomness expansion toolkit.")
    p.add_argument("verb", choices=["rate", "sweep", "optimize-mtf", "optimize-setup", "simulate", "seed-account"])
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--level", help="relaxation level, e.g. 2 or 1+AB")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(verb: str, cfg: RunConfig) -> tuple[str, int]:
    """Execute a verb; returns the output text and exit code."""
    if verb == "rate":
        return rows_to_csv(cmd_rate(cfg)), EXIT_OK
    if verb == "sweep":
        return rows_to_csv(cmd_sweep(cfg)), EXIT_OK
    if verb == "optimize-mtf":
        return rows_to_csv(cmd_optimize_mtf(cfg)[2]), EXIT_OK
    if verb == "optimize-setup":
        return rows_to_csv(cmd_optimize_setup(cfg)[2]), EXIT_OK
    if verb == "simulate":
        out, code = cmd_simulate(cfg)
        return to_json(out), code
    if verb == "seed-account":
        return to_json(cmd_seed_account(cfg)), EXIT_OK
    raise ConfigError(f"unknown verb {verb!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        cfg = load_config(raw, level=args.level, seed=args.seed, threads=args.threads)
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text, code = run(args.verb, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (digp.InfeasibleParameter, ValueError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if code == EXIT_ABORT:
        print("protocol aborted", file=sys.stderr)
    return code
