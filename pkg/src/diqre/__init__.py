"""Device-independent randomness expansion: guessing-probability relaxations,
min-tradeoff functions, finite-size entropy bounds, seed accounting and a
desk-scale protocol simulator."""

from .behaviour import Behaviour, QubitSetup, behaviour_from_setup, ideal_chsh_setup
from .digp import DualCertificate, InfeasibleParameter, dual_certificate, guessing_probability
from .eat import ProtocolParams, RateReport, certified_rate
from .game import Game, builtin_game, expected_score_distribution
from .mtf import MinTradeoff

__version__ = "0.1.0"

__all__ = [
    "Behaviour", "QubitSetup", "behaviour_from_setup", "ideal_chsh_setup", "DualCertificate",
    "InfeasibleParameter", "dual_certificate", "guessing_probability", "ProtocolParams", "RateReport",
    "certified_rate", "Game", "builtin_game", "expected_score_distribution", "MinTradeoff",
]
