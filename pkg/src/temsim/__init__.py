"""Community uniform double-auction energy market with learning prosumer bidders."""

__version__ = "0.1.0"

from .market import Bid, ClearingResult, MarketStats, OrderBook, Side, clear_market, compute_statistics
from .env import ActionPair, MarketEnv, Observation, generate_exogenous
from .config import SimulationConfig, desk_profile, load_config, paper_profile
from .harness import run_experiment

__all__ = [
    "ActionPair",
    "Bid",
    "ClearingResult",
    "MarketEnv",
    "MarketStats",
    "Observation",
    "OrderBook",
    "Side",
    "SimulationConfig",
    "clear_market",
    "compute_statistics",
    "desk_profile",
    "generate_exogenous",
    "load_config",
    "paper_profile",
    "run_experiment",
]
