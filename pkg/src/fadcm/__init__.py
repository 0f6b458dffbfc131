"""Fatigue-aware dependent-click-model bandits: model, optimizer, policies, experiments."""
from .model import (BehaviorParams, Catalog, DimensionError, DiscountCurve, InvalidSlateError,
                    ModelDegenerateError, ModelError, ModelParams, Relevance,
                    attractiveness_profile, click_probability, expected_reward,
                    same_category_prefix_counts)
from .optimizer import CapacityError, brute_force_slate, optimal_slate
from .simulator import EventObservation, ExitCause, InteractionRecord, extract_events, simulate_session
from .policies import ExploreThenExploit, FaDcm, FaDcmP, OraclePolicy, monotone_repair
from .experiment import (ConfigError, ExperimentConfig, RegretSeries, SummaryStats,
                         instantaneous_regret, preset, run_experiment, run_replication)

__version__ = "0.1.0"
