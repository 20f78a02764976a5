"""Option discovery with determinantal point processes on tabular grid mazes."""

from .dpp import build_kernel, dpp_log_likelihood, expected_cardinality, greedy_map
from .gridworld import MazeSpec, build_maze
from .trainer import OptionConfig, load_config, train

__version__ = "0.1.0"
