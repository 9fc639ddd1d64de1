"""Robust rate-splitting precoder design for the MISO downlink with imperfect CSI."""

from .channel import CsiModel, ChannelRealization, draw_csi, draw_error, user_strength_order
from .errors import ConfigError, DomainError, OptimizationError
from .optimizer import OptimizationResult, OptimizerConfig, run
from .rates import PrecoderSet, RateReport, StackedMatrices, build_stacked, objective_f, rate_report

__version__ = "0.1.0"
