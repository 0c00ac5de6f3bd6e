"""Spatio-temporal point networks for event-camera streams."""

from .config import LossConfig, ModelConfig, RunConfig, load_config, parse_config
from .errors import (CheckpointError, ConfigError, ContractError, DegenerateBatchError,
                     EventCloudError, ParseError, ShapeError, ValidationError)
from .kernels import BACKEND

__version__ = "0.1.0"
