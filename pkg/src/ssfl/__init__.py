"""Desk-scale simulator for semi-supervised federated learning.

Labeled data lives only at the server, users hold unlabeled non-iid shards,
and every round records the gradient diversity of the participants.
"""
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    DatasetError,
    InvalidInputError,
    SSFLError,
    TrainingDivergedError,
    UndefinedValueError,
)

__version__ = "0.1.0"
