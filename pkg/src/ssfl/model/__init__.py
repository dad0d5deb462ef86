"""Small networks with exact gradients, normalization layers, and the optimizer."""
from .network import LayoutEntry, ModelSpec, Network, flatten, network_for, unflatten
from .optim import LrSchedule, OptimizerConfig, cosine_lr, sgd_step
from .state import (
    ParameterState,
    backward,
    forward,
    init_model,
    load_state,
    save_state,
    state_from_views,
)
