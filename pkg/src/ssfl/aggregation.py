"""Server-side model averaging: FedAvg and grouping-based averaging.

Weights, momentum buffers and batch-norm running statistics are all averaged
with the same rule. The server's own state counts once in every group.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .model import ParameterState


@dataclass
class AggregationPlan:
    participants: list
    groups: list

    def __post_init__(self):
        self.participants = [int(p) for p in self.participants]
        self.groups = [[int(u) for u in g] for g in self.groups]
        flat = [u for g in self.groups for u in g]
        if not 1 <= len(self.groups) <= max(len(self.participants), 1):
            raise InvalidInputError("need 1 <= S <= C groups")
        if sorted(flat) != sorted(self.participants) or len(set(flat)) != len(flat):
            raise InvalidInputError("groups must partition the participants")
        sizes = [len(g) for g in self.groups]
        if max(sizes) - min(sizes) > 1:
            raise InvalidInputError("group sizes may differ by at most one")

    def group_of(self):
        return {u: i for i, g in enumerate(self.groups) for u in g}

    def to_dict(self):
        return {"participants": list(self.participants), "groups": [list(g) for g in self.groups]}


@dataclass
class AggregateResult:
    global_avg: ParameterState
    group_avgs: list = field(default_factory=list)


def sample_participants(K, C, rng):
    if not 1 <= C <= K:
        raise InvalidInputError(f"need 1 <= C <= K, got C={C}, K={K}")
    return [int(u) for u in rng.permutation(K)[:C]]


def make_groups(participants, S, rng):
    """Shuffle, then split into ``S`` contiguous blocks; larger blocks first.

    Members are stored in ascending id order within each group so that the
    averaging sum order, and therefore the float result, is canonical.
    """
    participants = list(participants)
    C = len(participants)
    if not 1 <= S <= C:
        raise InvalidInputError(f"need 1 <= S <= C, got S={S}, C={C}")
    order = [participants[i] for i in rng.permutation(C)]
    base, extra = divmod(C, S)
    groups, start = [], 0
    for i in range(S):
        size = base + (1 if i < extra else 0)
        groups.append(sorted(order[start:start + size]))
        start += size
    return AggregationPlan(participants, groups)


def _check_layouts(server_state, user_states):
    for s in user_states:
        if not server_state.same_layout(s):
            raise InvalidInputError("all states must share one parameter layout")


def _mean_state(states):
    spec = states[0].spec
    parts = []
    for comp in range(3):
        acc = np.zeros_like(states[0].components()[comp])
        for s in states:
            acc += s.components()[comp]
        parts.append(acc / len(states))
    return ParameterState(spec, *parts)


def fedavg(server_state, user_states):
    user_states = list(user_states)
    _check_layouts(server_state, user_states)
    if not user_states:
        return AggregateResult(server_state.copy(), [])
    return AggregateResult(_mean_state([server_state] + user_states), [])


def grouping_average(server_state, user_states, plan):
    """``user_states`` maps user id to state (or is a list aligned with
    ``plan.participants``)."""
    if not isinstance(user_states, dict):
        user_states = list(user_states)
        if len(user_states) != len(plan.participants):
            raise InvalidInputError("need exactly one state per participant")
        user_states = dict(zip(plan.participants, user_states))
    if sorted(user_states) != sorted(plan.participants):
        raise InvalidInputError("plan does not cover the provided user states")
    _check_layouts(server_state, user_states.values())
    group_avgs = [_mean_state([server_state] + [user_states[u] for u in g]) for g in plan.groups]
    return AggregateResult(_mean_state(group_avgs), group_avgs)
