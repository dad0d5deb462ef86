"""Round-by-round simulation of semi-supervised federated training.

Each round: broadcast, ``T`` local steps at every participant and at the
server, diversity measurement, aggregation, optional evaluation. All
randomness is drawn from streams keyed by (seed, purpose, party, round,
step), so results do not depend on the order or concurrency of user tasks.
"""
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .aggregation import fedavg, grouping_average, make_groups, sample_participants
from .augment import strong_augment, weak_augment
from .datasets import load_dataset
from .diversity import GradientSet, cumulative_delta, diversity_report, encode_value, full_data_gradient
from .errors import InvalidInputError, TrainingDivergedError
from .model import cosine_lr, forward, backward, init_model, save_state, sgd_step
from .partitioner import compute_noniid_R, make_plan, synthesize_assignment

log = logging.getLogger(__name__)

# stream purposes
_LOCAL, _PARTICIPANTS, _GROUPS = 0, 1, 2
SERVER = -1


def stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]))


def _party(uid):
    return 0 if uid == SERVER else uid + 1


@dataclass
class RoundRecord:
    round: int
    participants: list
    groups: list
    lr: float
    mean_user_loss: float
    server_loss: float
    active_fraction: float
    test_accuracy: float = None
    diversity: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "round": self.round,
            "participants": self.participants,
            "groups": self.groups,
            "lr": self.lr,
            "mean_user_loss": self.mean_user_loss,
            "server_loss": self.server_loss,
            "active_fraction": self.active_fraction,
            "test_accuracy": self.test_accuracy,
            "diversity": {k: encode_value(v) for k, v in self.diversity.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class FederationState:
    """``broadcast`` holds the group average each user of the last round
    should resume from; users missing from it receive ``global_avg``."""

    global_avg: object
    broadcast: dict = field(default_factory=dict)
    last_user_states: dict = field(default_factory=dict)


class Simulation:
    """Data, partition, and schedule for one experiment configuration."""

    def __init__(self, cfg, data=None):
        self.cfg = cfg
        fed = cfg.federation
        xtr, ytr, xte, yte = load_dataset(cfg.dataset) if data is None else data
        d = cfg.dataset.num_classes
        self.plan = make_plan(ytr, d, fed.K, fed.R, fed.Ns)
        self.assignment = synthesize_assignment(ytr, self.plan, cfg.seeds.partition)
        # undefined for a single user
        self.realized_R = compute_noniid_R(self.assignment.user_histograms) if fed.K > 1 else None
        srv = self.assignment.server_indices
        self.server_x, self.server_y = xtr[srv], ytr[srv]
        self.user_x = [xtr[ix] for ix in self.assignment.user_indices]
        self.user_y = [ytr[ix] for ix in self.assignment.user_indices]
        self.test_x, self.test_y = xte, yte
        self.spec = cfg.model.spec(xtr.shape[1:], d)
        self.opt = cfg.optimizer.optimizer()
        self.aug = cfg.augment.augment()
        sched = self.opt.schedule
        self.num_rounds = max(1, math.ceil(sched.total_steps / fed.T))
        self.last_step = math.ceil(sched.total_steps) - 1

    def initial_state(self):
        return FederationState(init_model(self.spec, self.cfg.seeds.weights))

    def lr_at(self, step):
        return cosine_lr(min(step, self.last_step), self.opt.schedule)

    # local training ------------------------------------------------------

    def _step_loss(self, state, x, y, objective, rng):
        tau = self.cfg.federation.tau
        weak = weak_augment(x, rng, self.aug)
        if objective == "crl":
            strong = strong_augment(x, rng, self.aug)
            weak_logits, _ = forward(state, weak, "train")
            strong_logits, cache = forward(state, strong, "train")
            return losses.crl_user_loss(weak_logits, strong_logits, tau), cache
        logits, cache = forward(state, weak, "train")
        if objective == "self_training":
            return losses.self_training_loss(logits, tau), cache
        return losses.cross_entropy(logits, y), cache

    def local_train(self, start, uid, t):
        """``T`` optimizer steps from ``start``; returns (state, mean loss, active fraction)."""
        fed = self.cfg.federation
        if uid == SERVER:
            x_all, y_all, objective = self.server_x, self.server_y, "server"
        else:
            x_all, y_all, objective = self.user_x[uid], self.user_y[uid], fed.objective
        state = start.copy()
        B = self.opt.schedule.batch_size
        total_loss, active = 0.0, 0
        for j in range(fed.T):
            rng = stream(self.cfg.seeds.schedule, _LOCAL, _party(uid), t, j)
            idx = rng.integers(0, len(y_all), size=B)
            out, cache = self._step_loss(state, x_all[idx], y_all[idx], objective, rng)
            grad = backward(state, cache, out.logit_gradients)
            state = sgd_step(state, grad, self.lr_at(t * fed.T + j), self.opt)
            total_loss += out.value
            active += out.active_count
        if not (np.isfinite(state.weights).all() and np.isfinite(state.momentum).all()):
            who = "server" if uid == SERVER else f"user {uid}"
            raise TrainingDivergedError(f"non-finite weights at {who} in round {t}", round_index=t)
        return state, total_loss / fed.T, active / (fed.T * B)

    def _fullgrad(self, state, uid):
        fed = self.cfg.federation
        if uid == SERVER:
            return full_data_gradient(state, self.server_x, "server", self.server_y)
        return full_data_gradient(state, self.user_x[uid], fed.objective, self.user_y[uid], fed.tau)

    # one round -------------------------------------------------------------

    def run_round(self, fstate, t, executor=None):
        cfg, fed = self.cfg, self.cfg.federation
        participants = sample_participants(fed.K, fed.C, stream(cfg.seeds.schedule, _PARTICIPANTS, t))
        order = sorted(participants)
        starts = {u: fstate.broadcast.get(u, fstate.global_avg) for u in order}

        def task(uid):
            start = fstate.global_avg if uid == SERVER else starts[uid]
            trained = self.local_train(start, uid, t)
            return trained, self._fullgrad(trained[0], uid)

        parties = order + [SERVER]
        mapper = executor.map if executor is not None else map
        results = dict(zip(parties, mapper(task, parties)))

        (server_end, server_loss, _), server_grad = results[SERVER]
        user_end = {u: results[u][0][0] for u in order}
        fullgrad = GradientSet([results[u][1] for u in order], server_grad, t, "fullgrad")
        cumdelta = GradientSet(
            [cumulative_delta(starts[u], user_end[u]) for u in order],
            cumulative_delta(fstate.global_avg, server_end), t, "cumdelta",
        )
        report = diversity_report(fullgrad, cumdelta)

        if fed.averaging == "grouping":
            plan = make_groups(participants, fed.groups, stream(cfg.seeds.schedule, _GROUPS, t))
            agg = grouping_average(server_end, user_end, plan)
            broadcast = {u: agg.group_avgs[i] for i, g in enumerate(plan.groups) for u in g}
            groups = plan.groups
        else:
            agg = fedavg(server_end, [user_end[u] for u in order])
            broadcast = {}
            groups = [order]
        if not np.isfinite(agg.global_avg.weights).all():
            raise TrainingDivergedError(f"non-finite aggregate in round {t}", round_index=t)

        new_state = FederationState(agg.global_avg, broadcast, {**fstate.last_user_states, **user_end})
        acc = None
        if (t + 1) % fed.eval_every == 0 or t == self.num_rounds - 1:
            acc = evaluate(agg.global_avg, self.test_x, self.test_y) if len(self.test_y) else None
        record = RoundRecord(
            round=t,
            participants=participants,
            groups=groups,
            lr=self.lr_at(t * fed.T),
            mean_user_loss=float(np.mean([results[u][0][1] for u in order])),
            server_loss=float(server_loss),
            active_fraction=float(np.mean([results[u][0][2] for u in order])),
            test_accuracy=acc,
            diversity=report,
        )
        return new_state, record

    def run(self, on_record=None, num_rounds=None):
        fstate = self.initial_state()
        records = []
        workers = self.cfg.run.workers
        executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        try:
            for t in range(self.num_rounds if num_rounds is None else num_rounds):
                fstate, rec = self.run_round(fstate, t, executor)
                records.append(rec)
                if on_record is not None:
                    on_record(rec)
                log.debug("round %d acc=%s", t, rec.test_accuracy)
        finally:
            if executor is not None:
                executor.shutdown()
        return records, fstate.global_avg


def run_round(sim, fstate, t, executor=None):
    return sim.run_round(fstate, t, executor)


def run_experiment(cfg, data=None, on_record=None):
    sim = Simulation(cfg, data)
    return sim.run(on_record)


def evaluate(state, x, y, batch_size=1024):
    """Fraction of test samples whose eval-mode argmax matches the label."""
    y = np.asarray(y)
    if y.size == 0:
        raise InvalidInputError("test set is empty")
    correct = 0
    for i in range(0, len(y), batch_size):
        logits, _ = forward(state, x[i:i + batch_size], "eval")
        correct += int((logits.argmax(axis=1) == y[i:i + batch_size]).sum())
    return correct / len(y)


def write_run(cfg, out_dir, data=None):
    """Run and write ``metrics.jsonl``, ``checkpoint.bin`` and ``manifest.json``."""
    os.makedirs(out_dir, exist_ok=True)
    sim = Simulation(cfg, data)
    path = os.path.join(out_dir, "metrics.jsonl")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        records, final = sim.run(on_record=lambda r: fh.write(r.to_json() + "\n"))
    save_state(final, os.path.join(out_dir, "checkpoint.bin"))
    manifest = {
        "config": cfg.to_dict(),
        "rounds": sim.num_rounds,
        "target_R": cfg.federation.R,
        "realized_R": sim.realized_R,
        "model": sim.spec.to_dict(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return records, final
