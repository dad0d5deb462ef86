"""Non-iid server/user data assignment with a target class skew.

The server receives a class-balanced labeled set. Each user has a main
class: it holds a fraction ``R`` of its data from that class and spreads
the remaining ``1 - R`` over all classes in proportion to the global class
distribution left after the server draw. Two users with different main
classes then sit at total-variation distance exactly ``R``.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import CapacityError, InvalidInputError

DEFAULT_PARTITION_SEED = 2019


def _as_histograms(histograms):
    h = np.asarray(histograms, dtype=np.float64)
    if h.ndim != 2:
        raise InvalidInputError("histograms must be a (users, classes) array")
    if (h < 0).any() or not np.isfinite(h).all():
        raise InvalidInputError("histogram entries must be finite and non-negative")
    totals = h.sum(axis=1, keepdims=True)
    if (totals <= 0).any():
        raise InvalidInputError("every histogram needs positive mass")
    return h / totals


def compute_noniid_R(histograms):
    """Mean pairwise total-variation distance between user class distributions.

    Rows may be raw counts; each is normalized to sum to one first.
    """
    try:
        h = _as_histograms(histograms)
    except ValueError as exc:  # ragged input
        raise InvalidInputError("all histograms must have the same length") from exc
    k = h.shape[0]
    if k < 2:
        raise InvalidInputError("need at least two users to measure non-iidness")
    total = 0.0
    for a, b in combinations(range(k), 2):
        total += 0.5 * np.abs(h[a] - h[b]).sum()
    return total / (k * (k - 1) / 2)


def expected_user_distribution(q, R, main_class):
    q = np.asarray(q, dtype=np.float64)
    if not 0.0 <= R <= 1.0:
        raise InvalidInputError(f"R must lie in [0, 1], got {R}")
    if not 0 <= main_class < q.size:
        raise InvalidInputError(f"main class {main_class} out of range for {q.size} classes")
    p = q * (1.0 - R)
    p[main_class] += R
    return p


def integerize_counts(fractional, row_totals, stock=None):
    """Round each row to integers with the given totals by largest remainder.

    Ties go to the lower class index. With ``stock`` (one cap per column), a
    cell is only rounded up while its column still has spare capacity, so the
    column sums never exceed the stock.
    """
    f = np.asarray(fractional, dtype=np.float64)
    totals = np.asarray(row_totals, dtype=np.int64)
    if f.ndim != 2 or totals.shape != (f.shape[0],):
        raise InvalidInputError("need a 2-d matrix and one total per row")
    if (f < 0).any():
        raise InvalidInputError("fractional counts must be non-negative")
    if not np.allclose(f.sum(axis=1), totals, rtol=0, atol=1e-6):
        raise InvalidInputError("row sums must equal row totals within 1e-6")
    base = np.floor(f + 1e-9).astype(np.int64)
    base = np.minimum(base, np.ceil(f - 1e-9).astype(np.int64))
    base = np.maximum(base, 0)
    rem = f - base
    if stock is None:
        slack = np.full(f.shape[1], np.iinfo(np.int64).max // 4)
    else:
        stock = np.asarray(stock, dtype=np.int64)
        slack = stock - base.sum(axis=0)
        if (slack < 0).any():
            bad = int(np.argmax(slack < 0))
            raise CapacityError(f"class {bad} has too few samples", klass=bad)
    out = base.copy()
    for r in range(f.shape[0]):
        need = int(totals[r] - base[r].sum())
        if need < 0:
            raise InvalidInputError(f"row {r} floors exceed its total")
        # stable sort on -remainder keeps lower index first on ties
        order = np.argsort(-rem[r], kind="stable")
        for c in order:
            if need == 0:
                break
            if slack[c] > 0:
                out[r, c] += 1
                slack[c] -= 1
                need -= 1
        while need > 0:
            c = int(np.argmax(slack))
            if slack[c] <= 0:
                raise CapacityError(f"not enough samples to fill user {r}")
            out[r, c] += 1
            slack[c] -= 1
            need -= 1
    return out


@dataclass
class AssignmentPlan:
    """``n``: per-class counts left after the server draw; ``m``: users per main class."""

    d: int
    n: tuple
    m: tuple
    R: float
    Ns: int

    def __post_init__(self):
        self.n = tuple(int(v) for v in self.n)
        self.m = tuple(int(v) for v in self.m)
        if self.d < 2 or len(self.n) != self.d or len(self.m) != self.d:
            raise InvalidInputError("plan needs d >= 2 and one n_j, m_j per class")
        if not 0.0 <= self.R <= 1.0:
            raise InvalidInputError(f"R must lie in [0, 1], got {self.R}")
        if min(self.n) < 0 or min(self.m) < 0 or self.Ns < 0:
            raise InvalidInputError("counts must be non-negative")
        if self.K < 1:
            raise InvalidInputError("plan has no users")

    @property
    def K(self):
        return sum(self.m)

    @property
    def q(self):
        n = np.asarray(self.n, dtype=np.float64)
        return n / n.sum()

    def server_counts(self):
        return server_counts(self.Ns, self.d)

    def main_classes(self):
        """Round-robin over classes: user ``k`` gets the ``k``-th entry."""
        out = []
        for r in range(max(self.m)):
            out.extend(j for j in range(self.d) if self.m[j] > r)
        return out

    def expected_counts(self):
        """Fractional per-user class counts before integerization."""
        n = np.asarray(self.n, dtype=np.float64)
        q = self.q
        rows = []
        for j in self.main_classes():
            row = n * q[j] * (1.0 - self.R) / self.m[j]
            row[j] += n[j] * self.R / self.m[j]
            rows.append(row)
        return np.array(rows)

    def user_totals(self):
        totals = []
        seen = [0] * self.d
        for j in self.main_classes():
            base, extra = divmod(self.n[j], self.m[j])
            totals.append(base + (1 if seen[j] < extra else 0))
            seen[j] += 1
        return np.array(totals, dtype=np.int64)


def server_counts(Ns, d):
    base, extra = divmod(int(Ns), d)
    return np.array([base + (1 if j < extra else 0) for j in range(d)], dtype=np.int64)


def default_user_split(K, d):
    base, extra = divmod(K, d)
    return tuple(base + (1 if j < extra else 0) for j in range(d))


def make_plan(labels, num_classes, K, R, Ns, m=None):
    labels = np.asarray(labels)
    sizes = np.bincount(labels, minlength=num_classes)
    if sizes.size != num_classes:
        raise InvalidInputError("labels exceed num_classes")
    srv = server_counts(Ns, num_classes)
    short = np.nonzero(sizes < srv)[0]
    if short.size:
        j = int(short[0])
        raise CapacityError(f"class {j} has {sizes[j]} samples, server needs {srv[j]}", klass=j)
    m = default_user_split(K, num_classes) if m is None else tuple(m)
    if sum(m) != K:
        raise InvalidInputError("users per main class must sum to K")
    return AssignmentPlan(num_classes, tuple(sizes - srv), m, float(R), int(Ns))


@dataclass
class Assignment:
    server_indices: np.ndarray
    user_indices: list
    user_histograms: np.ndarray
    main_class: list
    num_classes: int

    @property
    def user_counts(self):
        return np.array([h * len(ix) for h, ix in zip(self.user_histograms, self.user_indices)]).round().astype(int)

    def to_dict(self, labels=None):
        out = {
            "num_classes": self.num_classes,
            "server_indices": [int(i) for i in self.server_indices],
            "user_indices": [[int(i) for i in ix] for ix in self.user_indices],
            "user_histograms": [[float(v) for v in h] for h in self.user_histograms],
            "main_class": [int(c) for c in self.main_class],
        }
        if labels is not None:
            out["user_counts"] = [
                np.bincount(labels[ix], minlength=self.num_classes).tolist() for ix in self.user_indices
            ]
            out["server_counts"] = np.bincount(labels[self.server_indices], minlength=self.num_classes).tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["server_indices"], dtype=np.int64),
            [np.asarray(ix, dtype=np.int64) for ix in d["user_indices"]],
            np.asarray(d["user_histograms"], dtype=np.float64),
            list(d["main_class"]),
            int(d["num_classes"]),
        )


def synthesize_assignment(labels, plan, seed=DEFAULT_PARTITION_SEED):
    labels = np.asarray(labels)
    d = plan.d
    rng = np.random.default_rng(seed)
    pools = []
    srv_counts = plan.server_counts()
    server = []
    for j in range(d):
        idx = np.nonzero(labels == j)[0]
        if idx.size < srv_counts[j] + plan.n[j]:
            raise CapacityError(f"class {j} has only {idx.size} samples", klass=j)
        idx = rng.permutation(idx)
        server.append(idx[:srv_counts[j]])
        pools.append(idx[srv_counts[j]:srv_counts[j] + plan.n[j]])

    totals = plan.user_totals()
    frac = plan.expected_counts()
    # rescale rows whose integer total differs from n_j / m_j; column sums are unchanged
    nominal = frac.sum(axis=1)
    frac = frac * np.where(nominal > 0, totals / np.where(nominal > 0, nominal, 1), 0)[:, None]
    counts = integerize_counts(frac, totals, stock=np.asarray(plan.n))

    cursor = np.zeros(d, dtype=np.int64)
    users = []
    for row in counts:
        parts = []
        for j in range(d):
            parts.append(pools[j][cursor[j]:cursor[j] + row[j]])
            cursor[j] += row[j]
        users.append(np.concatenate(parts))
    empty = [k for k, t in enumerate(totals) if t == 0]
    if empty:
        raise CapacityError(f"user {empty[0]} would receive no samples")
    hist = counts / counts.sum(axis=1, keepdims=True)
    return Assignment(np.concatenate(server), users, hist, plan.main_classes(), d)


def rounding_slack(plan):
    """Tolerance on realized R: 2 d m_max / N_min."""
    return 2 * plan.d * max(plan.m) / max(int(plan.user_totals().min()), 1)
