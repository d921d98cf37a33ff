"""Clustered reinforcement learning allocator.

Environment matrices encode importance x capacity per (task, device) cell and
are retrieved from a historical library by kNN over standardized sensing
contexts. The allocation MDP walks a device cursor from first to last device;
each step either places one task on the cursor device or advances the cursor,
and the only nonzero reward is the total importance of the placed tasks at the
terminal step. Policies are tabular by default; a small tanh network scorer is
available as the approximate mode.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AllocationMatrix, DeviceSet, TaskSet, _readonly


@dataclass(frozen=True, eq=False)
class SensingContext:
    """Fixed-length sensing vector describing one day's scenario."""

    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("sensing context must be a nonempty 1-D vector")
        object.__setattr__(self, "features", _readonly(f.copy()))


@dataclass(frozen=True, eq=False)
class EnvironmentMatrix:
    """Importance-times-capacity matrix with the sensing context that produced it."""

    values: np.ndarray  # (n_tasks, n_devices), nonnegative
    context: SensingContext
    day_id: int = -1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("environment values must be a 2-D matrix")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("environment values must be finite and nonnegative")
        object.__setattr__(self, "values", _readonly(v.copy()))

    @property
    def n_tasks(self) -> int:
        return self.values.shape[0]

    @property
    def n_devices(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class EnvironmentLibrary:
    """Historical collection of environments with consistent shapes."""

    entries: tuple[EnvironmentMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.entries:
            shape = self.entries[0].values.shape
            dim = self.entries[0].context.features.size
            for e in self.entries:
                if e.values.shape != shape or e.context.features.size != dim:
                    raise ValueError("library entries must share matrix shape and context dim")

    def __len__(self) -> int:
        return len(self.entries)

    def context_matrix(self) -> np.ndarray:
        return np.stack([e.context.features for e in self.entries])


def build_environment(importances: Sequence[float], capacities: Sequence[float],
                      context: SensingContext, day_id: int = -1) -> EnvironmentMatrix:
    """Outer product of clamped importances and device capacities."""
    imp = np.asarray(importances, dtype=float)
    cap = np.asarray(capacities, dtype=float)
    if imp.size == 0 or cap.size == 0:
        raise ValueError("importances and capacities must be nonempty")
    values = np.outer(np.clip(imp, 0.0, None), cap)
    return EnvironmentMatrix(values, context, day_id)


def implied_importances(env: EnvironmentMatrix, capacities: Sequence[float]) -> np.ndarray:
    """Recover the importance column from an environment matrix.

    Uses the first device with positive capacity; exact for matrices built by
    ``build_environment`` and the mean of source importances for kNN averages.
    """
    cap = np.asarray(capacities, dtype=float)
    pos = np.nonzero(cap > 0)[0]
    if pos.size == 0:
        raise ValueError("cannot recover importances: all capacities are zero")
    p = int(pos[0])
    return env.values[:, p] / cap[p]


def standardize_contexts(library_contexts: np.ndarray,
                         query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature z-score by library statistics; zero-variance features drop out."""
    mean = library_contexts.mean(axis=0)
    std = library_contexts.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    lib_z = (library_contexts - mean) / scale
    q_z = (query - mean) / scale
    dead = std == 0
    lib_z[:, dead] = 0.0
    q_z[dead] = 0.0
    return lib_z, q_z


def knn_environment(library: EnvironmentLibrary, z: SensingContext, k: int = 1) -> EnvironmentMatrix:
    """Retrieve the environment for a query context.

    Finds the k library entries nearest in standardized Euclidean distance and
    returns the elementwise mean of their matrices (k=1: the nearest matrix
    verbatim) with the query context attached.
    """
    if len(library) == 0:
        raise ValueError("environment library is empty")
    if not 1 <= k <= len(library):
        raise ValueError(f"k must be in [1, {len(library)}]")
    contexts = library.context_matrix()
    if z.features.size != contexts.shape[1]:
        raise ValueError("query context dimensionality mismatch")
    lib_z, q_z = standardize_contexts(contexts, z.features)
    dist = np.sqrt(((lib_z - q_z) ** 2).sum(axis=1))
    nearest = np.argsort(dist, kind="stable")[:k]
    if k == 1:
        src = library.entries[int(nearest[0])]
        return EnvironmentMatrix(src.values, z, src.day_id)
    values = np.mean([library.entries[int(i)].values for i in nearest], axis=0)
    return EnvironmentMatrix(values, z, -1)


@dataclass(frozen=True, eq=False)
class MdpState:
    """Selection matrix plus the device cursor and remaining per-device budgets."""

    selected: np.ndarray           # (n_tasks, n_devices) int8
    cursor_device: int
    remaining_time: np.ndarray     # (n_devices,)
    remaining_capacity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "selected", _readonly(np.asarray(self.selected, dtype=np.int8)))
        object.__setattr__(self, "remaining_time",
                           _readonly(np.asarray(self.remaining_time, dtype=float)))
        object.__setattr__(self, "remaining_capacity",
                           _readonly(np.asarray(self.remaining_capacity, dtype=float)))

    def key(self) -> str:
        bits = "".join("1" if b else "0" for b in self.selected.ravel())
        return f"{bits}:{self.cursor_device}"


def initial_state(tasks: TaskSet, devices: DeviceSet, deadline_s: float) -> MdpState:
    n, m = len(tasks), len(devices)
    return MdpState(
        selected=np.zeros((n, m), dtype=np.int8),
        cursor_device=0,
        remaining_time=np.full(m, float(deadline_s)),
        remaining_capacity=devices.capacities.astype(float).copy(),
    )


def _is_terminal(selected: np.ndarray, cursor: int, t: np.ndarray, v: np.ndarray,
                 rem_time: np.ndarray, rem_cap: np.ndarray) -> bool:
    m = rem_time.shape[0]
    if cursor >= m:
        return True
    unassigned = ~selected.any(axis=1)
    if not unassigned.any():
        return True
    fits = ((t[unassigned, None] <= rem_time[None, cursor:])
            & (v[unassigned, None] <= rem_cap[None, cursor:]))
    return not bool(fits.any())


def mdp_step(state: MdpState, action: int, env: EnvironmentMatrix, tasks: TaskSet,
             devices: DeviceSet, deadline_s: float) -> tuple[MdpState, float, bool]:
    """One MDP transition.

    Actions 0..N-1 place that task on the cursor device when it is unplaced
    and fits the remaining budgets; an invalid placement and action N both
    advance the cursor. Reward is 0 on every non-terminal step and the total
    importance of the placed tasks at the terminal step.
    """
    n, m = len(tasks), len(devices)
    if not 0 <= action <= n:
        raise ValueError(f"action {action} out of range [0, {n}]")
    if state.cursor_device >= m:
        raise ValueError("cannot step a terminal state")
    t, v = tasks.exec_times, tasks.demands
    selected = state.selected.copy()
    rem_time = state.remaining_time.copy()
    rem_cap = state.remaining_capacity.copy()
    cursor = state.cursor_device

    placeable = (action < n and not selected[action].any()
                 and t[action] <= rem_time[cursor] and v[action] <= rem_cap[cursor])
    if placeable:
        selected[action, cursor] = 1
        rem_time[cursor] -= t[action]
        rem_cap[cursor] -= v[action]
    else:
        cursor += 1

    done = _is_terminal(selected, cursor, t, v, rem_time, rem_cap)
    reward = float(tasks.importances[selected.any(axis=1)].sum()) if done else 0.0
    return MdpState(selected, cursor, rem_time, rem_cap), reward, done


@dataclass
class QPolicy:
    """Q-value store: a state-action table or a small tanh network scorer."""

    n_actions: int
    mode: str = "tabular"
    table: dict = field(default_factory=dict)       # (state_key, action) -> q
    weights: np.ndarray | None = None               # approx mode parameter vector
    arch: tuple[int, int, int] | None = None        # (input_dim, hidden, n_actions)
    discount: float = 1.0
    epsilon: float = 0.0
    lr: float = 0.1

    def __post_init__(self):
        if self.mode not in ("tabular", "approx"):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.mode == "approx":
            if self.arch is None:
                raise ValueError("approx mode requires arch")
            if self.weights is None:
                self.weights = np.zeros(n_params(self.arch))

    def q_values(self, state: MdpState, env: EnvironmentMatrix | None = None) -> np.ndarray:
        if self.mode == "tabular":
            key = state.key()
            return np.array([self.table.get((key, a), 0.0) for a in range(self.n_actions)])
        x = encode_state(state, env)
        return mlp_forward(self.weights, self.arch, x)


def n_params(arch: tuple[int, int, int]) -> int:
    d, h, a = arch
    return h * d + h + a * h + a


def encode_state(state: MdpState, env: EnvironmentMatrix) -> np.ndarray:
    """Network input: selection bits, cursor one-hot, budget fractions, environment."""
    m = state.remaining_time.shape[0]
    cursor = np.zeros(m + 1)
    cursor[min(state.cursor_device, m)] = 1.0
    env_flat = env.values.ravel()
    scale = env_flat.max()
    env_norm = env_flat / scale if scale > 0 else env_flat
    t0 = state.remaining_time.max() if state.remaining_time.size else 1.0
    c0 = state.remaining_capacity.max() if state.remaining_capacity.size else 1.0
    return np.concatenate([
        state.selected.ravel().astype(float),
        cursor,
        state.remaining_time / (t0 if t0 > 0 else 1.0),
        state.remaining_capacity / (c0 if c0 > 0 else 1.0),
        env_norm,
    ])


def input_dim(n_tasks: int, n_devices: int) -> int:
    return 2 * n_tasks * n_devices + 3 * n_devices + 1


def _unpack(weights: np.ndarray, arch: tuple[int, int, int]):
    d, h, a = arch
    i = 0
    w1 = weights[i:i + h * d].reshape(h, d); i += h * d
    b1 = weights[i:i + h]; i += h
    w2 = weights[i:i + a * h].reshape(a, h); i += a * h
    b2 = weights[i:i + a]
    return w1, b1, w2, b2


def mlp_forward(weights: np.ndarray, arch: tuple[int, int, int], x: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = _unpack(weights, arch)
    hidden = np.tanh(w1 @ x + b1)
    return w2 @ hidden + b2


def mlp_loss_grad(weights: np.ndarray, arch: tuple[int, int, int], x: np.ndarray,
                  action: int, target: float) -> tuple[float, np.ndarray]:
    """Squared TD loss (target - Q(x)[action])^2 and its gradient in the weights."""
    w1, b1, w2, b2 = _unpack(weights, arch)
    hidden = np.tanh(w1 @ x + b1)
    q = w2 @ hidden + b2
    err = target - q[action]
    loss = err * err
    dq = -2.0 * err
    gw2 = np.zeros_like(w2)
    gw2[action] = dq * hidden
    gb2 = np.zeros_like(b2)
    gb2[action] = dq
    dh = dq * w2[action]
    dz = dh * (1.0 - hidden ** 2)
    gw1 = np.outer(dz, x)
    gb1 = dz
    grad = np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])
    return float(loss), grad


def q_update(policy: QPolicy, transition: tuple, *,
             env: EnvironmentMatrix | None = None) -> tuple[QPolicy, float]:
    """One Q-learning update from a (state, action, reward, next_state, done) tuple.

    Tabular mode moves Q(s, a) toward r + discount * max_a' Q(s', a') (no
    bootstrap past a terminal step); approximate mode takes one SGD step on
    the squared TD loss with a frozen bootstrap target. Returns the policy
    and the TD loss value.
    """
    state, action, reward, next_state, done = transition
    if policy.mode == "tabular":
        key = state.key()
        q = policy.table.get((key, action), 0.0)
        bootstrap = 0.0
        if not done:
            bootstrap = policy.discount * float(policy.q_values(next_state).max())
        td = reward + bootstrap - q
        policy.table[(key, action)] = q + policy.lr * td
        return policy, float(td * td)
    x = encode_state(state, env)
    target = reward
    if not done:
        x_next = encode_state(next_state, env)
        target = reward + policy.discount * float(mlp_forward(policy.weights, policy.arch, x_next).max())
    loss, grad = mlp_loss_grad(policy.weights, policy.arch, x, action, target)
    policy.weights = policy.weights - policy.lr * grad
    return policy, loss


@dataclass(frozen=True)
class CrlHyperparams:
    episodes: int = 4000
    lr: float = 0.1
    discount: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    mode: str = "tabular"
    hidden: int = 64
    approx_lr: float = 1e-3
    eval_every: int = 50
    patience: int = 40    # eval rounds without improvement before stopping; 0 disables

    def __post_init__(self):
        if self.episodes <= 0:
            raise ValueError("episode budget must be > 0")


def greedy_rollout(policy: QPolicy, env: EnvironmentMatrix, tasks: TaskSet,
                   devices: DeviceSet, deadline_s: float,
                   allowed_actions: np.ndarray | None = None) -> tuple[MdpState, float]:
    """Epsilon=0 rollout from the empty state; returns the terminal state and return."""
    n = len(tasks)
    state = initial_state(tasks, devices, deadline_s)
    if _is_terminal(state.selected, state.cursor_device, tasks.exec_times, tasks.demands,
                    state.remaining_time, state.remaining_capacity):
        return state, float(tasks.importances[state.selected.any(axis=1)].sum())
    total = 0.0
    done = False
    while not done:
        q = policy.q_values(state, env)
        if allowed_actions is not None:
            q = np.where(allowed_actions, q, -np.inf)
        action = int(np.argmax(q))
        state, reward, done = mdp_step(state, action, env, tasks, devices, deadline_s)
        total += reward
    return state, total


def train_crl(env: EnvironmentMatrix, tasks: TaskSet, devices: DeviceSet, deadline_s: float,
              hyperparams: CrlHyperparams | None = None, seed: int = 0) -> QPolicy:
    """Epsilon-greedy Q-learning over the allocation MDP (seed-deterministic).

    Epsilon decays linearly from epsilon_start to epsilon_end over the first
    half of the episode budget. Greedy-rollout return is evaluated every
    ``eval_every`` episodes; the policy snapshot with the best return is
    returned, and training stops early after ``patience`` evaluations without
    improvement.
    """
    hp = hyperparams or CrlHyperparams()
    n, m = len(tasks), len(devices)
    if env.values.shape != (n, m):
        raise ValueError("environment shape does not match tasks/devices")
    rng = np.random.default_rng(seed)
    if hp.mode == "tabular":
        policy = QPolicy(n_actions=n + 1, mode="tabular", discount=hp.discount, lr=hp.lr)
    else:
        arch = (input_dim(n, m), hp.hidden, n + 1)
        w0 = rng.normal(0.0, 0.05, size=n_params(arch))
        policy = QPolicy(n_actions=n + 1, mode="approx", weights=w0, arch=arch,
                         discount=hp.discount, lr=hp.approx_lr)

    half = max(1, hp.episodes // 2)
    best_return = -np.inf
    best_snapshot = None
    stale = 0

    def snapshot():
        if policy.mode == "tabular":
            return dict(policy.table)
        return policy.weights.copy()

    # allocator boundary: tasks without positive importance are never placed,
    # in training rollouts as well as at inference
    allowed = np.ones(n + 1, dtype=bool)
    allowed[:n] = tasks.importances > 0
    allowed_idx = np.nonzero(allowed)[0]

    start = initial_state(tasks, devices, deadline_s)
    start_terminal = _is_terminal(start.selected, start.cursor_device, tasks.exec_times,
                                  tasks.demands, start.remaining_time, start.remaining_capacity)

    for episode in range(hp.episodes):
        if start_terminal:
            break
        eps = hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * min(1.0, episode / half)
        state = start
        done = False
        while not done:
            if rng.random() < eps:
                action = int(allowed_idx[rng.integers(0, allowed_idx.size)])
            else:
                q = np.where(allowed, policy.q_values(state, env), -np.inf)
                action = int(np.argmax(q))
            nxt, reward, done = mdp_step(state, action, env, tasks, devices, deadline_s)
            q_update(policy, (state, action, reward, nxt, done), env=env)
            state = nxt
        if (episode + 1) % hp.eval_every == 0 or episode == hp.episodes - 1:
            _, ret = greedy_rollout(policy, env, tasks, devices, deadline_s,
                                    allowed_actions=allowed)
            if ret > best_return:
                best_return = ret
                best_snapshot = snapshot()
                stale = 0
            else:
                stale += 1
                if hp.patience and stale >= hp.patience:
                    break

    if best_snapshot is not None:
        if policy.mode == "tabular":
            policy.table = best_snapshot
        else:
            policy.weights = best_snapshot
    policy.epsilon = 0.0
    return policy


def allocate_crl(policy: QPolicy, env: EnvironmentMatrix, tasks: TaskSet,
                 devices: DeviceSet, deadline_s: float) -> AllocationMatrix:
    """Greedy-rollout allocation; tasks with importance <= 0 are never placed."""
    n = len(tasks)
    allowed = np.ones(n + 1, dtype=bool)
    allowed[:n] = tasks.importances > 0
    state, _ = greedy_rollout(policy, env, tasks, devices, deadline_s, allowed_actions=allowed)
    return AllocationMatrix(state.selected.copy())


def save_policy_json(path: str | Path, policy: QPolicy) -> None:
    if policy.mode == "tabular":
        rows = sorted(
            [[key, int(a), float(q)] for (key, a), q in policy.table.items()],
            key=lambda r: (r[0], r[1]),
        )
        doc = {"mode": "tabular", "discount": policy.discount,
               "n_actions": policy.n_actions, "table": rows}
    else:
        doc = {"mode": "approx", "weights": [float(w) for w in policy.weights],
               "arch": list(policy.arch), "discount": policy.discount,
               "n_actions": policy.n_actions}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_policy_json(path: str | Path) -> QPolicy:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["mode"] == "tabular":
        table = {(key, int(a)): float(q) for key, a, q in doc["table"]}
        return QPolicy(n_actions=int(doc["n_actions"]), mode="tabular", table=table,
                       discount=float(doc["discount"]))
    return QPolicy(n_actions=int(doc["n_actions"]), mode="approx",
                   weights=np.asarray(doc["weights"], dtype=float),
                   arch=tuple(doc["arch"]), discount=float(doc["discount"]),
                   lr=1e-3)


def save_environment_library_csv(path: str | Path, day_ids: Sequence[int],
                                 contexts: np.ndarray, importances: np.ndarray) -> None:
    """One row per day: day id, context features, per-task importances."""
    contexts = np.asarray(contexts, dtype=float)
    importances = np.asarray(importances, dtype=float)
    d, n = contexts.shape[1], importances.shape[1]
    header = ["day_id"] + [f"ctx_{i}" for i in range(d)] + [f"I_{j}" for j in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for day, ctx, imp in zip(day_ids, contexts, importances):
            writer.writerow([int(day)] + [repr(float(x)) for x in ctx]
                            + [repr(float(x)) for x in imp])


def load_environment_library_csv(path: str | Path, capacities: Sequence[float]
                                 ) -> tuple[EnvironmentLibrary, np.ndarray, np.ndarray, list[int]]:
    """Read the library CSV; returns (library, contexts, importances, day_ids)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_ctx = sum(1 for h in header if h.startswith("ctx_"))
        n_tasks = sum(1 for h in header if h.startswith("I_"))
        if header != ["day_id"] + [f"ctx_{i}" for i in range(n_ctx)] + [f"I_{j}" for j in range(n_tasks)]:
            raise ValueError(f"bad environment library header in {path}")
        day_ids, contexts, importances = [], [], []
        for row in reader:
            day_ids.append(int(row[0]))
            contexts.append([float(x) for x in row[1:1 + n_ctx]])
            importances.append([float(x) for x in row[1 + n_ctx:]])
    contexts = np.asarray(contexts, dtype=float)
    importances = np.asarray(importances, dtype=float)
    entries = tuple(
        build_environment(importances[i], capacities, SensingContext(contexts[i]), day_ids[i])
        for i in range(len(day_ids))
    )
    return EnvironmentLibrary(entries), contexts, importances, day_ids
