"""Watkins Q(lambda) agent with tile coding, for bang-bang and quasi-continuous protocols.

The agent sees only ``(time_index, field)`` and a reward at the end of each
episode; the quantum state is hidden behind :class:`Environment`.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qglass import kernels, rng
from qglass.problem import as_problem
from qglass.protocols import H_MAX, Protocol, TimeGrid
from qglass.results import OptimizationResult, best_of

H_MIN = -H_MAX


@dataclass(frozen=True)
class ActionSet:
    deltas: tuple[float, ...]

    def __post_init__(self):
        if len(self.deltas) == 0:
            raise ValueError("empty action set")
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))

    @classmethod
    def bang_bang(cls) -> "ActionSet":
        return cls((-8.0, 0.0, 8.0))

    @classmethod
    def quasi_continuous(cls) -> "ActionSet":
        steps = (0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0)
        return cls(tuple(-s for s in reversed(steps)) + (0.0,) + steps)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.deltas)

    def __len__(self):
        return len(self.deltas)

    def legal(self, h: float) -> np.ndarray:
        hn = h + self.array
        return (hn >= H_MIN - kernels.LEGAL_TOL) & (hn <= H_MAX + kernels.LEGAL_TOL)


@dataclass(frozen=True)
class RLState:
    time_index: int
    field_value: float


@dataclass(frozen=True)
class TrainingSchedule:
    total_episodes: int = 20_000
    phase_length: int = 40
    beta_start: float = 0.1
    beta_end: float = 50.0

    def __post_init__(self):
        if self.total_episodes < 1 or self.phase_length < 1:
            raise ValueError("episode counts must be positive")
        if self.beta_end < self.beta_start or self.beta_start < 0:
            raise ValueError("beta must be non-negative and non-decreasing")

    def beta(self, episode: int) -> float:
        if self.total_episodes == 1:
            return self.beta_end
        return self.beta_start + (self.beta_end - self.beta_start) * episode / (self.total_episodes - 1)

    def is_replay(self, episode: int) -> bool:
        """Phases alternate exploratory/replay, starting exploratory."""
        return (episode // self.phase_length) % 2 == 1


class QFunction:
    """Linear Q over tile-coded field values, crossed with the exact time index.

    ``weights[t, a, k, j]`` is the weight of tile ``j`` in tiling ``k`` for
    action ``a`` at time step ``t``. Tiling ``k`` is shifted by ``k / n_tilings``
    of a tile width; the extra last tile absorbs the shift at the top edge.
    """

    def __init__(self, n_steps: int, actions: ActionSet, n_tilings: int = 5, n_tiles: int = 20,
                 alpha: float = 0.1, trace_decay: float = 0.6, watkins: bool = True):
        if not 0 < alpha < 1 and alpha != 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= trace_decay <= 1:
            raise ValueError("trace_decay must lie in [0, 1]")
        self.actions = actions
        self.n_tilings = n_tilings
        self.n_tiles = n_tiles
        self.alpha = alpha
        self.trace_decay = trace_decay
        self.watkins = watkins
        self.weights = np.zeros((n_steps, len(actions), n_tilings, n_tiles + 1))
        self.traces = np.zeros_like(self.weights)

    @property
    def n_steps(self) -> int:
        return self.weights.shape[0]

    def tiles(self, h: float) -> list[int]:
        width = (H_MAX - H_MIN) / self.n_tiles
        return [kernels.tile_index(h, k, H_MIN, width, self.n_tilings, self.n_tiles) for k in range(self.n_tilings)]

    def values(self, s: RLState) -> np.ndarray:
        """Q for every action; illegal actions are ``-inf``."""
        if s.time_index >= self.n_steps:
            return np.zeros(len(self.actions))
        return kernels.rl_q_values(self.weights, s.time_index, s.field_value, self.actions.array, H_MIN, H_MAX)

    def value(self, s: RLState, a: int) -> float:
        return float(self.values(s)[a])

    def reset_traces(self):
        self.traces[:] = 0.0

    def _mark(self, s: RLState, a: int):
        for k, j in enumerate(self.tiles(s.field_value)):
            self.traces[s.time_index, a, k, j] = 1.0


def q_update(q: QFunction, s: RLState, a: int, r: float, s_next: RLState | None,
             next_action: int | None = None) -> QFunction:
    """One online Watkins Q(lambda) step; ``s_next=None`` marks the terminal step.

    Traces decay by ``trace_decay`` and the visited features are set to 1
    (replacing traces). When ``next_action`` is given and is not greedy in
    ``s_next`` the traces are cleared afterwards.
    """
    q.traces *= q.trace_decay
    q._mark(s, a)
    target = r
    if s_next is not None:
        target += float(np.max(q.values(s_next)))
    delta = target - q.value(s, a)
    q.weights += (q.alpha / q.n_tilings) * delta * q.traces
    if q.watkins and s_next is not None and next_action is not None:
        qn = q.values(s_next)
        if qn[next_action] < np.max(qn) - kernels.GREEDY_TOL:
            q.reset_traces()
    return q


def softmax_probabilities(qvals, beta: float) -> np.ndarray:
    qvals = np.asarray(qvals, dtype=float)
    legal = np.isfinite(qvals)
    p = np.zeros_like(qvals)
    if math.isinf(beta):
        p[int(np.argmax(qvals))] = 1.0
        return p
    z = beta * (qvals[legal] - qvals[legal].max())
    w = np.exp(z)
    p[legal] = w / w.sum()
    return p


def softmax_action(q: QFunction, s: RLState, beta: float, gen: np.random.Generator) -> int:
    """Draw an action with probability proportional to ``exp(beta Q)`` over legal actions."""
    return int(kernels.softmax_sample(q.values(s), beta, gen.random()))


class Environment:
    """Hides the quantum problem; returns the terminal fidelity for a finished protocol."""

    def __init__(self, system, grid: TimeGrid):
        self._problem = as_problem(system)
        self.grid = grid
        self.n_evals = 0

    def reward(self, values) -> float:
        self.n_evals += 1
        return self._problem.fidelity_values(values, self.grid.dt)


@dataclass(frozen=True)
class RLConfig:
    alpha: float = 0.1
    alpha_decay: float = 0.0  # alpha_e = alpha / (1 + alpha_decay * e)
    trace_decay: float = 0.6
    n_tilings: int = 5
    n_tiles: int = 20
    watkins: bool = True
    h_start: float = H_MIN
    seeds: int = 1  # independent trainers for post-selection


def _snap(fields):
    # sums of action deltas drift by rounding; snapping keeps the propagator cache small
    return np.clip(np.round(fields, 9), H_MIN, H_MAX)


def train(system, grid: TimeGrid, actions: ActionSet = ActionSet.bang_bang(),
          schedule: TrainingSchedule = TrainingSchedule(), seed: int = 0,
          config: RLConfig = RLConfig()) -> OptimizationResult:
    """Train one agent and return the best protocol it produced.

    Reward is zero at every step except the last, where it is the fidelity.
    Within an episode all actions are chosen first and the temporal-difference
    updates follow in time order; because every step has its own features
    this is the same as updating online.
    """
    env = Environment(system, grid)
    gen = rng.stream(seed, "rl")
    q = QFunction(grid.N_T, actions, config.n_tilings, config.n_tiles, config.alpha,
                  config.trace_decay, config.watkins)
    deltas = actions.array
    E = schedule.total_episodes
    ep_fid = np.empty(E)
    best_trace = np.empty(E)
    betas = np.empty(E)
    replay_flags = np.zeros(E, dtype=bool)
    best_f, best_actions, best_values = -1.0, None, None
    for e in range(E):
        beta = schedule.beta(e)
        replay = schedule.is_replay(e) and best_actions is not None
        uniforms = gen.random(grid.N_T)
        acts, fields = kernels.rl_select(q.weights, config.h_start, deltas, H_MIN, H_MAX, beta,
                                         uniforms, best_actions if replay else None)
        values = _snap(fields[1:])
        f = env.reward(values)
        alpha = config.alpha / (1.0 + config.alpha_decay * e)
        kernels.rl_learn(q.weights, acts, fields, f, alpha, config.trace_decay, config.watkins,
                         deltas, H_MIN, H_MAX)
        if f > best_f:
            best_f, best_actions, best_values = f, acts.copy(), values
        ep_fid[e] = f
        best_trace[e] = best_f
        betas[e] = beta
        replay_flags[e] = replay
    return OptimizationResult(
        protocol=Protocol(grid, best_values),
        fidelity=float(best_f),
        trace=ep_fid,
        n_evals=env.n_evals,
        seed=seed,
        info={"best_trace": best_trace, "beta": betas, "replay": replay_flags, "q": q},
    )


def greedy_protocol(q: QFunction, grid: TimeGrid, h_start: float = H_MIN) -> Protocol:
    acts, fields = kernels.rl_select(q.weights, h_start, q.actions.array, H_MIN, H_MAX, math.inf,
                                     np.zeros(grid.N_T), None)
    return Protocol(grid, _snap(fields[1:]))


def _train_one(args):
    system, grid, actions, schedule, seed, config, r = args
    res = train(system, grid, actions, schedule, rng.derive_seed(seed, "rl-seed", r), config)
    res.info["seed_index"] = r
    res.info.pop("q")
    return res


def train_post_selected(system, grid: TimeGrid, actions: ActionSet = ActionSet.bang_bang(),
                        schedule: TrainingSchedule = TrainingSchedule(), seed: int = 0,
                        config: RLConfig = RLConfig(), workers: int = 1):
    """Train ``config.seeds`` independent agents; returns ``(best, all_results)``."""
    problem = as_problem(system)
    jobs = [(problem, grid, actions, schedule, seed, config, r) for r in range(config.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    return best_of(results), results


def write_episode_csv(result: OptimizationResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "phase_kind", "beta", "episode_fidelity", "best_fidelity"])
        for e, f in enumerate(result.trace):
            w.writerow([e, "replay" if result.info["replay"][e] else "explore",
                        repr(float(result.info["beta"][e])), repr(float(f)),
                        repr(float(result.info["best_trace"][e]))])
    return path
