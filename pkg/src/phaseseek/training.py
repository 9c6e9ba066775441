"""Paired-agent Q-learning over a video's clip timeline.

Two agents jointly search for one phase's (begin, end) clip pair.  Each
agent owns a search window of ``window_len`` clips centered on its current
position; both agents observe the same state (the stacked contents of both
windows) and move their window one clip left or right per step.  A move is
rewarded +1 when it brings the window center closer to that video's true
transition and -1 otherwise.  Updates follow the usual pattern: experiences
go to a per-agent ring buffer, batches are regressed onto Bellman targets
from a periodically synchronized target network.

Position updates keep ``begin <= end`` at all times: moves are clamped to
the video bounds and against the partner position (begin first, then end
against the fresh begin position).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import PhaseseekError
from .features import FeatureSequence, TransitionSet
from .nets import (
    AdamState,
    QNetwork,
    StateTensor,
    adam_init,
    adam_step,
    backward_batch,
    clone_params,
    copy_params_into,
    forward_batch,
    huber_loss,
    init_qnetwork,
    param_list,
)

logger = logging.getLogger(__name__)

ACTION_RIGHT = 0
ACTION_LEFT = 1
ROLE_BEGIN = "begin"
ROLE_END = "end"


@dataclass
class ExperienceRecord:
    """One transition: shared state, successor state, the agent's action and reward."""

    state: StateTensor
    next_state: StateTensor
    action: int
    reward: int

    def __post_init__(self):
        if self.action not in (ACTION_RIGHT, ACTION_LEFT):
            raise ValueError(f"unknown action {self.action}")
        if self.reward not in (1, -1):
            raise ValueError(f"reward must be +1 or -1, got {self.reward}")


class ReplayMemory:
    """Fixed-capacity ring buffer of experiences, oldest evicted first.

    States are stored in preallocated arrays so a batch sample is a single
    gather per field.
    """

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._states = None
        self._next_states = None
        self._actions = np.empty(capacity, dtype=np.int64)
        self._rewards = np.empty(capacity, dtype=np.int64)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, record: ExperienceRecord) -> None:
        rows = record.state.rows
        if self._states is None:
            self._states = np.empty((self.capacity,) + rows.shape)
            self._next_states = np.empty_like(self._states)
        self._states[self._head] = rows
        self._next_states[self._head] = record.next_state.rows
        self._actions[self._head] = record.action
        self._rewards[self._head] = record.reward
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        """Uniform sample without replacement: (states, next_states, actions, rewards)."""
        if batch > self._size:
            raise PhaseseekError(f"cannot sample {batch} from memory of size {self._size}")
        idx = rng.choice(self._size, size=batch, replace=False)
        return (
            self._states[idx],
            self._next_states[idx],
            self._actions[idx],
            self._rewards[idx],
        )


@dataclass
class TrainConfig:
    episodes_max: int = 10
    max_steps_per_video: int = 200
    batch: int = 128
    lr: float = 3e-4
    gamma: float = 0.9
    eps_start: float = 0.9
    eps_min: float = 0.05
    eps_decay: float = 0.995
    target_sync_period: int = 100
    seed: int = 0
    window_len: int = 5
    hidden_dim: int = 64
    num_layers: int = 2
    memory_capacity: int = 10000

    def __post_init__(self):
        if self.episodes_max < 0:
            raise ValueError("episodes_max must be >= 0")
        if min(self.max_steps_per_video, self.batch, self.target_sync_period,
               self.window_len, self.hidden_dim, self.num_layers,
               self.memory_capacity) < 1:
            raise ValueError("config counts must be >= 1")
        if not (self.lr > 0 and self.eps_decay > 0):
            raise ValueError("lr and eps_decay must be positive")
        for eps in (self.eps_start, self.eps_min):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon values must lie in [0, 1]")
        if self.gamma < 0 or self.gamma >= 1:
            raise ValueError("gamma must lie in [0, 1)")

    def epsilon_at(self, episode: int) -> float:
        return max(self.eps_min, self.eps_start * self.eps_decay ** episode)


@dataclass
class AgentPair:
    """Begin/end networks with their targets, optimizers and replay memories."""

    begin_net: QNetwork
    end_net: QNetwork
    begin_target: QNetwork
    end_target: QNetwork
    begin_adam: AdamState
    end_adam: AdamState
    begin_memory: ReplayMemory
    end_memory: ReplayMemory
    window_len: int
    begin_updates: int = 0
    end_updates: int = 0


def create_agent_pair(input_dim: int, cfg: TrainConfig) -> AgentPair:
    seeds = np.random.default_rng(cfg.seed).integers(2**63, size=2)
    begin = init_qnetwork(input_dim, cfg.hidden_dim, cfg.num_layers, seed=int(seeds[0]))
    end = init_qnetwork(input_dim, cfg.hidden_dim, cfg.num_layers, seed=int(seeds[1]))
    return AgentPair(
        begin_net=begin,
        end_net=end,
        begin_target=clone_params(begin),
        end_target=clone_params(end),
        begin_adam=adam_init(param_list(begin), lr=cfg.lr),
        end_adam=adam_init(param_list(end), lr=cfg.lr),
        begin_memory=ReplayMemory(cfg.memory_capacity),
        end_memory=ReplayMemory(cfg.memory_capacity),
        window_len=cfg.window_len,
    )


# ---------------------------------------------------------------------------
# Environment primitives
# ---------------------------------------------------------------------------

def window_indices(center: int, window_len: int, num_clips: int) -> tuple[np.ndarray, np.ndarray]:
    """Clip indices of a window centered at ``center`` and their in-range mask."""
    half = window_len // 2
    idx = np.arange(center - half, center - half + window_len)
    return idx, (idx >= 0) & (idx < num_clips)


def build_state(
    seq: FeatureSequence, pos_begin: int, pos_end: int, window_len: int
) -> StateTensor:
    """Stack both windows' clip features (begin window first) into one state.

    Window positions outside the video contribute zero rows, flagged in the
    returned tensor.
    """
    if pos_begin > pos_end:
        raise PhaseseekError(f"window order violated: begin {pos_begin} > end {pos_end}")
    t = seq.num_clips
    idx_b, ok_b = window_indices(pos_begin, window_len, t)
    idx_e, ok_e = window_indices(pos_end, window_len, t)
    idx = np.concatenate((idx_b, idx_e))
    ok = np.concatenate((ok_b, ok_e))
    rows = np.zeros((2 * window_len, seq.dim))
    rows[ok] = seq.features[idx[ok]]
    return StateTensor(rows, padded=~ok)


def apply_action(pos: int, action: int, num_clips: int, partner: int, role: str) -> int:
    """Move one clip left/right, clamped to the video and to the pair order.

    The begin agent never moves right past its partner; the end agent never
    moves left past its partner.  Clamping absorbs the move, it never fails.
    """
    step = 1 if action == ACTION_RIGHT else -1
    new = min(max(pos + step, 0), num_clips - 1)
    if role == ROLE_BEGIN:
        return min(new, partner)
    if role == ROLE_END:
        return max(new, partner)
    raise ValueError(f"unknown role {role!r}")


def compute_reward(old_center: int, new_center: int, gt: int) -> int:
    """+1 when the window center moved strictly closer to ``gt``, else -1."""
    return 1 if abs(new_center - gt) < abs(old_center - gt) else -1


def select_action(
    net: QNetwork, state: StateTensor, epsilon: float, rng: np.random.Generator | None
) -> int:
    """Epsilon-greedy action; greedy ties resolve to Right."""
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(2))
    q, _ = forward_batch(net, state.rows, need_cache=False)
    return ACTION_RIGHT if q[ACTION_RIGHT] >= q[ACTION_LEFT] else ACTION_LEFT


def dqn_update(
    net: QNetwork,
    target_net: QNetwork,
    memory: ReplayMemory,
    batch: int,
    gamma: float,
    adam: AdamState,
    rng: np.random.Generator,
    scratch: dict | None = None,
) -> float | None:
    """One Bellman regression step; returns batch loss, or None when the
    memory holds fewer than ``batch`` records (no update performed).

    ``scratch`` is an optional private buffer dict reused across updates of
    the same agent (see ``forward_batch``).
    """
    if len(memory) < batch:
        return None
    states, next_states, actions, rewards = memory.sample(batch, rng)
    q, cache = forward_batch(net, states, need_cache=True, scratch=scratch)
    if gamma != 0.0:
        q_next, _ = forward_batch(target_net, next_states, need_cache=False, scratch=scratch)
        targets = rewards + gamma * q_next.max(axis=1)
    else:
        targets = rewards.astype(np.float64)
    rows = np.arange(batch)
    losses, dpred = huber_loss(q[rows, actions], targets)
    dq = np.zeros((batch, q.shape[1]))
    dq[rows, actions] = dpred / batch
    grads = backward_batch(net, cache, dq, scratch=scratch)
    adam_step(param_list(net), grads, adam)
    return float(losses.mean())


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainVideoLog:
    """Per-(episode, video) training telemetry."""

    episode: int
    video: int
    begin_loss: float
    end_loss: float
    begin_error: int
    end_error: int


@dataclass
class _AgentSlot:
    # Internal view of one agent's mutable training pieces.
    net: QNetwork
    target: QNetwork
    adam: AdamState
    memory: ReplayMemory
    role: str
    gt: int = 0
    updates: int = 0
    loss_sum: float = 0.0
    loss_count: int = 0
    pos: int = 0
    scratch: dict = field(default_factory=dict)


def train(
    dataset: list[tuple[FeatureSequence, TransitionSet]],
    phase: int,
    cfg: TrainConfig,
    init,
    on_video=None,
) -> AgentPair:
    """Train one phase's agent pair over the dataset.

    Runs ``episodes_max`` episodes; within an episode every usable video is
    played for exactly ``max_steps_per_video`` steps (no early stopping).
    Every step, both agents act epsilon-greedily on the shared state, store
    one experience each, and receive one Bellman update each (skipped while
    a memory holds fewer than ``batch`` records).  Videos that do not
    contain ``phase`` are skipped with a warning.  ``init`` provides the
    initial window positions per video (see the inference module); its
    ``initial_positions(video, phase)`` hook is used exactly as at
    inference time.  ``on_video`` receives a :class:`TrainVideoLog` after
    each video.  Deterministic for a fixed (dataset, cfg, init).
    """
    if not dataset:
        raise PhaseseekError("empty training dataset")
    usable = []
    for vid, (seq, ts) in enumerate(dataset):
        pair = ts.get(phase)
        if pair is None:
            logger.warning("video %d does not contain phase %d; skipped", vid, phase)
            continue
        usable.append((vid, seq, pair))
    if not usable:
        raise PhaseseekError(f"phase {phase} absent from every training video")

    from .inference import init_positions  # deferred: inference builds on this module

    rng = np.random.default_rng(cfg.seed)
    agents = create_agent_pair(usable[0][1].dim, cfg)
    starts = [init_positions(init, seq, phase) for _, seq, _ in usable]

    begin = _AgentSlot(agents.begin_net, agents.begin_target, agents.begin_adam,
                       agents.begin_memory, ROLE_BEGIN)
    end = _AgentSlot(agents.end_net, agents.end_target, agents.end_adam,
                     agents.end_memory, ROLE_END)

    for episode in range(cfg.episodes_max):
        eps = cfg.epsilon_at(episode)
        for (vid, seq, (gt_b, gt_e)), (p0_b, p0_e) in zip(usable, starts):
            begin.gt, end.gt = gt_b, gt_e
            begin.pos, end.pos = p0_b, p0_e
            for slot in (begin, end):
                slot.loss_sum, slot.loss_count = 0.0, 0
            t = seq.num_clips
            state = build_state(seq, begin.pos, end.pos, cfg.window_len)
            for _ in range(cfg.max_steps_per_video):
                act_b = select_action(begin.net, state, eps, rng)
                act_e = select_action(end.net, state, eps, rng)
                new_b = apply_action(begin.pos, act_b, t, partner=end.pos, role=ROLE_BEGIN)
                new_e = apply_action(end.pos, act_e, t, partner=new_b, role=ROLE_END)
                next_state = build_state(seq, new_b, new_e, cfg.window_len)
                for slot, action, new_pos in ((begin, act_b, new_b), (end, act_e, new_e)):
                    reward = compute_reward(slot.pos, new_pos, slot.gt)
                    slot.memory.push(ExperienceRecord(state, next_state, action, reward))
                    loss = dqn_update(slot.net, slot.target, slot.memory,
                                      cfg.batch, cfg.gamma, slot.adam, rng,
                                      scratch=slot.scratch)
                    if loss is not None:
                        slot.loss_sum += loss
                        slot.loss_count += 1
                        slot.updates += 1
                        if slot.updates % cfg.target_sync_period == 0:
                            copy_params_into(slot.net, slot.target)
                    slot.pos = new_pos
                state = next_state
            if on_video is not None:
                on_video(TrainVideoLog(
                    episode=episode,
                    video=vid,
                    begin_loss=begin.loss_sum / begin.loss_count if begin.loss_count else float("nan"),
                    end_loss=end.loss_sum / end.loss_count if end.loss_count else float("nan"),
                    begin_error=abs(begin.pos - gt_b),
                    end_error=abs(end.pos - gt_e),
                ))

    agents.begin_updates = begin.updates
    agents.end_updates = end.updates
    return agents
