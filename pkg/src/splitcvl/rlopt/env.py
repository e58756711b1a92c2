"""Partition-point selection cast as a sequential decision problem.

The environment state is the observable network context: one discretized
channel bin per device (a grid over bandwidth x SNR-in-dB), one battery
bin per device, and a step counter. The action jointly assigns one
partition candidate to every device, flattened to a single discrete id.
The reward is the additive inverse of the decision's effect value, so it
lies in [-1, 0] whenever the cost weights sum to 1; an infeasible link
(zero rate) yields the worst reward of -1 instead of an error so that
learning can continue.

Episodes default to a single step: the partition choice has no state
dynamics, so the problem is a contextual bandit over sampled channel
states. A longer horizon can be configured, in which case channels are
redrawn every step and the step counter becomes part of the state.

Battery and step bins exist because they are part of the observable
context; no cost term consumes battery, it is carried as state only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ZeroRateError
from ..netmodel import ChannelDistribution, ChannelState, sample_channel
from ..trico import PartitionDecision, Scenario, decision_effect

MAX_JOINT_ACTIONS = 125  # 5 candidates ** 3 devices


@dataclass(frozen=True)
class EnvState:
    """Decoded environment state."""

    channel_bins: tuple[int, ...]  # one bin index per device
    battery_bins: tuple[int, ...]  # one bin index per device
    step: int


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    reward: float
    next_state: int
    done: bool


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling (with replacement)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, rng: np.random.Generator, batch_size: int) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


class _ChannelGrid:
    """Bin layout for one device's channel.

    Fixed channels get a single bin; distributions are split into
    bandwidth_bins x snr_bins equal sub-ranges (SNR split in dB).
    """

    def __init__(
        self,
        channel: ChannelState | ChannelDistribution,
        bandwidth_bins: int,
        snr_bins: int,
    ):
        self.channel = channel
        if isinstance(channel, ChannelState):
            self.bandwidth_bins = 1
            self.snr_bins = 1
        else:
            self.bandwidth_bins = bandwidth_bins
            self.snr_bins = snr_bins

    @property
    def n_bins(self) -> int:
        return self.bandwidth_bins * self.snr_bins

    def _sub_range(self, lo: float, hi: float, bins: int, index: int):
        width = (hi - lo) / bins
        return lo + index * width, lo + (index + 1) * width

    def bin_of(self, ch: ChannelState) -> int:
        if isinstance(self.channel, ChannelState):
            return 0
        lo, hi = self.channel.bandwidth_range
        ibw = 0
        if hi > lo:
            ibw = min(int((ch.bandwidth_hz - lo) / (hi - lo) * self.bandwidth_bins),
                      self.bandwidth_bins - 1)
        lo_db, hi_db = self.channel.snr_range_db
        isnr = 0
        if hi_db > lo_db:
            db = 10.0 * np.log10(ch.snr_linear)
            isnr = min(int((db - lo_db) / (hi_db - lo_db) * self.snr_bins),
                       self.snr_bins - 1)
            isnr = max(isnr, 0)
        return ibw * self.snr_bins + isnr

    def sample_fresh(self, rng: np.random.Generator) -> tuple[int, ChannelState]:
        """Draw from the full distribution and report which bin it landed in."""
        if isinstance(self.channel, ChannelState):
            return 0, self.channel
        ch = sample_channel(self.channel, rng)
        return self.bin_of(ch), ch

    def sample_within(self, bin_index: int, rng: np.random.Generator) -> ChannelState:
        """Draw a concrete channel from the given bin's sub-ranges."""
        if isinstance(self.channel, ChannelState):
            return self.channel
        ibw, isnr = divmod(bin_index, self.snr_bins)
        bw_lo, bw_hi = self._sub_range(*self.channel.bandwidth_range,
                                       self.bandwidth_bins, ibw)
        db_lo, db_hi = self._sub_range(*self.channel.snr_range_db,
                                       self.snr_bins, isnr)
        return sample_channel(
            ChannelDistribution((bw_lo, bw_hi), (db_lo, db_hi)), rng
        )

    def midpoint(self, bin_index: int) -> ChannelState:
        if isinstance(self.channel, ChannelState):
            return self.channel
        ibw, isnr = divmod(bin_index, self.snr_bins)
        bw_lo, bw_hi = self._sub_range(*self.channel.bandwidth_range,
                                       self.bandwidth_bins, ibw)
        db_lo, db_hi = self._sub_range(*self.channel.snr_range_db,
                                       self.snr_bins, isnr)
        return ChannelDistribution((bw_lo, bw_hi), (db_lo, db_hi)).mean_channel()


class PartitionEnv:
    """Joint partition-selection environment over one scenario."""

    def __init__(
        self,
        scenario: Scenario,
        bandwidth_bins: int = 1,
        snr_bins: int = 2,
        battery_bins: int = 1,
        horizon: int = 1,
    ):
        if bandwidth_bins < 1 or snr_bins < 1 or battery_bins < 1:
            raise ValueError("bin counts must be >= 1")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        n_actions = scenario.num_candidates ** scenario.num_devices
        if n_actions > MAX_JOINT_ACTIONS:
            raise ValueError(
                f"joint action space {n_actions} exceeds the cap of "
                f"{MAX_JOINT_ACTIONS}; reduce devices or candidates"
            )
        self.scenario = scenario
        self.horizon = horizon
        self.battery_bins = battery_bins
        self.grids = [
            _ChannelGrid(ch, bandwidth_bins, snr_bins) for ch in scenario.channels
        ]
        self._combo_sizes = [g.n_bins for g in self.grids] + [
            battery_bins for _ in scenario.devices
        ]

    # -- spaces ----------------------------------------------------------

    @property
    def n_actions(self) -> int:
        return self.scenario.num_candidates ** self.scenario.num_devices

    @property
    def n_combos(self) -> int:
        out = 1
        for size in self._combo_sizes:
            out *= size
        return out

    @property
    def n_states(self) -> int:
        return self.n_combos * self.horizon

    @property
    def feature_dim(self) -> int:
        return sum(self._combo_sizes) + (self.horizon if self.horizon > 1 else 0)

    # -- encodings -------------------------------------------------------

    def encode_state(self, state: EnvState) -> int:
        digits = list(state.channel_bins) + list(state.battery_bins)
        combo = 0
        for digit, size in zip(digits, self._combo_sizes):
            if not 0 <= digit < size:
                raise ValueError(f"state digit {digit} out of range {size}")
            combo = combo * size + digit
        return state.step * self.n_combos + combo

    def decode_state(self, state_id: int) -> EnvState:
        step, combo = divmod(state_id, self.n_combos)
        digits = []
        for size in reversed(self._combo_sizes):
            combo, d = divmod(combo, size)
            digits.append(d)
        digits.reverse()
        n_dev = self.scenario.num_devices
        return EnvState(
            channel_bins=tuple(digits[:n_dev]),
            battery_bins=tuple(digits[n_dev:]),
            step=step,
        )

    def encode_action(self, cuts: tuple[int, ...]) -> int:
        action = 0
        for c in cuts:
            if not 0 <= c < self.scenario.num_candidates:
                raise ValueError(f"cut {c} out of range")
            action = action * self.scenario.num_candidates + c
        return action

    def decode_action(self, action: int) -> PartitionDecision:
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range")
        cuts = []
        for _ in range(self.scenario.num_devices):
            action, c = divmod(action, self.scenario.num_candidates)
            cuts.append(c)
        cuts.reverse()
        return PartitionDecision(tuple(cuts))

    def state_features(self, state_id: int) -> np.ndarray:
        """Concatenated one-hot bins (plus a step one-hot for horizons > 1)."""
        state = self.decode_state(state_id)
        parts = []
        for digit, size in zip(
            list(state.channel_bins) + list(state.battery_bins), self._combo_sizes
        ):
            one_hot = np.zeros(size)
            one_hot[digit] = 1.0
            parts.append(one_hot)
        if self.horizon > 1:
            step_hot = np.zeros(self.horizon)
            step_hot[state.step] = 1.0
            parts.append(step_hot)
        return np.concatenate(parts)

    # -- dynamics ---------------------------------------------------------

    def _sample_bins(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(grid.sample_fresh(rng)[0] for grid in self.grids)

    def reset(self, rng: np.random.Generator) -> int:
        state = EnvState(
            channel_bins=self._sample_bins(rng),
            battery_bins=tuple(0 for _ in self.grids),
            step=0,
        )
        return self.encode_state(state)

    def step(self, state_id: int, action: int, rng: np.random.Generator) -> Transition:
        state = self.decode_state(state_id)
        decision = self.decode_action(action)
        channels = tuple(
            grid.sample_within(b, rng)
            for grid, b in zip(self.grids, state.channel_bins)
        )
        try:
            reward = -decision_effect(self.scenario, decision, channels)
        except ZeroRateError:
            reward = -1.0
        done = state.step + 1 >= self.horizon
        next_state = EnvState(
            channel_bins=self._sample_bins(rng),
            battery_bins=state.battery_bins,
            step=0 if done else state.step + 1,
        )
        return Transition(
            state=state_id,
            action=action,
            reward=reward,
            next_state=self.encode_state(next_state),
            done=done,
        )

    # -- deterministic evaluation -----------------------------------------

    def evaluate_action(self, state_id: int, action: int) -> float:
        """Effect of an action under the state's bin-midpoint channels."""
        state = self.decode_state(state_id)
        channels = tuple(
            grid.midpoint(b) for grid, b in zip(self.grids, state.channel_bins)
        )
        try:
            return decision_effect(self.scenario, self.decode_action(action), channels)
        except ZeroRateError:
            return 1.0

    def action_effects(self, state_id: int) -> np.ndarray:
        return np.array(
            [self.evaluate_action(state_id, a) for a in range(self.n_actions)]
        )
