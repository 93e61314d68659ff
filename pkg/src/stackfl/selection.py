"""Leader side: age-of-update bookkeeping, priority ordering and device selection.

The AoU scheme orders devices by ``age * data size`` and keeps replacing the
devices the follower could not place on a feasible sub-channel with the next
devices of the list. The baseline schemes (random, cluster rotation, fixed set)
only choose the set; the follower then runs on it unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from stackfl.allocation import AllocationResult, fixed_allocation, gamma_from_columns, solve_allocation
from stackfl.matching import Matching, fixed_matching, random_matching, stable_match
from stackfl.system import ChannelMatrix, Device, SystemConfig


@dataclass(frozen=True)
class AoUState:
    ages: tuple

    @classmethod
    def initial(cls, num_devices: int) -> "AoUState":
        return cls(ages=(1,) * num_devices)

    def __post_init__(self):
        if any(int(a) != a or a < 1 for a in self.ages):
            raise ValueError(f"ages must be integers >= 1, got {self.ages}")


def update_aou(state: AoUState, participated) -> AoUState:
    """Reset the age of every device that uploaded this round, age the rest by one.

    ``participated[n]`` must be true only for devices that were selected *and*
    held a feasible sub-channel.
    """
    if len(participated) != len(state.ages):
        raise ValueError("participation flags do not match the number of devices")
    return AoUState(ages=tuple(1 if ok else a + 1 for a, ok in zip(state.ages, participated)))


def aou_weights(state: AoUState) -> np.ndarray:
    ages = np.asarray(state.ages, dtype=float)
    return ages / ages.sum()


def priority_list(weights, betas) -> list[int]:
    """Device ids by descending weight * data size; ties go to the lower id."""
    if len(weights) != len(betas):
        raise ValueError("weights and betas must have equal length")
    scores = [float(w) * float(b) for w, b in zip(weights, betas)]
    return sorted(range(len(scores)), key=lambda n: (-scores[n], n))


@dataclass
class Follower:
    """Predicts the follower's play (allocation + assignment) for a candidate set.

    Gamma columns depend only on the (device, channel) pairs, so they are cached
    for the lifetime of the object, which is one round.
    """

    config: SystemConfig
    channels: ChannelMatrix
    devices: list
    ra: str = "mo"
    sa: str = "match"
    fixed_point: tuple = (0.5, 0.5)
    rng: np.random.Generator | None = None
    random_init: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.ra not in ("mo", "fix"):
            raise ValueError(f"unknown resource allocation {self.ra!r}")
        if self.sa not in ("match", "random"):
            raise ValueError(f"unknown sub-channel assignment {self.sa!r}")
        if (self.sa == "random" or self.random_init) and self.rng is None:
            raise ValueError("random assignment needs an rng")

    def column(self, device_id: int) -> list[AllocationResult]:
        if device_id not in self._cache:
            dev: Device = self.devices[device_id]
            gains = self.channels.gains[:, device_id]
            if self.ra == "fix":
                col = [fixed_allocation(dev, g, self.config, *self.fixed_point) for g in gains]
            else:
                col = [solve_allocation(dev, g, self.config) for g in gains]
            self._cache[device_id] = col
        return self._cache[device_id]

    def gamma(self, device_ids):
        return gamma_from_columns([self.column(n) for n in device_ids], device_ids)

    def solve(self, device_ids):
        gamma = self.gamma(device_ids)
        size = len(device_ids)
        if self.sa == "random":
            return gamma, fixed_matching(gamma, random_matching(self.rng, size))
        initial = random_matching(self.rng, size) if self.random_init else None
        return gamma, stable_match(gamma, initial)


@dataclass(frozen=True)
class SelectionOutcome:
    selected: tuple  # device ids, in Gamma column order
    gamma: object
    matching: Matching
    replaced_count: int = 0
    passes: int = 1

    @property
    def participants(self) -> tuple:
        return tuple(n for n, ok in zip(self.selected, self.matching.assigned) if ok)

    @property
    def dropped(self) -> tuple:
        return tuple(n for n, ok in zip(self.selected, self.matching.assigned) if not ok)


def select_devices_aou(order, k: int, follower: Follower) -> SelectionOutcome:
    """Greedy list selection with follower prediction.

    Start from the first ``k`` entries of ``order``; after every matching,
    swap each unplaced device for the next unused list entry, until all are
    placed or the list is exhausted.
    """
    order = list(order)
    selected = order[:k]
    cursor = len(selected)
    replaced = 0
    passes = 0
    while True:
        passes += 1
        gamma, matching = follower.solve(selected)
        unplaced = [j for j, ok in enumerate(matching.assigned) if not ok]
        if not unplaced or cursor >= len(order):
            break
        for j in unplaced:
            if cursor >= len(order):
                break
            selected[j] = order[cursor]
            cursor += 1
            replaced += 1
    return SelectionOutcome(
        selected=tuple(selected), gamma=gamma, matching=matching,
        replaced_count=replaced, passes=passes,
    )


def select_top(order, k: int, follower: Follower) -> SelectionOutcome:
    """Top-``k`` of the priority list without replacement."""
    return select_fixed(list(order)[:k], follower)


def select_fixed(device_ids, follower: Follower) -> SelectionOutcome:
    selected = tuple(int(n) for n in device_ids)
    gamma, matching = follower.solve(selected)
    return SelectionOutcome(selected=selected, gamma=gamma, matching=matching)


def select_random(rng: np.random.Generator, n: int, k: int) -> tuple:
    return tuple(sorted(int(x) for x in rng.choice(n, size=k, replace=False)))


def make_clusters(rng: np.random.Generator, n: int, k: int) -> list[tuple]:
    """Random partition into ceil(n / k) clusters of at most ``k`` devices."""
    perm = rng.permutation(n)
    return [tuple(sorted(int(x) for x in c)) for c in np.array_split(perm, math.ceil(n / k))]


def select_cluster(t: int, clusters) -> tuple:
    """Cluster for round ``t`` (1-based), in rotation."""
    return tuple(clusters[(t - 1) % len(clusters)])
