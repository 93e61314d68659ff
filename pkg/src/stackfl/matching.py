"""Two-sided exchange-stable assignment of selected devices to sub-channels.

Utilities are round times taken from the Gamma matrix (rows = sub-channels,
columns = selected devices); infeasible pairs get the sentinel ``U_MAX`` so that
devices strictly prefer any feasible sub-channel. Devices only ever swap
sub-channels pairwise, and a swap is approved when it hurts neither device and
helps at least one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

U_MAX = 1e12


class EmptyRoundError(ValueError):
    """No device holds a feasible sub-channel."""


@dataclass(frozen=True)
class Matching:
    """Bijection device column -> sub-channel row, with the swaps that produced it."""

    channel_of: tuple
    utilities: tuple
    swaps: tuple = field(default=(), compare=False)

    @property
    def device_on(self) -> tuple:
        inv = [0] * len(self.channel_of)
        for j, k in enumerate(self.channel_of):
            inv[k] = j
        return tuple(inv)

    @property
    def assigned(self) -> tuple:
        """Per device column: True when it holds a feasible sub-channel."""
        return tuple(u < U_MAX for u in self.utilities)


def utility_table(gamma) -> np.ndarray:
    """Gamma with infeasible entries (``inf``/NaN or >= U_MAX) replaced by ``U_MAX``."""
    times = np.asarray(getattr(gamma, "times", gamma), dtype=float)
    if times.ndim != 2 or times.shape[0] != times.shape[1]:
        raise ValueError(f"gamma must be square, got shape {times.shape}")
    bad = ~np.isfinite(times) | (times >= U_MAX)
    table = np.where(bad, U_MAX, times)
    if np.any(~bad) and U_MAX <= 1e3 * table[~bad].max():
        raise ValueError("U_MAX does not dominate the feasible round times")
    return table


def utility(channel_of, device: int, table: np.ndarray) -> float:
    return float(table[channel_of[device], device])


def subchannel_utility(channel_of, channel: int, table: np.ndarray) -> float:
    """A sub-channel's utility is that of the device occupying it."""
    occupant = list(channel_of).index(channel)
    return utility(channel_of, occupant, table)


def is_swap_blocking(channel_of, a: int, b: int, table: np.ndarray) -> bool:
    """True when exchanging the sub-channels of devices ``a`` and ``b`` is approved."""
    ka, kb = channel_of[a], channel_of[b]
    before_a, before_b = table[ka, a], table[kb, b]
    after_a, after_b = table[kb, a], table[ka, b]
    if after_a > before_a or after_b > before_b:
        return False
    return after_a < before_a or after_b < before_b


def _make(channel_of, table, swaps=()) -> Matching:
    utils = tuple(float(table[k, j]) for j, k in enumerate(channel_of))
    return Matching(channel_of=tuple(int(k) for k in channel_of), utilities=utils, swaps=tuple(swaps))


def identity_matching(size: int) -> tuple:
    return tuple(range(size))


def random_matching(rng: np.random.Generator, size: int) -> tuple:
    return tuple(int(k) for k in rng.permutation(size))


def stable_match(gamma, initial=None, rng: np.random.Generator | None = None) -> Matching:
    """Swap-matching from an initial bijection until no swap-blocking pair is left.

    ``initial`` defaults to a seeded random bijection when ``rng`` is given and
    to the identity otherwise. Devices act in ascending column order and
    propose to partners in ascending order; an approved swap is applied at once.
    """
    table = utility_table(gamma)
    size = table.shape[0]
    if initial is None:
        initial = random_matching(rng, size) if rng is not None else identity_matching(size)
    channel_of = list(initial)
    if sorted(channel_of) != list(range(size)):
        raise ValueError(f"initial matching {initial} is not a bijection")

    swaps = []
    changed = True
    while changed:
        changed = False
        for a in range(size):
            for b in range(size):
                if a != b and is_swap_blocking(channel_of, a, b, table):
                    channel_of[a], channel_of[b] = channel_of[b], channel_of[a]
                    swaps.append((a, b))
                    changed = True
    return _make(channel_of, table, swaps)


def verify_2es(channel_of, gamma) -> bool:
    """Exhaustive check that no pair of devices is swap-blocking."""
    table = utility_table(gamma)
    channel_of = getattr(channel_of, "channel_of", channel_of)
    size = len(channel_of)
    # the blocking condition is symmetric in the pair
    return not any(
        is_swap_blocking(channel_of, a, b, table)
        for a in range(size)
        for b in range(a + 1, size)
    )


def matching_latency(matching: Matching) -> tuple[float, list[int]]:
    """Round latency over devices holding a feasible sub-channel, plus dropped device columns."""
    dropped = [j for j, u in enumerate(matching.utilities) if u >= U_MAX]
    served = [u for u in matching.utilities if u < U_MAX]
    if not served:
        raise EmptyRoundError("every device in the matching is on an infeasible sub-channel")
    return max(served), dropped


def fixed_matching(gamma, channel_of) -> Matching:
    """Wrap an externally chosen bijection (random assignment baseline)."""
    return _make(channel_of, utility_table(gamma))


def max_latency(channel_of, table: np.ndarray) -> float:
    """Max utility including the sentinel; used for comparing assignments."""
    return max(float(table[k, j]) for j, k in enumerate(channel_of))
