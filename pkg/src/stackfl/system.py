"""Physical-layer and device models: channels, time/energy of one round, feasibility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
# Smallest admissible tau / p. Computation and communication time diverge at zero.
DOMAIN_FLOOR = 1e-6


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def free_space_factor(carrier_frequency: float) -> float:
    """Frequency-dependent path-loss factor (c / 4 pi f)^2."""
    return (SPEED_OF_LIGHT / (4.0 * math.pi * carrier_frequency)) ** 2


def thermal_noise_power(psd_dbm_per_hz: float, bandwidth: float) -> float:
    """Noise power in watts over ``bandwidth`` for a PSD given in dBm/Hz."""
    return dbm_to_watts(psd_dbm_per_hz) * bandwidth


@dataclass(frozen=True)
class SystemConfig:
    """Linear-unit system parameters. Defaults are the reference single-cell setup.

    ``noise_variance`` is the per-sub-channel noise power in watts; build it with
    :func:`thermal_noise_power` when starting from a dBm/Hz density.
    """

    num_devices: int = 20
    num_subchannels: int = 4
    bandwidth: float = 1e6
    transmit_power: float = 0.01
    noise_variance: float = field(default_factory=lambda: thermal_noise_power(-174.0, 1e6))
    path_loss_exponent: float = 3.76
    carrier_frequency: float = 1e9
    freq_factor: float | None = None
    cycles_per_sample: float = 1e7
    power_coeff: float = 1e-28
    model_size: float = 1e6
    disc_radius: float = 500.0
    cpu_frequency: float = 1e9
    max_energy: float = 0.02
    error_tolerance: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.freq_factor is None:
            object.__setattr__(self, "freq_factor", free_space_factor(self.carrier_frequency))
        if not (self.num_devices >= self.num_subchannels >= 1):
            raise ValueError(
                f"need num_devices >= num_subchannels >= 1, got N={self.num_devices}, "
                f"K={self.num_subchannels}"
            )
        for name in (
            "bandwidth", "transmit_power", "noise_variance", "path_loss_exponent",
            "carrier_frequency", "freq_factor", "cycles_per_sample", "power_coeff",
            "model_size", "disc_radius", "cpu_frequency", "max_energy", "error_tolerance",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class Device:
    id: int
    beta: int
    cpu_freq: float
    distance: float
    energy_budget: float

    def __post_init__(self):
        if self.beta < 1:
            raise ValueError(f"device {self.id}: beta must be >= 1, got {self.beta}")
        if self.cpu_freq <= 0 or self.energy_budget <= 0:
            raise ValueError(f"device {self.id}: cpu_freq and energy_budget must be > 0")
        if self.distance <= 0:
            raise ValueError(f"device {self.id}: distance must be > 0, got {self.distance}")


@dataclass(frozen=True)
class ChannelMatrix:
    """Normalized gains |h_{k,n}|^2, shape (K, N): rows are sub-channels, columns devices."""

    gains: np.ndarray
    t: int = 0

    def __post_init__(self):
        if self.gains.ndim != 2 or not np.all(np.isfinite(self.gains)) or np.any(self.gains <= 0):
            raise ValueError("channel gains must be a 2-D array of finite positive values")


def place_devices(rng: np.random.Generator, config: SystemConfig, betas) -> list[Device]:
    """Uniform placement over the disc, excluding the 1 m ball around the server."""
    n = config.num_devices
    if len(betas) != n:
        raise ValueError(f"expected {n} data sizes, got {len(betas)}")
    u = rng.random(n)
    r_min = min(1.0, config.disc_radius)
    dist = np.sqrt(r_min**2 + u * (config.disc_radius**2 - r_min**2))
    return [
        Device(
            id=i,
            beta=int(betas[i]),
            cpu_freq=config.cpu_frequency,
            distance=float(dist[i]),
            energy_budget=config.max_energy,
        )
        for i in range(n)
    ]


def channel_gain(fading_power, distance, config: SystemConfig):
    """P_t |g|^2 eta d^-a / sigma^2 (vectorizes over numpy inputs)."""
    return (
        config.transmit_power
        * fading_power
        * config.freq_factor
        * np.power(distance, -config.path_loss_exponent)
        / config.noise_variance
    )


def draw_channels(rng: np.random.Generator, config: SystemConfig, devices, t: int = 0) -> ChannelMatrix:
    """Rayleigh block fading: |g|^2 ~ Exp(1), independent per (sub-channel, device, round)."""
    dist = np.array([d.distance for d in devices], dtype=float)
    fading = rng.exponential(1.0, size=(config.num_subchannels, len(devices)))
    return ChannelMatrix(gains=channel_gain(fading, dist[None, :], config), t=t)


def comp_time(device: Device, tau: float, config: SystemConfig) -> float:
    if tau <= 0:
        raise ValueError("tau = 0 is a degenerate allocation (infinite computation time)")
    return config.cycles_per_sample * device.beta / (tau * device.cpu_freq)


def comp_energy(device: Device, tau: float, config: SystemConfig) -> float:
    return config.power_coeff * config.cycles_per_sample * device.beta * (tau * device.cpu_freq) ** 2


def comm_rate(gain: float, p: float, config: SystemConfig) -> float:
    return config.bandwidth * math.log2(1.0 + p * gain)


def comm_time(config: SystemConfig, rate: float) -> float:
    """Upload time; ``inf`` when the device cannot transmit (rate 0)."""
    if rate <= 0:
        return math.inf
    return config.model_size / rate


def comm_energy(p: float, config: SystemConfig, duration: float) -> float:
    if p == 0:
        return 0.0
    return p * config.transmit_power * duration


def total_time(device: Device, gain: float, tau: float, p: float, config: SystemConfig) -> float:
    return comp_time(device, tau, config) + comm_time(config, comm_rate(gain, p, config))


def total_energy(device: Device, gain: float, tau: float, p: float, config: SystemConfig) -> float:
    duration = comm_time(config, comm_rate(gain, p, config))
    return comp_energy(device, tau, config) + comm_energy(p, config, duration)


def infeasibility_margin(device: Device, gain: float, config: SystemConfig) -> float:
    """ln2 P_t D - E_max B |h|^2; the pair can never meet its budget when this is >= 0."""
    return (
        math.log(2.0) * config.transmit_power * config.model_size
        - device.energy_budget * config.bandwidth * gain
    )


def is_infeasible_pair(device: Device, gain: float, config: SystemConfig) -> bool:
    return infeasibility_margin(device, gain, config) >= 0
