"""Round loop: channels -> leader selection (with follower prediction) -> local steps -> FedAvg -> AoU."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from stackfl import learning
from stackfl.config import RunConfig
from stackfl.selection import (
    AoUState,
    Follower,
    aou_weights,
    make_clusters,
    priority_list,
    select_cluster,
    select_devices_aou,
    select_fixed,
    select_random,
    select_top,
    update_aou,
)
from stackfl.streams import substream
from stackfl.system import draw_channels, place_devices

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeviceRound:
    channel: int
    tau: float
    p: float
    gain: float
    time: float
    energy: float


@dataclass
class RoundRecord:
    t: int
    scheme: str
    selected: tuple
    allocations: dict  # participant id -> DeviceRound
    dropped: tuple
    latency: float
    global_loss: float
    aou: tuple  # ages used for this round's selection
    replaced_count: int = 0
    bound: float | None = None

    @property
    def participants(self) -> tuple:
        return tuple(sorted(self.allocations))

    @property
    def n_participants(self) -> int:
        return len(self.allocations)

    @property
    def carried_over(self) -> bool:
        return not self.allocations


@dataclass
class RunSummary:
    config: RunConfig
    records: list
    initial_loss: float
    constants: learning.LearnerConstants
    learning_rate: float
    betas: tuple
    distances: tuple

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def latencies(self) -> list:
        return [r.latency for r in self.records]

    @property
    def losses(self) -> list:
        return [r.global_loss for r in self.records]

    @property
    def cumulative_time(self) -> float:
        return math.fsum(self.latencies)

    @property
    def final_loss(self) -> float:
        return self.records[-1].global_loss if self.records else self.initial_loss


@dataclass
class Simulation:
    """Owns the mutable round state: global model, AoU ages, scheme bookkeeping."""

    config: RunConfig
    devices: list = field(init=False)
    task: learning.Task = field(init=False)
    constants: learning.LearnerConstants = field(init=False)
    lr: float = field(init=False)
    w: np.ndarray = field(init=False)
    aou: AoUState = field(init=False)
    models: list = field(init=False)  # w^(1), w^(2), ...
    masks: list = field(init=False)

    def __post_init__(self):
        cfg = self.config
        seed = cfg.seed
        n = cfg.system.num_devices
        data, _ = learning.partition_data(
            substream(seed, "partition"), n, cfg.task.total_samples, cfg.task.dim,
            kind=cfg.task.kind, noise=cfg.task.noise,
        )
        self.task = learning.Task(kind=cfg.task.kind, data=data, reg=cfg.task.reg)
        self.devices = place_devices(substream(seed, "placement"), cfg.system, self.task.betas)
        self.constants = learning.learner_constants(self.task)
        self.lr = cfg.task.learning_rate or 1.0 / self.constants.L
        self.w = np.zeros(self.task.dim)
        self.aou = AoUState.initial(n)
        self.models = [self.w.copy()]
        self.masks = []

        setup = substream(seed, "scheme-setup")
        k = cfg.system.num_subchannels
        self.clusters = make_clusters(setup, n, k)
        self.fixed_set = select_random(setup, n, k)

    def follower(self, t: int, channels) -> Follower:
        s = self.config.scheme
        needs_rng = s.sa == "random" or s.random_init
        stream = "assignment" if s.sa == "random" else "matcher-init"
        return Follower(
            config=self.config.system,
            channels=channels,
            devices=self.devices,
            ra=s.ra,
            sa=s.sa,
            fixed_point=(s.fixed_tau, s.fixed_p),
            rng=substream(self.config.seed, stream, t) if needs_rng else None,
            random_init=s.random_init,
        )

    def select(self, t: int, follower: Follower):
        name = self.config.scheme.name
        k = self.config.system.num_subchannels
        n = self.config.system.num_devices
        if name in ("aou", "aou_topk"):
            order = priority_list(aou_weights(self.aou), self.task.betas)
            if name == "aou":
                return select_devices_aou(order, k, follower)
            return select_top(order, k, follower)
        if name == "random":
            return select_fixed(select_random(substream(self.config.seed, "scheme", t), n, k), follower)
        if name == "cluster":
            return select_fixed(select_cluster(t, self.clusters), follower)
        if name == "fixed":
            return select_fixed(self.fixed_set, follower)
        raise ValueError(f"unknown scheme {name!r}")

    def run_round(self, t: int) -> RoundRecord:
        cfg = self.config
        channels = draw_channels(substream(cfg.seed, "channel", t), cfg.system, self.devices, t)
        outcome = self.select(t, self.follower(t, channels))

        allocations = {}
        for j, n in enumerate(outcome.selected):
            if not outcome.matching.assigned[j]:
                continue
            k = outcome.matching.channel_of[j]
            res = outcome.gamma.results[k][j]
            allocations[n] = DeviceRound(
                channel=k, tau=res.tau, p=res.p, gain=float(channels.gains[k, n]),
                time=res.time, energy=res.energy,
            )
        mask = np.zeros(cfg.system.num_devices, dtype=bool)
        mask[list(allocations)] = True

        ages = self.aou.ages
        self.w = learning.fedavg_round(self.task, self.w, mask, self.lr)
        self.aou = update_aou(self.aou, mask)
        self.models.append(self.w.copy())
        self.masks.append(mask)

        latency = max((a.time for a in allocations.values()), default=0.0)
        if not allocations:
            log.info("round %d: no participant, global model carried over", t)
        return RoundRecord(
            t=t,
            scheme=cfg.scheme.name,
            selected=tuple(outcome.selected),
            allocations=allocations,
            dropped=outcome.dropped,
            latency=latency,
            global_loss=learning.global_loss(self.task, self.w),
            aou=ages,
            replaced_count=outcome.replaced_count,
        )

    def bounds(self) -> tuple[np.ndarray, float]:
        """Convergence bound for every completed round, with its certified rho."""
        rounds = len(self.masks)
        if rounds == 0:
            return np.array([]), float("nan")
        points = self.models[:rounds]
        rho = learning.certify_rho(self.task, points)
        constants = learning.LearnerConstants(
            L=self.constants.L, mu=self.constants.mu, F_star=self.constants.F_star,
            w_star=self.constants.w_star, rho=rho,
        )
        grad_sq = [float(np.sum(learning.global_gradient(self.task, w) ** 2)) for w in points]
        delta1 = learning.global_loss(self.task, self.models[0]) - self.constants.F_star
        bound = learning.convergence_bound(grad_sq, self.masks, self.task.betas, constants, delta1)
        return bound[1:], rho


def run_simulation(config: RunConfig) -> RunSummary:
    sim = Simulation(config)
    initial_loss = learning.global_loss(sim.task, sim.w)
    records = [sim.run_round(t) for t in range(1, config.rounds + 1)]
    constants = sim.constants
    if config.task.track_bound and records:
        bound, rho = sim.bounds()
        for rec, b in zip(records, bound):
            rec.bound = float(b)
        constants = learning.LearnerConstants(
            L=constants.L, mu=constants.mu, F_star=constants.F_star, w_star=constants.w_star, rho=rho
        )
    return RunSummary(
        config=config,
        records=records,
        initial_loss=initial_loss,
        constants=constants,
        learning_rate=sim.lr,
        betas=tuple(int(b) for b in sim.task.betas),
        distances=tuple(d.distance for d in sim.devices),
    )
