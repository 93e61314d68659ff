"""Joint CPU-share / transmit-power allocation for one (sub-channel, device) pair.

Each pair solves

    min  T_cp(tau) + T_cm(p)   s.t.  E_cp(tau) + E_cm(p) <= E_max,  (tau, p) in (0, 1]^2

Time is decreasing and energy increasing in both coordinates, so the problem is
monotonic and is solved with a 2-D polyblock outer approximation whose vertices
are projected onto the energy boundary by bisection along the ray from the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from stackfl.system import DOMAIN_FLOOR, Device, SystemConfig, is_infeasible_pair

LN2 = math.log(2.0)

ZETA_TOL = 1e-10
ZETA_MAX_ITER = 200
MAX_ITERATIONS = 10_000


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairProblem:
    """Scalar coefficients of the per-pair allocation problem.

    Attributes are the quantities at full allocation: ``cp_time`` is mu*beta/C,
    ``cp_energy`` is kappa0*mu*beta*C^2 and ``bits_per_hz`` is D/B.
    """

    cp_time: float
    cp_energy: float
    bits_per_hz: float
    tx_power: float
    gain: float
    budget: float

    @classmethod
    def from_pair(cls, device: Device, gain: float, config: SystemConfig) -> "PairProblem":
        work = config.cycles_per_sample * device.beta
        return cls(
            cp_time=work / device.cpu_freq,
            cp_energy=config.power_coeff * work * device.cpu_freq**2,
            bits_per_hz=config.model_size / config.bandwidth,
            tx_power=config.transmit_power,
            gain=float(gain),
            budget=device.energy_budget,
        )

    def comm_time(self, p: float) -> float:
        x = p * self.gain
        if x <= 0:
            return math.inf
        # log2(1 + x) via log1p keeps precision for tiny p*gain
        return self.bits_per_hz * LN2 / math.log1p(x)

    def time(self, tau: float, p: float) -> float:
        return self.cp_time / tau + self.comm_time(p)

    def energy(self, tau: float, p: float) -> float:
        e = self.cp_energy * tau * tau
        if p > 0:
            e += p * self.tx_power * self.comm_time(p)
        return e

    def objective(self, tau: float, p: float) -> float:
        """Maximization form: -(T_cp + T_cm)."""
        return -self.time(tau, p)

    def constraint(self, tau: float, p: float) -> float:
        """Energy slack E_cp + E_cm - E_max; feasible iff <= 0."""
        return self.energy(tau, p) - self.budget

    def never_feasible(self) -> bool:
        """Closed-form infeasibility test: ln2 P_t D >= E_max B |h|^2."""
        return LN2 * self.tx_power * self.bits_per_hz >= self.budget * self.gain


@dataclass(frozen=True)
class AllocationResult:
    tau: float
    p: float
    time: float
    energy: float
    feasible: bool
    iterations: int = 0

    @classmethod
    def infeasible(cls) -> "AllocationResult":
        return cls(tau=math.nan, p=math.nan, time=math.inf, energy=math.nan, feasible=False)


def bisect_ray(g, v, lo: float, tol: float = ZETA_TOL, max_iter: int = ZETA_MAX_ITER) -> float:
    """Largest zeta in [lo, 1] with g(zeta * v) <= 0, assuming g increasing along the ray.

    Returns the feasible end of the final bracket. ``g(lo * v)`` must be <= 0 and
    ``g(v)`` > 0.
    """
    v1, v2 = v
    hi = 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if g(mid * v1, mid * v2) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def project(problem: PairProblem, v, floor: float = DOMAIN_FLOOR):
    """Project vertex ``v`` onto the upper boundary of the feasible set.

    Returns ``(zeta, (tau, p))`` with the point ``zeta * v``, or ``None`` when no
    point of the ray inside the domain ``[floor, 1]^2`` meets the energy budget.
    """
    v1, v2 = float(v[0]), float(v[1])
    g = problem.constraint
    if g(v1, v2) <= 0:
        return 1.0, (v1, v2)
    lo = floor / min(v1, v2)
    if lo >= 1.0 or g(lo * v1, lo * v2) > 0:
        return None
    zeta = bisect_ray(g, (v1, v2), lo)
    return zeta, (zeta * v1, zeta * v2)


@dataclass
class _Vertex:
    v: tuple
    point: tuple | None
    value: float  # f at the projection; -inf for an empty ray
    bound: float  # f at the vertex itself, an upper bound over its box


@dataclass
class PolyblockTrace:
    """Per-iteration snapshots, collected only on request (tests, diagnostics)."""

    vertex_sets: list = field(default_factory=list)
    selected_values: list = field(default_factory=list)
    incumbent_values: list = field(default_factory=list)


def _make_vertex(problem: PairProblem, v, floor: float) -> _Vertex:
    proj = project(problem, v, floor)
    bound = problem.objective(*v)
    if proj is None:
        return _Vertex(v=v, point=None, value=-math.inf, bound=bound)
    point = proj[1]
    return _Vertex(v=v, point=point, value=problem.objective(*point), bound=bound)


def polyblock(
    problem: PairProblem,
    eps: float,
    *,
    rule: str = "bound",
    prune: bool = True,
    max_iter: int = MAX_ITERATIONS,
    floor: float = DOMAIN_FLOOR,
    trace: PolyblockTrace | None = None,
):
    """Run the outer approximation; returns ``(point, iterations)`` or ``None`` if infeasible.

    The selected vertex is replaced by two vertices obtained by pulling one
    coordinate back to its projection. Two selection/stopping rules:

    ``"successive"``
        select the vertex whose projection has the best objective; stop once the
        selected projected objective moves by at most ``eps`` between
        consecutive iterations.
    ``"bound"``
        select the vertex with the best objective at the vertex itself (an upper
        bound on its box); stop once that bound is within ``eps`` of the
        incumbent. This certifies ``eps``-optimality.

    With ``prune`` set, vertices whose upper bound cannot beat the incumbent are
    dropped; they cannot contain a better feasible point.
    """
    if rule not in ("successive", "bound"):
        raise ValueError(f"unknown polyblock rule {rule!r}")
    first = _make_vertex(problem, (1.0, 1.0), floor)
    if first.point is None:
        return None
    if first.point == (1.0, 1.0):
        return first.point, 0

    by_bound = rule == "bound"
    vertices = [first]
    current = first
    best = first
    theta = 1
    while True:
        if theta > max_iter:
            raise ConvergenceError(f"polyblock did not converge in {max_iter} iterations")
        vertices.remove(current)
        (v1, v2), (z1, z2) = current.v, current.point
        for child in (_make_vertex(problem, (z1, v2), floor), _make_vertex(problem, (v1, z2), floor)):
            # a ray that misses the feasible set inside the domain floor cannot be split
            if child.point is None:
                continue
            vertices.append(child)
            if child.value > best.value:
                best = child
        if prune:
            vertices = [x for x in vertices if x.bound > best.value]
        theta += 1
        if not vertices:
            # every remaining box is dominated by the incumbent
            break

        key = (lambda x: x.bound) if by_bound else (lambda x: x.value)
        nxt = vertices[0]
        for x in vertices[1:]:
            if key(x) > key(nxt):  # strict: lowest index wins ties
                nxt = x
        if trace is not None:
            trace.vertex_sets.append([x.v for x in vertices])
            trace.selected_values.append(nxt.value)
            trace.incumbent_values.append(best.value)
        if by_bound:
            if nxt.bound - best.value <= eps:
                break
        elif nxt.value == -math.inf or abs(nxt.value - current.value) <= eps:
            break
        current = nxt
    return best.point, theta - 1


def solve_allocation(
    device: Device,
    gain: float,
    config: SystemConfig,
    eps: float | None = None,
    **kwargs,
) -> AllocationResult:
    """Latency-optimal (tau, p) for one device on one sub-channel under its energy budget."""
    if is_infeasible_pair(device, gain, config):
        return AllocationResult.infeasible()
    problem = PairProblem.from_pair(device, gain, config)
    return solve_problem(problem, config.error_tolerance if eps is None else eps, **kwargs)


def solve_problem(problem: PairProblem, eps: float, **kwargs) -> AllocationResult:
    if problem.never_feasible():
        return AllocationResult.infeasible()
    out = polyblock(problem, eps, **kwargs)
    if out is None:
        return AllocationResult.infeasible()
    (tau, p), iterations = out
    return AllocationResult(
        tau=tau,
        p=p,
        time=problem.time(tau, p),
        energy=problem.energy(tau, p),
        feasible=True,
        iterations=iterations,
    )


def fixed_allocation(
    device: Device, gain: float, config: SystemConfig, tau: float = 0.5, p: float = 0.5
) -> AllocationResult:
    """Baseline allocation at a fixed (tau, p); infeasible if it breaks the budget."""
    problem = PairProblem.from_pair(device, gain, config)
    energy = problem.energy(tau, p)
    if energy > problem.budget:
        return AllocationResult.infeasible()
    return AllocationResult(tau=tau, p=p, time=problem.time(tau, p), energy=energy, feasible=True)


@dataclass(frozen=True)
class GammaMatrix:
    """Minimum round times for every (sub-channel, device) pair; ``inf`` marks infeasible."""

    times: np.ndarray
    results: tuple  # results[k][j] is the AllocationResult for channel k, device column j
    device_ids: tuple

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.times)


def gamma_column(device: Device, gains_for_device, config: SystemConfig, eps=None, fixed=None):
    """Allocation results of one device on every sub-channel."""
    if fixed is not None:
        return [fixed_allocation(device, g, config, *fixed) for g in gains_for_device]
    return [solve_allocation(device, g, config, eps) for g in gains_for_device]


def build_gamma(selected_devices, channels, config: SystemConfig, eps=None, fixed=None) -> GammaMatrix:
    """Solve every (sub-channel, selected device) pair independently.

    ``channels`` is a :class:`ChannelMatrix` over all devices, indexed by device id.
    ``fixed=(tau, p)`` evaluates the fixed allocation baseline instead.
    """
    columns = [
        gamma_column(dev, channels.gains[:, dev.id], config, eps, fixed) for dev in selected_devices
    ]
    return gamma_from_columns(columns, [dev.id for dev in selected_devices])


def gamma_from_columns(columns, device_ids) -> GammaMatrix:
    n_channels = len(columns[0]) if columns else 0
    results = tuple(tuple(col[k] for col in columns) for k in range(n_channels))
    times = np.array([[r.time for r in row] for row in results], dtype=float).reshape(
        n_channels, len(columns)
    )
    return GammaMatrix(times=times, results=results, device_ids=tuple(device_ids))
