import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_optimum, random_pair
from stackfl.allocation import (
    ConvergenceError,
    PairProblem,
    PolyblockTrace,
    bisect_ray,
    build_gamma,
    fixed_allocation,
    polyblock,
    project,
    solve_allocation,
    solve_problem,
)
from stackfl.system import ChannelMatrix, Device, SystemConfig, is_infeasible_pair

CFG = SystemConfig()


def feasible_instances(seed, count, **kwargs):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        dev, gain = random_pair(rng, CFG, **kwargs)
        if not is_infeasible_pair(dev, gain, CFG):
            out.append((dev, gain))
    return out


# ---- objective and constraint -------------------------------------------------


def test_objective_is_negated_time():
    prob = PairProblem(cp_time=5.0, cp_energy=0.5, bits_per_hz=1.0, tx_power=0.01, gain=1.0, budget=1.0)
    assert prob.objective(1.0, 1.0) == pytest.approx(-6.0)
    rng = np.random.default_rng(0)
    for tau, p in rng.uniform(1e-3, 1, size=(100, 2)):
        assert prob.objective(1.0, 1.0) >= prob.objective(tau, p)


def test_constraint_zero_on_boundary():
    prob = PairProblem(cp_time=5.0, cp_energy=0.5, bits_per_hz=1.0, tx_power=0.01, gain=1.0, budget=0.51)
    assert prob.constraint(1.0, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_constraint_limit_near_origin():
    # computation energy vanishes, but upload energy tends to ln2 P_t D / (B |h|^2), not to zero
    dev, gain = feasible_instances(1, 1)[0]
    prob = PairProblem.from_pair(dev, gain, CFG)
    limit = math.log(2) * prob.tx_power * prob.bits_per_hz / prob.gain - prob.budget
    assert prob.constraint(1e-9, 1e-9) == pytest.approx(limit, rel=1e-6)


# ---- projection ---------------------------------------------------------------


def test_bisection_on_linear_toy():
    zeta = bisect_ray(lambda a, b: 2.0 * a - 1.0, (1.0, 1.0), lo=0.0)
    assert zeta == pytest.approx(0.5, abs=1e-10)
    assert 2.0 * zeta - 1.0 <= 0.0


def test_projection_of_feasible_vertex_is_identity():
    prob = PairProblem(cp_time=1.0, cp_energy=1e-3, bits_per_hz=1.0, tx_power=0.01, gain=100.0, budget=1.0)
    assert project(prob, (1.0, 1.0)) == (1.0, (1.0, 1.0))


def test_projection_matches_dense_ray_scan():
    for dev, gain in feasible_instances(2, 5):
        prob = PairProblem.from_pair(dev, gain, CFG)
        v = (1.0, 0.7)
        zeta, point = project(prob, v)
        zs = np.linspace(1e-6, 1.0, 1_000_000)
        tau, p = zs * v[0], zs * v[1]
        t_cm = prob.bits_per_hz / np.log2(1 + p * prob.gain)
        energy = prob.cp_energy * tau**2 + p * prob.tx_power * t_cm
        scan = zs[energy <= prob.budget].max()
        assert zeta == pytest.approx(scan, abs=1e-6)
        assert prob.constraint(*point) <= 0.0


def test_projection_of_hopeless_ray_is_none():
    dev = Device(id=0, beta=50, cpu_freq=1e9, distance=400.0, energy_budget=0.02)
    prob = PairProblem.from_pair(dev, 0.01, CFG)
    assert project(prob, (1.0, 1.0)) is None


# ---- solver -------------------------------------------------------------------


def test_generous_budget_gives_full_allocation():
    cfg = SystemConfig(max_energy=10.0)
    dev = Device(id=0, beta=10, cpu_freq=1e9, distance=10.0, energy_budget=10.0)
    res = solve_allocation(dev, 1e4, cfg)
    prob = PairProblem.from_pair(dev, 1e4, cfg)
    assert (res.tau, res.p) == (1.0, 1.0)
    assert res.time == pytest.approx(prob.time(1.0, 1.0))
    assert res.iterations == 0


def test_infeasible_pair_reports_infeasible():
    dev = Device(id=0, beta=20, cpu_freq=1e9, distance=300.0, energy_budget=0.02)
    res = solve_allocation(dev, 0.3, CFG)
    assert not res.feasible
    assert res.time == math.inf
    assert math.isnan(res.tau) and math.isnan(res.p)


def test_matches_grid_oracle():
    for dev, gain in feasible_instances(3, 25):
        res = solve_allocation(dev, gain, CFG)
        t_grid = grid_optimum(PairProblem.from_pair(dev, gain, CFG), 2000)
        assert res.feasible
        assert abs(res.time - t_grid) / t_grid <= 1e-2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_is_feasible_and_on_boundary(seed):
    dev, gain = feasible_instances(seed, 1, budgets=(0.005, 0.01, 0.02, 0.04))[0]
    res = solve_allocation(dev, gain, CFG)
    prob = PairProblem.from_pair(dev, gain, CFG)
    assert res.feasible
    assert prob.energy(res.tau, res.p) <= prob.budget
    assert 0 < res.tau <= 1 and 0 < res.p <= 1
    if (res.tau, res.p) != (1.0, 1.0):
        # the optimum of a monotone problem sits on the energy boundary
        assert prob.constraint(res.tau, res.p) >= -1e-6 * prob.budget


def test_successive_rule_still_available():
    for dev, gain in feasible_instances(4, 10):
        res = solve_allocation(dev, gain, CFG, rule="successive")
        assert res.feasible
        assert PairProblem.from_pair(dev, gain, CFG).energy(res.tau, res.p) <= dev.energy_budget
    with pytest.raises(ValueError):
        solve_allocation(*feasible_instances(4, 1)[0], CFG, rule="other")


def test_iteration_cap_raises():
    dev, gain = feasible_instances(6, 1)[0]
    prob = PairProblem.from_pair(dev, gain, CFG)
    with pytest.raises(ConvergenceError):
        polyblock(prob, 1e-12, max_iter=1)


# ---- polyblock invariants -----------------------------------------------------


def test_vertex_set_grows_by_one_without_pruning():
    for dev, gain in feasible_instances(7, 10):
        trace = PolyblockTrace()
        polyblock(PairProblem.from_pair(dev, gain, CFG), 1e-3, prune=False, trace=trace)
        sizes = [len(vs) for vs in trace.vertex_sets]
        assert sizes == list(range(2, 2 + len(sizes)))


def test_incumbent_never_worsens():
    for dev, gain in feasible_instances(8, 20):
        trace = PolyblockTrace()
        polyblock(PairProblem.from_pair(dev, gain, CFG), 1e-4, trace=trace)
        inc = trace.incumbent_values
        assert all(b >= a for a, b in zip(inc, inc[1:]))


def test_vertex_sets_cover_feasible_points():
    rng = np.random.default_rng(9)
    for dev, gain in feasible_instances(9, 5):
        prob = PairProblem.from_pair(dev, gain, CFG)
        pts = rng.uniform(1e-3, 1, size=(4000, 2))
        pts = [pt for pt in pts if prob.constraint(*pt) <= 0][:200]
        trace = PolyblockTrace()
        polyblock(prob, 1e-3, prune=False, trace=trace)
        for vertices in trace.vertex_sets:
            V = np.array(vertices)
            for pt in pts:
                assert np.any(np.all(V >= pt - 1e-12, axis=1))


# ---- fixed allocation and Gamma -----------------------------------------------


def test_fixed_allocation():
    dev, gain = feasible_instances(10, 1)[0]
    res = fixed_allocation(dev, gain, CFG, 0.5, 0.5)
    prob = PairProblem.from_pair(dev, gain, CFG)
    if prob.energy(0.5, 0.5) <= dev.energy_budget:
        assert (res.tau, res.p, res.time) == (0.5, 0.5, prob.time(0.5, 0.5))
    else:
        assert not res.feasible
    hungry = Device(id=0, beta=500, cpu_freq=1e9, distance=50.0, energy_budget=0.02)
    assert not fixed_allocation(hungry, 10.0, CFG).feasible


def test_gamma_single_pair_equals_direct_solve():
    cfg = SystemConfig(num_devices=1, num_subchannels=1)
    dev = Device(id=0, beta=20, cpu_freq=1e9, distance=120.0, energy_budget=0.02)
    gamma = build_gamma([dev], ChannelMatrix(gains=np.array([[40.0]])), cfg)
    assert gamma.times.shape == (1, 1)
    assert gamma.times[0, 0] == solve_allocation(dev, 40.0, cfg).time


def test_gamma_entrywise_against_direct_solves():
    cfg = SystemConfig(num_devices=3, num_subchannels=2)
    rng = np.random.default_rng(12)
    devs = [Device(id=i, beta=int(rng.integers(5, 60)), cpu_freq=1e9, distance=float(rng.uniform(20, 400)),
                   energy_budget=0.02) for i in range(3)]
    gains = rng.exponential(size=(2, 3)) * 50
    gamma = build_gamma([devs[2], devs[0]], ChannelMatrix(gains=gains), cfg)
    assert gamma.device_ids == (2, 0)
    for k in range(2):
        for j, dev in enumerate([devs[2], devs[0]]):
            assert gamma.times[k, j] == solve_allocation(dev, gains[k, dev.id], cfg).time


def test_gamma_all_infeasible():
    cfg = SystemConfig(num_devices=2, num_subchannels=2)
    devs = [Device(id=i, beta=10, cpu_freq=1e9, distance=400.0, energy_budget=0.02) for i in range(2)]
    gamma = build_gamma(devs, ChannelMatrix(gains=np.full((2, 2), 0.1)), cfg)
    assert np.all(np.isinf(gamma.times))
    assert not gamma.feasible.any()


def test_near_threshold_pair_with_empty_child_ray():
    # close to the infeasibility threshold some split vertices have no feasible point on their ray
    prob = PairProblem(cp_time=0.47, cp_energy=0.047, bits_per_hz=1.0, tx_power=0.01,
                       gain=0.3471843188309113, budget=0.02)
    res = solve_problem(prob, 0.01)
    assert res.feasible
    assert prob.energy(res.tau, res.p) <= prob.budget
    assert res.time <= grid_optimum(prob, 2000) * (1 + 1e-2)
