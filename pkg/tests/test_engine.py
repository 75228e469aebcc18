import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import gamma

from fcpsim.distributions import JumpLaw, WaitingTimeLaw
from fcpsim.engine import (
    ProcessSpec,
    Trajectory,
    default_workers,
    first_passage_ensemble,
    log_grid,
    msd_ensemble,
    occupation_fraction_ensemble,
    occupation_fractions,
    path_functional,
    path_rng,
    positions_at,
    renewal_states,
    simulate_path,
    state_functional,
    trajectory_functional,
)
from fcpsim.errors import InvalidBarrier
from fcpsim.transforms import LaplaceField, invert_laplace, montroll_weiss

from conftest import ALTERNATING, M2, M3, THREE_BLOCK, THREE_BLOCK_ALPHAS, slope

ALT = ProcessSpec.build(ALTERNATING, [0.75, 0.25], [0.8, 0.4])


class TestSimulatePath:
    def test_no_jump_before_first_wait(self, single_state):
        hits = 0
        for seed in range(200):
            traj = simulate_path(single_state, 1e-3, seed)
            if len(traj) == 1:
                hits += 1
                assert traj.clock[0] > 1e-3
                assert traj.position_at(1e-3) == 0.0
        assert hits > 0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 64 - 1), st.integers(0, 10 ** 6))
    def test_clock_increasing(self, seed, index):
        traj = simulate_path(ALT, 1e3, seed, index)
        assert np.all(traj.waits > 0)
        assert np.all(np.diff(traj.clock) > 0)
        assert traj.clock[-1] > 1e3
        assert len(traj) == 1 or traj.clock[-2] <= 1e3
        np.testing.assert_array_equal(traj.position, np.cumsum(traj.jumps))

    def test_piecewise_constant_position(self):
        traj = simulate_path(ALT, 1e3, 1)
        for n in range(len(traj) - 1):
            assert traj.position_at(traj.clock[n]) == traj.position[n]
            mid = traj.clock[n] - 0.5 * traj.waits[n]
            assert traj.position_at(mid) == (traj.position[n - 1] if n else 0.0)

    def test_alternating_states(self):
        traj = simulate_path(ALT, 1e4, 3)
        assert np.all(np.diff(traj.states) != 0)

    def test_seed_range(self):
        with pytest.raises(ValueError):
            path_rng(-1)
        with pytest.raises(ValueError):
            path_rng(2 ** 64)

    def test_single_state_distribution_matches_transform(self, single_state):
        """X(100) for one state, alpha = 1/2: KS against a double inversion of Montroll-Weiss."""
        t, n = 100.0, 10 ** 4
        x = positions_at(single_state, [t], n, master_seed=42)[:, 0]
        # atom at zero: no renewal before t, Laplace transform (1 - Phi(s)) / s
        p0 = invert_laplace(LaplaceField(lambda s: (1 - np.exp(-np.sqrt(s))) / s, vectorized=True), t)
        zeros = np.count_nonzero(x == 0.0)
        assert abs(zeros - n * p0) < 4 * math.sqrt(n * p0 * (1 - p0))
        k = np.linspace(0.0, 12.0, 4801)
        gk = np.array([invert_laplace(LaplaceField(lambda s, kk=kk: montroll_weiss(single_state, kk, s),
                                                   vectorized=True), t) for kk in k])
        cont = gk - p0                  # characteristic function of the continuous part
        assert abs(cont[-1]) < 1e-10
        w = np.full(k.size, k[1] - k[0])
        w[0] = w[-1] = w[0] / 2

        def cdf_cont(v):
            # P(X <= v, X != 0) = (1 - p0)/2 + (1/pi) int_0^inf sin(k v)/k cont(k) dk
            kern = np.where(k[None, :] > 0, np.sin(np.outer(v, k)) / np.where(k > 0, k, 1), v[:, None])
            return (1 - p0) / 2 + kern @ (w * cont) / math.pi

        nz = np.sort(x[x != 0.0])
        f = cdf_cont(nz) / (1 - p0)
        assert np.all(np.diff(f) > -1e-6)
        assert stats.kstest(nz, lambda v: np.interp(v, nz, f)).pvalue > 0.01


class TestDeterminism:
    @pytest.mark.parametrize("workers", [1, 4, default_workers()])
    def test_msd_workers(self, workers):
        spec = ProcessSpec.build(THREE_BLOCK, np.full(6, 1 / 6), THREE_BLOCK_ALPHAS)
        grid = log_grid(1, 1e4, 10)
        ref = msd_ensemble(spec, grid, 500, 123, workers=1)
        got = msd_ensemble(spec, grid, 500, 123, workers=workers)
        assert ref.values.tobytes() == got.values.tobytes()
        assert ref.stderr.tobytes() == got.stderr.tobytes()

    def test_fpt_and_occupation_workers(self):
        a = first_passage_ensemble(ALT, 1.0, 400, 1e4, 5, workers=1).times
        b = first_passage_ensemble(ALT, 1.0, 400, 1e4, 5, workers=3).times
        assert a.tobytes() == b.tobytes()
        a = occupation_fractions(ALT, 1e3, 400, 5, workers=1)
        b = occupation_fractions(ALT, 1e3, 400, 5, workers=7)
        assert a.tobytes() == b.tobytes()

    def test_paths_match_simulate_path(self):
        grid = np.array([0.5, 3.0, 40.0, 900.0])
        pos = positions_at(ALT, grid, 20, 77, workers=2)
        for i in range(20):
            traj = simulate_path(ALT, grid[-1], 77, index=i)
            np.testing.assert_array_equal(pos[i], traj.position_at(grid))

    def test_seed_changes_output(self):
        grid = np.array([10.0, 100.0])
        assert not np.array_equal(positions_at(ALT, grid, 50, 1), positions_at(ALT, grid, 50, 2))


class TestMsd:
    def test_single_state_asymptotic(self, single_state):
        t = np.array([1e4])
        est = msd_ensemble(single_state, t, 20000, 8)
        pred = 2.0 * 1e4 ** 0.5 / gamma(1.5)
        assert est.values[0] == pytest.approx(pred, rel=0.10)

    def test_stderr_shape(self, m2_chain):
        est = msd_ensemble(m2_chain, [1.0, 10.0], 100, 0)
        assert est.values.shape == est.stderr.shape == (2,)
        assert np.all(est.stderr >= 0)
        assert est.n_samples == 100

    def test_irreducible_slope_ignores_init(self):
        grid = log_grid(1e3, 1e5, 10)
        slopes = []
        for init in ([1.0, 0.0], [0.0, 1.0]):
            spec = ProcessSpec.build(M3, init, [0.4, 0.7])
            slopes.append(slope(grid, msd_ensemble(spec, grid, 4000, 17).values))
        assert abs(slopes[0] - slopes[1]) < 0.06
        assert abs(np.mean(slopes) - 0.4) < 0.06

    def test_grid_validation(self, m2_chain):
        with pytest.raises(ValueError):
            msd_ensemble(m2_chain, [10.0, 1.0], 10, 0)


class TestFirstPassage:
    def test_invalid_barrier(self):
        with pytest.raises(InvalidBarrier):
            first_passage_ensemble(ALT, 1.0, 10, 1e3, 0, x0=1.0)

    def test_survival_starts_at_one(self):
        res = first_passage_ensemble(ALT, 1.0, 2000, 1e4, 0)
        s = res.survival([1e-12, 1e4])
        assert s.values[0] == 1.0
        assert s.values[1] == pytest.approx(res.n_censored / res.n_paths)

    def test_matches_trajectories(self):
        res = first_passage_ensemble(ALT, 0.7, 50, 1e4, 9, x0=-0.3)
        for i in range(50):
            traj = simulate_path(ALT, 1e4, 9, index=i)
            hit = np.flatnonzero(-0.3 + traj.position >= 0.7)
            expect = traj.clock[hit[0]] if hit.size and traj.clock[hit[0]] <= 1e4 else np.inf
            assert res.times[i] == expect

    def test_independent_reference_simulation(self):
        """Plain numpy walker with its own generator: two-sample KS on crossing times."""
        rng = np.random.default_rng(2024)
        n, t_max = 4000, 1e4
        out = np.full(n, np.inf)
        for p in range(n):
            state = 0 if rng.random() < 0.75 else 1
            x, clock = 0.0, 0.0
            while True:
                a = (0.8, 0.4)[state]
                u, e = rng.uniform(0, np.pi), rng.exponential()
                tau = (np.sin(a * u) / np.sin(u) ** (1 / a)
                       * (np.sin((1 - a) * u) / e) ** ((1 - a) / a))
                clock += tau
                if clock > t_max:
                    break
                x += rng.normal(0.0, np.sqrt(2.0))
                if x >= 1.0:
                    out[p] = clock
                    break
                state = 1 - state
        ref = first_passage_ensemble(ALT, 1.0, n, t_max, 31).times
        cap = lambda v: np.where(np.isfinite(v), v, 2 * t_max)
        assert stats.ks_2samp(cap(out), cap(ref)).pvalue > 0.01

    def test_density_normalization(self):
        res = first_passage_ensemble(ALT, 1.0, 3000, 1e5, 4)
        edges = log_grid(1e-3, 1e5, 5)
        d = res.density(edges)
        crossed = np.count_nonzero(res.times >= 1e-3) - res.n_censored
        assert np.sum(d.values * np.diff(edges)) == pytest.approx(crossed / res.n_paths, rel=1e-12)
        with pytest.raises(ValueError):
            res.density(log_grid(1, 1e6, 5))


class TestOccupation:
    def test_fractions_sum_to_one(self):
        spec = ProcessSpec.build(THREE_BLOCK, np.full(6, 1 / 6), THREE_BLOCK_ALPHAS)
        f = occupation_fractions(spec, 1e3, 500, 3)
        assert np.all((f >= 0) & (f <= 1))
        np.testing.assert_allclose(f.sum(axis=1), 1.0, atol=1e-12)

    def test_target_state_range(self):
        with pytest.raises(ValueError):
            occupation_fraction_ensemble(ALT, 2, 10.0, 10, 0)

    def test_matches_state_functional(self):
        f = occupation_fraction_ensemble(ALT, 0, 500.0, 30, 12)
        for i in range(30):
            traj = simulate_path(ALT, 500.0, 12, index=i)
            ref = state_functional(traj, lambda s: float(s == 0), 500.0) / 500.0
            assert f[i] == pytest.approx(ref, abs=1e-12)


class TestRenewalStates:
    @pytest.mark.parametrize("m,init", [(M3, [1.0, 0.0]), (THREE_BLOCK, np.full(6, 1 / 6)),
                                        ([[0.2, 0.8, 0.0], [0.0, 0.1, 0.9], [0.5, 0.25, 0.25]],
                                         [0.0, 0.0, 1.0])])
    def test_marginals_follow_chain(self, m, init):
        m = np.asarray(m, dtype=float)
        n = m.shape[0]
        spec = ProcessSpec.build(m, init, [0.5] * n)
        states = renewal_states(spec, 5, 10 ** 5, 0)
        p = np.asarray(init, dtype=float)
        for r in range(6):
            emp = np.bincount(states[:, r], minlength=n) / states.shape[0]
            assert 0.5 * np.abs(emp - p).sum() < 0.02
            p = p @ m

    def test_consistent_with_paths(self):
        states = renewal_states(ALT, 3, 10, 21)
        for i in range(10):
            traj = simulate_path(ALT, 1e12, 21, index=i)
            np.testing.assert_array_equal(states[i], traj.states[:4])


class TestPathFunctional:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6), st.floats(0.1, 1e4))
    def test_unit_integrand(self, seed, t):
        assert path_functional(ALT, lambda x: 1.0, t, seed) == pytest.approx(t, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6), st.floats(1.0, 1e4))
    def test_barrier_indicator(self, seed, t):
        traj = simulate_path(ALT, t, seed)
        a = trajectory_functional(traj, lambda x: float(x >= 1.0), t)
        hit = np.flatnonzero(traj.position >= 1.0)
        fpt = traj.clock[hit[0]] if hit.size else np.inf
        assert (a == 0.0) == (fpt >= t)

    def test_handmade_path(self):
        # waits 2, 3, 10; jumps +1, -4, +0.5 -> positions 0 on [0,2), 1 on [2,5), -3 on [5,15)
        traj = Trajectory(np.array([0, 1, 0]), np.array([2.0, 3.0, 10.0]), np.array([1.0, -4.0, 0.5]))
        U = lambda x: x ** 2 + 1.0
        assert trajectory_functional(traj, U, 7.0) == pytest.approx(1 * 2 + 2 * 3 + 10 * 2)
        assert trajectory_functional(traj, U, 1.0) == pytest.approx(1.0)
        assert state_functional(traj, lambda s: 10.0 * s, 7.0) == pytest.approx(30.0)


def test_pareto_process_runs():
    laws = (WaitingTimeLaw.pareto(0.4), WaitingTimeLaw.pareto(0.6, 2.0))
    spec = ProcessSpec(M2, [0.5, 0.5], laws, JumpLaw(1.0))
    est = msd_ensemble(spec, log_grid(1e2, 1e4, 5), 2000, 1)
    assert np.all(np.diff(est.values) > 0)
