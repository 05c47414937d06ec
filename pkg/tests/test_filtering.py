"""Filter core tests: projection, backup shifting, decision logic, and the
safety chain under adversarial conditions."""

import numpy as np
import pytest

from svfilter.dynamics import (
    IntersectionModel,
    UnicycleModel,
    build_intersection_paths,
    rollout,
    rollout_batch,
)
from svfilter.errors import InitializationError, InvariantViolationError
from svfilter.filtering import (
    Decision,
    FilterState,
    StoppedSet,
    decide_candidates,
    draw_candidates,
    filter_step,
    initialize_backup,
    mixture_sampler,
    project_terminal_stop,
    project_terminal_stop_batch,
    shift_and_extend,
    stop_horizon_ok,
)
from svfilter.rng import RngStream
from svfilter.safety import IntersectionLevel, ObstacleField, trajectory_costs
from svfilter.scenario import ScenarioParams
from svfilter.svgd import SvgdConfig, build_distribution


FAR_FIELD = ObstacleField(centers=[[50.0, 50.0]], radii=[0.1])


def _svgd_sampler(model, level, horizon, **kw):
    cfg = SvgdConfig(**kw) if kw else SvgdConfig(particles=8, iters=2, mc_samples=8)
    builder = lambda state, stream: build_distribution(state, model, level, cfg, stream, horizon)
    return mixture_sampler(builder, model)


class TestProjection:
    def test_braking_ramp(self):
        model = UnicycleModel()
        seq = project_terminal_stop(np.zeros((20, 2)), np.array([0, 0, 0, 1.0]), model)
        assert (seq[-10:, 1] == -1.0).all()
        states = rollout(np.array([0, 0, 0, 1.0]), seq, model).states
        assert states[-1, 3] == 0.0

    def test_already_braking_unchanged(self):
        model = UnicycleModel()
        seq = np.tile([0.0, -1.0], (20, 1))
        out = project_terminal_stop(seq, np.array([0, 0, 0, 1.0]), model)
        assert np.array_equal(out, seq)

    def test_stationary_zero_sequence_unchanged(self):
        model = UnicycleModel()
        seq = np.zeros((20, 2))
        out = project_terminal_stop(seq, np.array([0, 0, 0, 0.0]), model)
        assert np.array_equal(out, seq)
        states = rollout(np.array([0, 0, 0, 0.0]), out, model).states
        assert states[-1, 3] == 0.0

    def test_idempotent(self):
        model = UnicycleModel()
        rng = np.random.default_rng(5)
        seqs = rng.normal(0, 0.8, (50, 20, 2))
        starts = np.zeros((50, 4))
        starts[:, 3] = rng.uniform(0, 1, 50)
        once = project_terminal_stop_batch(seqs, starts, model)
        twice = project_terminal_stop_batch(once, starts, model)
        assert np.array_equal(once, twice)

    def test_all_terminal_speeds_zero(self):
        model = UnicycleModel()
        rng = np.random.default_rng(6)
        seqs = rng.normal(0, 1.0, (200, 15, 2))
        starts = np.zeros((200, 4))
        starts[:, 3] = rng.uniform(0, 1, 200)
        proj = project_terminal_stop_batch(seqs, starts, model)
        states = rollout_batch(starts, proj, model)
        assert (states[:, -1, 3] == 0.0).all()

    def test_omega_zeroed_once_stopped(self):
        model = UnicycleModel()
        seq = np.tile([1.2, 0.0], (20, 1))
        out = project_terminal_stop(seq, np.array([0, 0, 0, 1.0]), model)
        states = rollout(np.array([0, 0, 0, 1.0]), out, model).states
        stopped_from = int(np.argmax(states[:-1, 3] <= 1e-9))
        assert stopped_from > 0
        assert (out[stopped_from:, 0] == 0.0).all()
        assert (out[:stopped_from, 0] == 1.2).all()

    def test_intersection_joint_projection(self):
        geo = build_intersection_paths(["east", "north"], ["straight", "straight"])
        model = IntersectionModel(geo)
        start = np.array([0.0, 10.0, 5.0, 4.0])
        seqs = np.random.default_rng(7).normal(0, 1.0, (30, 67, 2))
        proj = project_terminal_stop_batch(seqs, start, model)
        states = rollout_batch(start, proj, model)
        assert (states[:, -1, 1::2] == 0.0).all()

    def test_horizon_too_short(self):
        model = UnicycleModel()
        with pytest.raises(ValueError):
            project_terminal_stop(np.zeros((5, 2)), np.array([0, 0, 0, 1.0]), model)

    def test_stop_horizon_check(self):
        model = UnicycleModel()
        assert stop_horizon_ok(model, 10)
        assert not stop_horizon_ok(model, 9)
        geo = build_intersection_paths(["east", "north"], ["straight", "straight"])
        imodel = IntersectionModel(geo)
        assert stop_horizon_ok(imodel, 67)
        assert not stop_horizon_ok(imodel, 66)


class TestStoppedSet:
    def test_membership(self):
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        assert inv.membership(np.array([0, 0, 1.0, 0.0]))
        assert not inv.membership(np.array([0, 0, 1.0, 0.5]))
        near = ObstacleField(centers=[[0.0, 0.0]], radii=[0.3])
        assert not StoppedSet(model, near).membership(np.array([0, 0, 0, 0.0]))

    def test_invariance_property(self):
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        rng = np.random.default_rng(8)
        for _ in range(50):
            state = np.array([rng.normal(), rng.normal(), rng.normal(), 0.0])
            assert inv.membership(state)
            nxt = model.step(state, inv.invariance_input(state))
            assert inv.membership(nxt)
            assert np.array_equal(nxt, state)


class TestShiftAndExtend:
    def test_drops_head_appends_invariance(self):
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        backup = np.arange(20.0).reshape(10, 2)
        stopped = np.array([1.0, 2.0, 0.5, 0.0])
        out = shift_and_extend(backup, stopped, inv)
        assert np.array_equal(out[:-1], backup[1:])
        assert np.array_equal(out[-1], [0.0, 0.0])

    def test_h_shifts_reach_all_invariance_fixed_point(self):
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        start = np.array([0.0, 0.0, 0.0, 1.0])
        backup = project_terminal_stop(np.zeros((12, 2)), start, model)
        state = start
        for _ in range(12):
            traj = rollout(state, backup, model)
            state = traj.states[1]
            backup = shift_and_extend(backup, traj.states[-1], inv)
        assert np.array_equal(backup, np.zeros((12, 2)))
        # Fixed point: state is frozen from here on.
        nxt = rollout(state, backup, model).states
        assert np.allclose(nxt, nxt[0], atol=1e-12)

    def test_broken_chain_raises(self):
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        moving = np.array([0.0, 0.0, 0.0, 0.7])
        with pytest.raises(InvariantViolationError):
            shift_and_extend(np.zeros((10, 2)), moving, inv)


class TestFilterStep:
    def _setup(self, field=FAR_FIELD, horizon=12):
        model = UnicycleModel()
        sampler = _svgd_sampler(model, field, horizon)
        inv = StoppedSet(model, field)
        params = ScenarioParams.from_n(64)
        return model, sampler, inv, params

    def test_pass_branch(self):
        model, sampler, inv, params = self._setup()
        x = np.array([0.0, 0.0, 0.0, 1.0])
        fs = initialize_backup(x, sampler, params, model, FAR_FIELD, inv, RngStream(1), horizon=12)
        u_nom = np.array([0.3, 0.5])
        u, fs2, diag = filter_step(
            x, u_nom, fs, sampler, params, model, FAR_FIELD, inv, RngStream(2)
        )
        assert diag.decision is Decision.PASS
        assert np.array_equal(u, u_nom)
        assert fs2.backup_valid and fs2.timestep == fs.timestep + 1
        # The new backup is the argmin candidate: re-rolling it from the
        # next state must be safe.
        x_next = model.step(x, u_nom)
        costs = trajectory_costs(rollout_batch(x_next, fs2.backup[None], model), FAR_FIELD)
        assert costs[0] < 0
        assert costs[0] == pytest.approx(diag.min_cost)

    def test_intervene_branch(self):
        # All sampled candidates ram a wall, so the filter must fall back to
        # the stored braking backup and shift it.
        wall = ObstacleField(
            centers=[[2.0, y] for y in np.linspace(-2, 2, 11)], radii=np.full(11, 0.1)
        )
        model = UnicycleModel()
        inv = StoppedSet(model, wall)
        params = ScenarioParams.from_n(64)

        def ram_sampler(state, n, stream):
            return np.tile([0.0, 1.0], (n, 20, 1))

        x = np.array([0.0, 0.0, 0.0, 1.0])
        backup = project_terminal_stop(np.zeros((20, 2)), x, model)
        assert trajectory_costs(rollout_batch(x, backup[None], model), wall)[0] < 0
        fs = FilterState(backup=backup, backup_valid=True)
        u_nom = np.array([0.0, 1.0])
        u, fs2, diag = filter_step(x, u_nom, fs, ram_sampler, params, model, wall, inv, RngStream(3))
        assert diag.decision is Decision.INTERVENE
        assert diag.safe_count == 0
        assert np.array_equal(u, backup[0])
        assert np.array_equal(fs2.backup[:-1], backup[1:])

    def test_invalid_backup_precondition(self):
        model, sampler, inv, params = self._setup()
        fs = FilterState(backup=np.zeros((12, 2)), backup_valid=False)
        with pytest.raises(ValueError):
            filter_step(
                np.array([0, 0, 0, 1.0]), np.zeros(2), fs, sampler, params, model,
                FAR_FIELD, inv, RngStream(0),
            )

    def test_nominal_clamped(self):
        model, sampler, inv, params = self._setup()
        x = np.array([0.0, 0.0, 0.0, 1.0])
        fs = initialize_backup(x, sampler, params, model, FAR_FIELD, inv, RngStream(1), horizon=12)
        u, _, diag = filter_step(
            x, np.array([9.0, 9.0]), fs, sampler, params, model, FAR_FIELD, inv, RngStream(2)
        )
        assert diag.decision is Decision.PASS
        assert np.array_equal(u, model.control_upper)

    def test_bit_identical_given_seed(self):
        model, sampler, inv, params = self._setup()
        x = np.array([0.0, 0.0, 0.0, 1.0])
        fs = initialize_backup(x, sampler, params, model, FAR_FIELD, inv, RngStream(1), horizon=12)
        outs = [
            filter_step(x, np.array([0.2, 0.1]), fs, sampler, params, model, FAR_FIELD, inv, RngStream(9))
            for _ in range(2)
        ]
        assert np.array_equal(outs[0][0], outs[1][0])
        assert np.array_equal(outs[0][1].backup, outs[1][1].backup)
        assert outs[0][2] == outs[1][2]

    def test_argmin_tie_break_decision_invariant(self):
        # Duplicate candidates with equal minimal cost: permuting them never
        # changes the decision, only which copy is stored.
        model = UnicycleModel()
        field = FAR_FIELD
        seqs = np.zeros((4, 12, 2))
        seqs[1, :, 0] = 0.3
        seqs[2] = seqs[1]
        x = np.array([0.0, 0.0, 0.0, 0.0])
        d1, best1, costs1, _ = decide_candidates(x, seqs, model, field)
        perm = np.array([2, 1, 3, 0])
        d2, best2, costs2, _ = decide_candidates(x, seqs[perm], model, field)
        assert d1 is d2
        assert costs1[best1] == costs2[best2]
        assert best1 == int(np.argmin(costs1))  # lowest index among ties


class TestInitializeBackup:
    def test_stationary_free_space_immediate(self):
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        params = ScenarioParams.from_n(16)

        def failing_sampler(state, n, stream):  # must not be needed
            raise AssertionError("sampler should not be called")

        fs = initialize_backup(
            np.array([0.0, 0.0, 0.0, 0.0]), failing_sampler, params, model, FAR_FIELD,
            inv, RngStream(0), horizon=10,
        )
        assert np.array_equal(fs.backup, np.zeros((10, 2)))

    def test_start_in_failure_set_rejected(self):
        model = UnicycleModel()
        field = ObstacleField(centers=[[0.0, 0.0]], radii=[0.3])
        inv = StoppedSet(model, field)
        sampler = _svgd_sampler(model, field, 10)
        with pytest.raises(ValueError):
            initialize_backup(
                np.array([0.0, 0.0, 0.0, 0.0]), sampler, ScenarioParams.from_n(8),
                model, field, inv, RngStream(0), horizon=10,
            )

    def test_moving_toward_wall_found_fast(self):
        # Heading at a wall 2 m ahead at speed 1: plain braking qualifies, so
        # the first batch nearly always contains a valid backup.
        wall = ObstacleField(
            centers=[[2.0, y] for y in np.linspace(-2, 2, 11)], radii=np.full(11, 0.1)
        )
        model = UnicycleModel()
        inv = StoppedSet(model, wall)
        params = ScenarioParams.from_n(128)
        sampler = _svgd_sampler(model, wall, 20)
        found = 0
        for seed in range(100):
            try:
                initialize_backup(
                    np.array([0.0, 0.0, 0.0, 1.0]), sampler, params, model, wall, inv,
                    RngStream(seed), horizon=20, max_attempts=1,
                )
                found += 1
            except InitializationError:
                pass
        assert found >= 99

    def test_no_backup_raises(self):
        field = ObstacleField(centers=[[0.35, 0.0]], radii=[0.1], robot_radius=0.1)
        model = UnicycleModel()
        inv = StoppedSet(model, field)
        params = ScenarioParams.from_n(32)

        def ram_sampler(state, n, stream):
            return np.tile([0.0, 1.0], (n, 10, 1))

        with pytest.raises(InitializationError):
            initialize_backup(
                np.array([0.0, 0.0, 0.0, 1.0]), ram_sampler, params, model, field, inv,
                RngStream(1), horizon=10, max_attempts=3,
            )


class TestSafetyChain:
    def test_forced_intervention_chain_stays_safe(self):
        # An always-unsafe candidate sampler forces an intervention at every
        # step; the shifted backup chain alone must keep the state safe for
        # 200 steps (and freeze the robot once stopped).
        wall = ObstacleField(
            centers=[[2.0, y] for y in np.linspace(-2, 2, 11)], radii=np.full(11, 0.1)
        )
        model = UnicycleModel()
        inv = StoppedSet(model, wall)
        params = ScenarioParams.from_n(8)
        good_sampler = _svgd_sampler(model, wall, 20)
        x = np.array([0.0, 0.0, 0.0, 1.0])
        fs = initialize_backup(x, good_sampler, params, model, wall, inv, RngStream(0), horizon=20)

        def ram_sampler(state, n, stream):
            return np.tile([0.0, 1.0], (n, 20, 1))

        for t in range(200):
            u, fs, diag = filter_step(
                x, np.array([0.0, 1.0]), fs, ram_sampler, params, model, wall, inv,
                RngStream(100).child(t),
            )
            assert diag.decision is Decision.INTERVENE
            x = model.step(x, u)
            assert float(wall(x)) > 0.0
        assert x[3] == 0.0
        assert np.array_equal(fs.backup, np.zeros((20, 2)))

    def test_unrestricted_sampler_fails_closed(self):
        # A sampler that skips the stop projection produces safe candidates
        # whose terminal state is outside the invariant set; the filter must
        # refuse to store them.
        model = UnicycleModel()
        inv = StoppedSet(model, FAR_FIELD)
        params = ScenarioParams.from_n(4)

        def cruise_sampler(state, n, stream):
            return np.zeros((n, 12, 2))  # keeps v = 1, never stops

        x = np.array([0.0, 0.0, 0.0, 1.0])
        backup = project_terminal_stop(np.zeros((12, 2)), x, model)
        fs = FilterState(backup=backup, backup_valid=True)
        with pytest.raises(InvariantViolationError):
            filter_step(
                x, np.zeros(2), fs, cruise_sampler, params, model, FAR_FIELD, inv, RngStream(0)
            )
