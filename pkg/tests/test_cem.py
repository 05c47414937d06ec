"""Cross-entropy baseline tests."""

import numpy as np
import pytest

from helpers import QuadAccumModel, constant_level, neg_state_level
from svfilter.cem import CemConfig, cem_build
from svfilter.dynamics import UnicycleModel
from svfilter.rng import RngStream
from svfilter.safety import ObstacleField
from svfilter.svgd import sample_mixture


class TestCemConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            CemConfig(population=5, elite_frac=0.1)  # fewer than one elite
        with pytest.raises(ValueError):
            CemConfig(elite_frac=0.0)
        with pytest.raises(ValueError):
            CemConfig(elite_frac=1.5)
        with pytest.raises(ValueError):
            CemConfig(var_floor=0.0)

    def test_elite_count(self):
        assert CemConfig(population=100, elite_frac=0.1).n_elite == 10
        assert CemConfig(population=10, elite_frac=0.15).n_elite == 2


class TestCemBuild:
    def test_zero_iterations_returns_init(self):
        model = UnicycleModel()
        field = ObstacleField(centers=[[5.0, 5.0]], radii=[0.1])
        cfg = CemConfig(population=50, iterations=0, init_var=(0.5, 0.3))
        mix = cem_build(np.array([0, 0, 0, 1.0]), model, field, cfg, RngStream(0), 8)
        assert np.array_equal(mix.means, np.zeros((1, 16)))
        assert np.allclose(mix.var, np.tile([0.5, 0.3], 8))
        assert mix.weights.tolist() == [1.0]

    def test_tie_break_stable_under_constant_cost(self):
        model = UnicycleModel()
        cfg = CemConfig(population=40, elite_frac=0.25, iterations=1, init_var=(0.4, 0.4))
        stream = RngStream(9)
        mix = cem_build(
            np.array([0, 0, 0, 0.5]), model, constant_level(10.0), cfg, stream, 6
        )
        # All costs equal: elites are the first 10 draws in order.
        pop = stream.child(0).generator().standard_normal((40, 12)) * np.sqrt(
            cfg.flat_init_var(6, 2)
        )
        assert np.allclose(mix.means[0], pop[:10].mean(axis=0))

    def test_quadratic_landscape_monotone_convergence(self):
        # Cost c*||U - U*||^2: the mean must approach U* monotonically.
        d = 6
        target = np.array([0.5, -0.3, 0.8, 0.1, -0.6, 0.4])
        model = QuadAccumModel(d, c=1.0, target=target)
        dists = []
        for iters in range(6):
            cfg = CemConfig(population=300, elite_frac=0.1, iterations=iters, init_var=(1.0,))
            mix = cem_build(np.zeros(1), model, neg_state_level, cfg, RngStream(31), 1)
            dists.append(np.linalg.norm(mix.means[0] - target))
        assert all(b <= a + 1e-9 for a, b in zip(dists, dists[1:]))
        assert dists[-1] < 0.2 * dists[0]

    def test_variance_floor(self):
        d = 4
        model = QuadAccumModel(d, c=100.0)
        cfg = CemConfig(population=400, elite_frac=0.05, iterations=6, init_var=(1.0,), var_floor=1e-3)
        mix = cem_build(np.zeros(1), model, neg_state_level, cfg, RngStream(2), 1)
        assert (mix.var >= 1e-3).all()

    def test_elite_frac_one_no_selection_pressure(self):
        model = UnicycleModel()
        cfg = CemConfig(population=4000, elite_frac=1.0, iterations=1, init_var=(0.5, 0.5))
        mix = cem_build(
            np.array([0, 0, 0, 0.5]), model, constant_level(1.0), cfg, RngStream(4), 5
        )
        # Mean of all samples: within sampling noise of the zero init mean.
        assert np.abs(mix.means[0]).max() < 4.0 * np.sqrt(0.5) / np.sqrt(4000)

    def test_interface_parity_with_sampler(self):
        model = UnicycleModel()
        field = ObstacleField(centers=[[5.0, 5.0]], radii=[0.1])
        cfg = CemConfig(population=60, iterations=2, init_var=(0.5, 0.3))
        mix = cem_build(np.array([0, 0, 0, 1.0]), model, field, cfg, RngStream(1), 8)
        seqs = sample_mixture(mix, 25, np.random.default_rng(0))
        assert seqs.shape == (25, 8, 2)

    def test_deterministic(self):
        model = UnicycleModel()
        field = ObstacleField(centers=[[2.0, 0.0]], radii=[0.2])
        cfg = CemConfig(population=80, iterations=3, init_var=(0.5, 0.3))
        a = cem_build(np.array([0, 0, 0, 1.0]), model, field, cfg, RngStream(6), 10)
        b = cem_build(np.array([0, 0, 0, 1.0]), model, field, cfg, RngStream(6), 10)
        assert np.array_equal(a.means, b.means) and np.array_equal(a.var, b.var)
