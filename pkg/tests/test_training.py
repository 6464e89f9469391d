import numpy as np
import pytest

from nkscreen.icnn import forward, init_params
from nkscreen.oracle import ScalingOracle, certify, scale_fast
from nkscreen.training import (
    Adam, BatchCycler, TrainingConfig, classification_rates,
    scaled_batch_gradient, scaling_epoch, train, warm_epoch, weighted_bce,
    weighted_bce_grad,
)
from helpers import square_toy

LN2 = float(np.log(2.0))


class TestLoss:
    def test_reference_values(self):
        assert weighted_bce(0.0, 1.0) == pytest.approx(LN2)
        assert weighted_bce(0.0, 0.0) == pytest.approx(LN2)
        assert weighted_bce(0.0, 1.0, pos_weight=1.5) == pytest.approx(1.5 * LN2)
        assert weighted_bce(0.0, 0.0, pos_weight=1.5) == pytest.approx(LN2)

    def test_large_logits_are_stable(self):
        assert weighted_bce(1000.0, 0.0) == pytest.approx(1000.0)
        assert weighted_bce(-1000.0, 1.0, pos_weight=2.0) == pytest.approx(2000.0)
        assert weighted_bce(1000.0, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert np.isfinite(weighted_bce_grad(-1000.0, 1.0))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        f = rng.normal(scale=3, size=20)
        y = rng.integers(0, 2, size=20).astype(float)
        h = 1e-6
        fd = (weighted_bce(f + h, y, 1.3) - weighted_bce(f - h, y, 1.3)) / (2 * h)
        np.testing.assert_allclose(weighted_bce_grad(f, y, 1.3), fd,
                                   rtol=1e-6, atol=1e-9)

    def test_batch_shape(self):
        out = weighted_bce(np.zeros(5), np.ones(5))
        np.testing.assert_allclose(out, LN2)


class TestConfig:
    def test_schedule(self):
        cfg = TrainingConfig()
        assert cfg.lr_at(0) == pytest.approx(1e-2)
        assert cfg.lr_at(1499) == pytest.approx(1e-2)
        assert cfg.lr_at(1500) == pytest.approx(1e-3)
        assert cfg.lr_at(8500) == pytest.approx(1e-4)

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(scaling_epochs=0).validate()
        with pytest.raises(ValueError):
            TrainingConfig(warm_epochs=-1).validate()
        with pytest.raises(ValueError):
            TrainingConfig(positive_class_weight=0.0).validate()
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=0).validate()
        TrainingConfig().validate()


class TestAdam:
    def test_first_step_moves_by_lr(self):
        net = init_params(2, 1, 3, -np.ones(2), np.ones(2), seed=0)
        opt = Adam(net)
        from nkscreen.icnn import IcnnGrads
        grads = IcnnGrads.zeros_like(net)
        grads.D[0][0, 0] = 2.0
        before = net.D[0][0, 0]
        opt.step(net, grads, lr=0.01)
        # first Adam step is lr * sign(g) up to eps
        assert net.D[0][0, 0] == pytest.approx(before - 0.01, abs=1e-6)

    def test_zero_lr_is_identity(self):
        net = init_params(2, 1, 3, -np.ones(2), np.ones(2), seed=0)
        snapshot = net.copy()
        opt = Adam(net)
        from nkscreen.icnn import IcnnGrads
        grads = IcnnGrads.zeros_like(net)
        grads.b[0][:] = 5.0
        opt.step(net, grads, lr=0.0)
        for a, c in zip(net.b, snapshot.b):
            np.testing.assert_array_equal(a, c)


class TestCycler:
    def test_covers_everything_and_reshuffles(self):
        rng = np.random.default_rng(1)
        cyc = BatchCycler(10, 4, rng)
        seen = np.concatenate([cyc.take(), cyc.take()])
        assert len(np.unique(seen)) == 8
        third = cyc.take()  # triggers a reshuffle (only 2 left)
        assert len(third) == 4

    def test_deterministic_given_seed(self):
        a = BatchCycler(20, 6, np.random.default_rng(3))
        b = BatchCycler(20, 6, np.random.default_rng(3))
        for _ in range(7):
            np.testing.assert_array_equal(a.take(), b.take())


class TestWarm:
    def test_zero_lr_keeps_params(self):
        A, b, X, y = square_toy(100, seed=2)
        net = init_params(2, 1, 4, -2.4 * np.ones(2), 2.4 * np.ones(2), seed=1)
        snapshot = net.copy()
        cfg = TrainingConfig(depth=1, width=4, learning_rate=0.0,
                             batch_size=32).validate()
        opt = Adam(net)
        warm_epoch(net, X, y, cfg, opt, lr=0.0, rng=np.random.default_rng(0))
        for got, want in zip(net.W + net.D + net.b,
                             snapshot.W + snapshot.D + snapshot.b):
            np.testing.assert_array_equal(got, want)

    def test_learns_separable_toy(self):
        A, b, X, y = square_toy(400, seed=3)
        net = init_params(2, 1, 8, -2.4 * np.ones(2), 2.4 * np.ones(2), seed=0)
        cfg = TrainingConfig(depth=1, width=8, batch_size=64).validate()
        opt = Adam(net)
        rng = np.random.default_rng(0)
        for epoch in range(120):
            warm_epoch(net, X, y, cfg, opt, lr=1e-2, rng=rng)
        fpr, fnr = classification_rates(net, X, y)
        assert fpr + fnr < 0.1
        assert net.is_convex()


class TestScalingEpoch:
    def test_frozen_params_give_identical_r(self):
        A, b, X, y = square_toy(200, seed=4)
        net = init_params(2, 1, 6, -2.4 * np.ones(2), 2.4 * np.ones(2), seed=2)
        cfg = TrainingConfig(depth=1, width=6, batch_size=32,
                             learning_rate=0.0).validate()
        oracle = ScalingOracle(net, A, b)
        opt = Adam(net)
        _, s1 = scaling_epoch(net, X[:32], y[:32], oracle, cfg, opt, lr=0.0)
        _, s2 = scaling_epoch(net, X[32:64], y[32:64], oracle, cfg, opt, lr=0.0)
        assert s1.r == pytest.approx(s2.r, abs=1e-12)
        assert s1.row == s2.row

    def test_total_gradient_matches_finite_differences(self):
        A, b, X, y = square_toy(60, seed=5)
        Xb, yb = X[:12], y[:12]
        net = init_params(2, 1, 3, -2.4 * np.ones(2), 2.4 * np.ones(2), seed=4)
        w = 1.2

        def loss_of(params):
            s = scale_fast(params, A, b)
            f = forward(params, s.r * Xb)
            return float(np.mean(weighted_bce(f, yb, w)))

        scale = scale_fast(net, A, b)
        _, grads = scaled_batch_gradient(net, Xb, yb, scale, b, w)
        h = 1e-5
        for arr, got in [(net.D[0], grads.D[0]), (net.W[0], grads.W[0]),
                         (net.b[0], grads.b[0]), (net.b[1], grads.b[1])]:
            flat, gflat = arr.reshape(-1), got.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = loss_of(net)
                flat[i] = old - h
                dn = loss_of(net)
                flat[i] = old
                fd = (up - dn) / (2 * h)
                assert gflat[i] == pytest.approx(fd, rel=1e-3, abs=1e-6)


class TestTrain:
    def _run(self, seed=0):
        A, b, X, y = square_toy(500, lim=1.2, seed=6)
        cfg = TrainingConfig(depth=1, width=8, warm_epochs=15,
                             scaling_epochs=25, batch_size=64,
                             learning_rate=1e-2, decay_epochs=(30,),
                             seed=seed).validate()
        return A, b, cfg, train(A, b, X[:350], y[:350], X[350:], y[350:],
                                cfg, box_lower=-2.4 * np.ones(2),
                                box_upper=2.4 * np.ones(2))

    def test_end_to_end(self):
        A, b, cfg, (clf, record) = self._run()
        assert len(record.epochs) == cfg.warm_epochs + cfg.scaling_epochs
        assert record.best_epoch is not None
        assert record.best_epoch >= cfg.warm_epochs
        assert clf.r > 0
        assert clf.params.is_convex()
        report = certify(clf.params, A, b, r=clf.r)
        assert report.reliable
        # selected epoch had zero validation misses on infeasible points
        best = record.epochs[record.best_epoch]
        assert best.val_fnr == 0.0
        assert clf.meta["best_epoch"] == record.best_epoch

    def test_deterministic(self):
        _, _, _, (clf1, rec1) = self._run(seed=1)
        _, _, _, (clf2, rec2) = self._run(seed=1)
        assert clf1.r == clf2.r
        for a, c in zip(clf1.params.W + clf1.params.D + clf1.params.b,
                        clf2.params.W + clf2.params.D + clf2.params.b):
            np.testing.assert_array_equal(a, c)
        assert [r.loss for r in rec1.epochs] == [r.loss for r in rec2.epochs]

    def test_seed_changes_run(self):
        _, _, _, (clf1, _) = self._run(seed=1)
        _, _, _, (clf2, _) = self._run(seed=2)
        assert clf1.r != clf2.r

    def test_csv_log(self, tmp_path):
        _, _, cfg, (_, record) = self._run()
        path = tmp_path / "log.csv"
        record.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + cfg.warm_epochs + cfg.scaling_epochs
        assert lines[0].startswith("epoch,phase,lr,loss,r,row")

    def test_requires_box_or_params(self):
        A, b, X, y = square_toy(50, seed=7)
        cfg = TrainingConfig(depth=1, width=4, warm_epochs=0,
                             scaling_epochs=1).validate()
        with pytest.raises(ValueError):
            train(A, b, X, y, X, y, cfg)
