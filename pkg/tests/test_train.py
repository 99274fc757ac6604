import numpy as np
import pytest

from ddpinn import dynamics
from ddpinn.diffcore import MlpParameters, Tape
from ddpinn.integrate import Dataset, generate_dataset, integrate_interval
from ddpinn.models import DdPinnModel, PincModel
from ddpinn.sample import SamplingBox
from ddpinn.train import (AdamState, Collocation, LossWeights, PlateauScheduler, TrainConfig,
                          adam_step, data_loss, ic_loss, lra_update, physics_loss, train_run)

BOX = SamplingBox.for_frequency([-0.4, -18.0], [0.4, 18.0], [-1.0], [1.0], 100.0)
MSD = dynamics.make_msd().rhs
ZERO_RHS = lambda x, u: np.zeros_like(x)


def _zero_net(sizes, last_bias=None):
    net = MlpParameters.glorot(sizes, np.random.default_rng(0))
    arrays = [np.zeros_like(a) for a in net.arrays]
    if last_bias is not None:
        arrays[-1] = np.asarray(last_bias, dtype=float)
    return MlpParameters.from_arrays(sizes, arrays)


def _ddpinn(zero=False, hidden=(8,), order=0, seed=0):
    model = DdPinnModel.create(BOX, 100.0, list(hidden), n_g=2, order=order, seed=seed)
    return model.with_net(_zero_net(model.net.layer_sizes)) if zero else model


def _pinc(zero=False, hidden=(8,), bias=None, seed=0):
    model = PincModel.create(BOX, 100.0, list(hidden), seed=seed)
    return model.with_net(_zero_net(model.net.layer_sizes, bias)) if zero else model


def _collo(n, order=0, seed=0):
    rng = np.random.default_rng(seed)
    return Collocation(rng.uniform(BOX.x_low, BOX.x_high, (n, 2)),
                       rng.uniform(-1, 1, (n, order + 1, 1)), rng.uniform(0, BOX.t_max, n))


@pytest.mark.parametrize("make", [_ddpinn, _pinc])
def test_physics_loss_zero_for_constant_model_and_still_dynamics(make):
    model = make(zero=True)
    assert float(physics_loss(model, model.net, _collo(20), ZERO_RHS)) == 0.0


def test_physics_loss_single_point_hand_value():
    model = _ddpinn(zero=True)
    batch = Collocation(np.array([[0.1, 0.0]]), np.zeros((1, 1, 1)), np.array([0.005]))
    # rate is zero, so the residual is -T_s * f / half = (0, 115 * T_s / 18)
    expected = (115.0 * model.T_s / 18.0) ** 2 / 2
    assert float(physics_loss(model, model.net, batch, MSD)) == pytest.approx(expected, rel=1e-12)


def test_physics_loss_empty_batch_rejected():
    model = _ddpinn()
    with pytest.raises(ValueError):
        physics_loss(model, model.net, _collo(0), MSD)


def test_physics_loss_non_finite_raises():
    model = _ddpinn()
    bad = lambda x, u: np.full_like(x, np.nan)
    with pytest.raises(FloatingPointError):
        physics_loss(model, model.net, _collo(3), bad)


@pytest.mark.parametrize("make,order", [(_ddpinn, 0), (_ddpinn, 1), (_pinc, 0)])
def test_physics_loss_gradient_matches_fd(make, order):
    model = make(hidden=(6,), order=order) if make is _ddpinn else make(hidden=(6,))
    batch = _collo(7, order=order, seed=1)
    sizes = model.net.layer_sizes
    params = [np.array(a) for a in model.net.arrays]
    tape = Tape()
    leaves = [tape.var(p) for p in params]
    loss = physics_loss(model, MlpParameters.from_arrays(sizes, leaves), batch, MSD)
    grads = tape.gradients(loss, leaves)

    def value(ps):
        return float(physics_loss(model, MlpParameters.from_arrays(sizes, ps), batch, MSD))

    h = 1e-6
    rng = np.random.default_rng(2)
    for li, p in enumerate(params):
        for idx in [tuple(rng.integers(0, s) for s in p.shape) for _ in range(4)]:
            hi = [q.copy() for q in params]
            lo = [q.copy() for q in params]
            hi[li][idx] += h
            lo[li][idx] -= h
            fd = (value(hi) - value(lo)) / (2 * h)
            assert abs(grads[li][idx] - fd) <= 1e-4 * max(1.0, abs(fd))


def test_ic_loss_zero_when_bias_matches_x0():
    b = np.array([0.25, -0.5])
    model = _pinc(zero=True, bias=b)
    x0 = BOX.x_center + BOX.x_half * b
    batch = Collocation(np.tile(x0, (5, 1)), np.zeros((5, 1, 1)), np.zeros(5))
    assert float(ic_loss(model, model.net, batch)) == 0.0


def test_ic_loss_hand_value():
    model = _pinc(zero=True)
    batch = Collocation(np.array([[0.4, -18.0]]), np.zeros((1, 1, 1)), np.zeros(1))
    # prediction is the box center; scaled target is (1, -1)
    assert float(ic_loss(model, model.net, batch)) == pytest.approx(1.0, abs=1e-15)


def test_ic_loss_rejected_for_ddpinn():
    model = _ddpinn()
    with pytest.raises(TypeError):
        ic_loss(model, model.net, _collo(2))


def test_data_loss_empty_is_zero():
    model = _ddpinn()
    assert data_loss(model, model.net, Dataset.empty(2, 1, 0)) == 0.0


class _OracleModel:
    """Stands in for a surrogate by integrating the true dynamics."""

    def __init__(self, box, order):
        self.box, self.order, self.m = box, order, box.m

    def state_and_rate(self, net, x0, knots, t):
        return integrate_interval(MSD, x0, knots, self.order, 0.01, t, 220), None


def test_data_loss_near_zero_for_exact_model():
    ds = generate_dataset(MSD, BOX, 1, 0.01, 30, seed=0)
    assert data_loss(_OracleModel(BOX, 1), None, ds) < 1e-14


def test_data_loss_hand_value():
    model = _ddpinn(zero=True)
    x0 = np.array([[0.1, 2.0]])
    ds = Dataset(x0, np.zeros((1, 1, 1)), np.array([0.004]), x0 + BOX.x_half * [0.5, 0.0])
    assert float(data_loss(model, model.net, ds)) == pytest.approx(0.125, rel=1e-12)


def test_lra_hand_examples():
    w = LossWeights(ic=1.0, phys=1.0, data=1.0)
    gp = [np.array([2.0, -1.0])]
    aux = {"ic": [np.array([0.5, -0.5])]}
    new = lra_update(w, gp, aux, rate=0.1)
    # target 2 / 0.5 = 4, smoothed 0.9 * 1 + 0.1 * 4
    assert new.ic == pytest.approx(1.3)
    assert lra_update(w, gp, aux, rate=0.0).ic == 1.0
    same = lra_update(w, [np.array([1.0, 1.0])], {"ic": [np.array([1.0, -1.0])]}, rate=0.5)
    assert same.ic == pytest.approx(1.0)


def test_lra_example_from_stats():
    w = LossWeights(ic=1.0)
    new = lra_update(w, [np.array([5.0, 0.0])], {"ic": [np.array([1.0, 1.0])]}, rate=0.1)
    assert new.ic == pytest.approx(1.4)


def test_lra_skips_zero_aux_gradient():
    w = LossWeights(ic=3.0, data=2.0)
    new = lra_update(w, [np.array([1.0])], {"ic": [np.zeros(1)], "data": [np.array([1.0])]})
    assert new.ic == 3.0 and new.data == pytest.approx(0.9 * 2 + 0.1)
    with pytest.raises(ValueError):
        lra_update(w, [np.zeros(1)], {"ic": [np.ones(1)]})


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    new, state = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), 1e-3)
    np.testing.assert_array_equal(new[0], p[0])
    assert state.step == 1


def test_adam_first_step_moves_by_lr():
    p = [np.array([1.0])]
    new, _ = adam_step(p, [np.array([0.3])], AdamState.zeros_like(p), 1e-3)
    assert new[0][0] == pytest.approx(0.999, abs=1e-9)


def test_adam_steady_gradient_step_is_lr():
    p = [np.array([0.0])]
    state = AdamState.zeros_like(p)
    for _ in range(2000):
        prev = p[0][0]
        p, state = adam_step(p, [np.array([2.0])], state, 1e-2)
    assert prev - p[0][0] == pytest.approx(1e-2, rel=1e-6)


def test_adam_shape_mismatch():
    p = [np.zeros(2)]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(3)], AdamState.zeros_like(p), 1e-3)


def test_plateau_scheduler():
    s = PlateauScheduler(1e-3, factor=0.5, patience=2, threshold=1e-3)
    lrs = [s.step(v) for v in [1.0, 0.5, 0.5, 0.5, 0.5, 0.49999, 0.5, 0.5, 0.1]]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert lrs[1] == 1e-3 and lrs[4] == 5e-4 and lrs[-1] == lrs[-2]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(arch="lstm")
    with pytest.raises(ValueError):
        TrainConfig(arch="pinc", order=1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(lr_init=1e-9, lr_min=1e-8)


def test_zero_epochs_returns_initial_model():
    cfg = TrainConfig(epochs=0)
    res = train_run(cfg, BOX, MSD)
    assert res.log == [] and not res.diverged


SMALL = dict(f=100.0, neurons=8, epochs=4, batches=2, n_collo=200, seed=3)


def test_training_deterministic():
    a = train_run(TrainConfig(**SMALL, n_data=20), BOX, MSD)
    b = train_run(TrainConfig(**SMALL, n_data=20), BOX, MSD)
    assert a.log == b.log
    for x, y in zip(a.model.net.arrays, b.model.net.arrays):
        np.testing.assert_array_equal(x, y)


def test_training_reduces_physics_loss():
    res = train_run(TrainConfig(**{**SMALL, "epochs": 30}), BOX, MSD)
    assert res.log[-1]["val_phys"] < res.log[0]["val_phys"]


def test_ddpinn_has_no_ic_term():
    res = train_run(TrainConfig(**SMALL, n_ic=50), BOX, MSD)
    assert all(r["train_ic"] == 0.0 and r["lambda_ic"] == 0.0 for r in res.log)


def test_pinc_balances_ic_weight():
    res = train_run(TrainConfig(**{**SMALL, "arch": "pinc"}, n_ic=100), BOX, MSD)
    assert res.log[0]["train_ic"] > 0 and res.log[0]["lambda_ic"] != 1.0


def test_divergence_restores_last_good():
    calls = {"n": 0}

    def flaky(x, u):
        calls["n"] += 1
        return MSD(x, u) if calls["n"] < 8 else x * np.nan

    res = train_run(TrainConfig(**SMALL), BOX, flaky)
    assert res.diverged
    assert all(np.all(np.isfinite(a)) for a in res.model.net.arrays)
