"""Network machinery tests: streams, gradients, optimizer, training contracts."""

import math

import numpy as np
import pytest

from pdeseek.core import Scenario, TrainingDivergence, ValidationError
from pdeseek.pinn import (
    Adam,
    Condition,
    Net,
    TrainConfig,
    TrainedNet,
    desk_config,
    extract_signal,
    forward_with_derivatives,
    init_net,
    loss_and_grads,
    loss_only,
    mse,
    paper_config,
    train,
)

BOX = (0.0, 1.0, 0.0, 2.0)


def small_net(seed=7, width=8, layers=2):
    return init_net(layers, width, BOX, seed)


def test_single_unit_net_derivatives_exact():
    # u = 2 tanh(0.3 x + 0.8 t + 0.1) - 0.5 with identity normalization:
    # every stream has a closed form
    net = Net(weights=[np.array([[0.3], [0.8]]), np.array([[2.0]])],
              biases=[np.array([0.1]), np.array([-0.5])],
              in_shift=np.zeros(2), in_scale=np.ones(2))
    x, t = 0.4, 1.3
    z = math.tanh(0.3 * x + 0.8 * t + 0.1)
    s1 = 1.0 - z * z
    u, ux, ut, uxx, utt = forward_with_derivatives(net, x, t)
    assert u == pytest.approx(2.0 * z - 0.5, rel=1e-15)
    assert ux == pytest.approx(2.0 * s1 * 0.3, rel=1e-14)
    assert ut == pytest.approx(2.0 * s1 * 0.8, rel=1e-14)
    assert uxx == pytest.approx(2.0 * (-2.0 * z * s1) * 0.09, rel=1e-13)
    assert utt == pytest.approx(2.0 * (-2.0 * z * s1) * 0.64, rel=1e-13)


def test_normalization_scales_derivatives():
    # same weights, box-normalized inputs: derivatives must be physical
    net = Net(weights=[np.array([[0.3], [0.8]]), np.array([[2.0]])],
              biases=[np.array([0.1]), np.array([-0.5])],
              in_shift=np.array([0.5, 1.0]), in_scale=np.array([2.0, 1.0]))
    x, t = 0.4, 1.3
    h = 1e-6
    u, ux, ut, uxx, utt = forward_with_derivatives(net, x, t)
    up, _, _, _, _ = forward_with_derivatives(net, x + h, t)
    um, _, _, _, _ = forward_with_derivatives(net, x - h, t)
    assert ux == pytest.approx((up - um) / (2 * h), rel=1e-8)
    assert uxx == pytest.approx((up - 2 * u + um) / h**2, rel=1e-3)


def test_derivatives_match_finite_differences_random_net():
    net = small_net()
    rng = np.random.default_rng(11)
    xs = rng.uniform(0.1, 0.9, 20)
    ts = rng.uniform(0.1, 1.9, 20)
    h = 1e-5
    u, ux, ut, uxx, utt = forward_with_derivatives(net, xs, ts)
    f = lambda a, b: forward_with_derivatives(net, a, b)[0]
    assert np.allclose(ux, (f(xs + h, ts) - f(xs - h, ts)) / (2 * h), atol=1e-8)
    assert np.allclose(ut, (f(xs, ts + h) - f(xs, ts - h)) / (2 * h), atol=1e-8)
    assert np.allclose(uxx, (f(xs + h, ts) - 2 * u + f(xs - h, ts)) / h**2, atol=1e-4)
    assert np.allclose(utt, (f(xs, ts + h) - 2 * u + f(xs, ts - h)) / h**2, atol=1e-4)


def test_hidden_unit_permutation_invariance():
    net = small_net()
    perm = np.random.default_rng(0).permutation(net.weights[0].shape[1])
    permuted = Net(
        weights=[net.weights[0][:, perm], net.weights[1][perm][:, :]],
        biases=[net.biases[0][perm], net.biases[1]],
        in_shift=net.in_shift, in_scale=net.in_scale)
    # only valid for a single hidden layer
    one = init_net(1, 8, BOX, 3)
    perm = np.random.default_rng(1).permutation(8)
    swapped = Net(weights=[one.weights[0][:, perm], one.weights[1][perm, :]],
                  biases=[one.biases[0][perm], one.biases[1]],
                  in_shift=one.in_shift, in_scale=one.in_scale)
    xs = np.linspace(0.05, 0.95, 7)
    a = forward_with_derivatives(one, xs, xs)[0]
    b = forward_with_derivatives(swapped, xs, xs)[0]
    assert np.allclose(a, b, atol=1e-14)


def _flatten(grads):
    g_w, g_b = grads
    return np.concatenate([g.ravel() for g in g_w] + [g.ravel() for g in g_b])


def _set_param_vector(net, vec):
    pos = 0
    for w in net.weights:
        w[...] = vec[pos:pos + w.size].reshape(w.shape)
        pos += w.size
    for b in net.biases:
        b[...] = vec[pos:pos + b.size].reshape(b.shape)
        pos += b.size


def test_loss_gradients_match_finite_differences():
    net = small_net(width=8, layers=2)
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(0, 1, 50), rng.uniform(0, 2, 50)])
    face = np.column_stack([np.zeros(20), rng.uniform(0, 2, 20)])
    conds = [
        Condition(pts, {"ut": 1.0, "uxx": -1.0}, np.zeros(50), "pde", 1.0),
        Condition(face, {"u": 1.0}, 0.2 * np.sin(5 * face[:, 1]), "bc", 3.0),
        Condition(face, {"ux": 1.0}, np.zeros(20), "bc", 3.0),
    ]
    _, _, grads = loss_and_grads(net, conds)
    g = _flatten(grads)
    theta = net.parameter_vector()
    h = 1e-6
    idx = rng.choice(theta.size, 25, replace=False)
    for i in idx:
        tp = theta.copy()
        tp[i] += h
        _set_param_vector(net, tp)
        lp, _ = loss_only(net, conds)
        tp[i] -= 2 * h
        _set_param_vector(net, tp)
        lm, _ = loss_only(net, conds)
        fd = (lp - lm) / (2 * h)
        denom = max(abs(fd), abs(g[i]), 1e-8)
        assert abs(g[i] - fd) / denom < 1e-4, f"param {i}: {g[i]} vs {fd}"
    _set_param_vector(net, theta)


def test_loss_decomposition_sums_to_total():
    net = small_net()
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(0, 1, 30), rng.uniform(0, 2, 30)])
    conds = [
        Condition(pts, {"ut": 1.0, "uxx": -1.0}, np.zeros(30), "pde", 2.0),
        Condition(pts[:10], {"u": 1.0}, np.ones(10), "bc", 0.5),
        Condition(pts[:10], {"u": 1.0}, np.zeros(10), "ic", 1.0),
        Condition(pts[:5], {"u": 1.0}, np.zeros(5), "data", 4.0),
    ]
    total, parts = loss_only(net, conds)
    assert total == pytest.approx(sum(parts.values()), rel=1e-14)
    total2, parts2, _ = loss_and_grads(net, conds)
    assert total2 == pytest.approx(total, rel=1e-14)
    assert parts2 == parts


def test_variable_coefficient_condition():
    # per-point coefficient arrays must act pointwise
    net = small_net()
    pts = np.column_stack([np.linspace(0.1, 0.9, 9), np.linspace(0.1, 1.9, 9)])
    c = np.linspace(1.0, 2.0, 9)
    u = forward_with_derivatives(net, pts[:, 0], pts[:, 1])[0]
    total, _ = loss_only(net, [Condition(pts, {"u": c}, np.zeros(9), "data", 1.0)])
    assert total == pytest.approx(float(np.mean((c * u) ** 2)), rel=1e-13)


def test_empty_condition_rejected():
    net = small_net()
    bad = Condition(np.zeros((0, 2)), {"u": 1.0}, np.zeros(0), "bc", 1.0)
    with pytest.raises(ValidationError):
        loss_only(net, [bad])
    with pytest.raises(ValidationError):
        loss_and_grads(net, [bad])


def test_init_seed_determinism():
    a = init_net(3, 32, BOX, 42)
    b = init_net(3, 32, BOX, 42)
    c = init_net(3, 32, BOX, 43)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert not all(np.array_equal(x, y) for x, y in zip(a.weights, c.weights))
    # Glorot bound for the first layer
    bound = math.sqrt(6.0 / (2 + 32))
    assert np.max(np.abs(a.weights[0])) <= bound


def test_adam_zero_gradient_keeps_parameters():
    net = small_net()
    before = net.parameter_vector()
    opt = Adam(net, 1e-3)
    opt.step(net, ([np.zeros_like(w) for w in net.weights],
                   [np.zeros_like(b) for b in net.biases]))
    assert np.array_equal(net.parameter_vector(), before)


def test_adam_first_step_is_signed_eta():
    # bias correction makes the first update eta * g / (|g| + eps)
    net = small_net()
    before = net.parameter_vector()
    opt = Adam(net, 1e-3)
    g_w = [np.full_like(w, 2.0) for w in net.weights]
    g_b = [np.full_like(b, -3.0) for b in net.biases]
    opt.step(net, (g_w, g_b))
    after = net.parameter_vector()
    delta = after - before
    n_w = sum(w.size for w in net.weights)
    assert np.allclose(delta[:n_w], -1e-3 * 2.0 / (2.0 + 1e-8), rtol=1e-10)
    assert np.allclose(delta[n_w:], 1e-3 * 3.0 / (3.0 + 1e-8), rtol=1e-10)


def test_adam_rejects_nonfinite_gradient():
    net = small_net()
    opt = Adam(net, 1e-3)
    g_w = [np.zeros_like(w) for w in net.weights]
    g_w[0] = g_w[0].copy()
    g_w[0][0, 0] = np.nan
    with pytest.raises(TrainingDivergence):
        opt.step(net, (g_w, [np.zeros_like(b) for b in net.biases]))


def test_train_is_bitwise_deterministic():
    scen = Scenario()
    cfg = dict(iterations=40, n_residual=64, n_bc=16, width=8,
               hidden_layers=2, seed=42)
    a = train("diffusion", scen, desk_config(**cfg), mode="trajectory")
    b = train("diffusion", scen, desk_config(**cfg), mode="trajectory")
    assert np.array_equal(a.net.parameter_vector(), b.net.parameter_vector())
    assert a.history == b.history


def test_train_divergence_carries_history():
    scen = Scenario()
    # Adam steps are bounded by eta, so the rate must be huge before the
    # derivative streams blow the residual past the abort threshold
    cfg = desk_config(iterations=400, n_residual=64, n_bc=16, width=8,
                      hidden_layers=2, seed=42, eta=300.0)
    with pytest.raises(TrainingDivergence) as err:
        train("diffusion", scen, cfg, mode="trajectory")
    assert isinstance(err.value.history, list)


def test_train_loss_drops_smoke():
    scen = Scenario()
    cfg = desk_config(iterations=300, n_residual=128, n_bc=32, width=16,
                      hidden_layers=2, seed=42)
    trained = train("diffusion", scen, cfg, mode="trajectory")
    assert trained.history[-1][1] < trained.history[0][1]
    assert trained.mode == "trajectory" and trained.pde_class == "diffusion"
    # history rows are (step, total, pde, bc, ic, data)
    assert trained.history[0][0] == 0
    assert trained.history[-1][0] == cfg.iterations - 1


def test_trajectory_face_fit_short_training():
    # even a short run should start tracking the face sinusoid at x = 0
    scen = Scenario()
    cfg = desk_config(iterations=800, n_residual=256, n_bc=64, width=16,
                      hidden_layers=2, seed=42)
    trained = train("diffusion", scen, cfg, mode="trajectory")
    tg = np.linspace(0.0, scen.dither_period(), 101)
    face = extract_signal(trained, tg, at_x=0.0)
    ref = scen.amp * np.sin(scen.omega * tg)
    assert mse(face, ref) < 1e-3


def test_ibvp_requires_drive():
    scen = Scenario()
    with pytest.raises(ValidationError, match="drive"):
        train("diffusion", scen, desk_config(iterations=1), mode="ibvp")


def test_unknown_mode_rejected():
    scen = Scenario()
    with pytest.raises(ValidationError, match="mode"):
        train("diffusion", scen, desk_config(iterations=1), mode="forecast")


def test_extract_signal_empty_grid():
    net = small_net()
    trained = TrainedNet(net, [], {}, "trajectory", "diffusion", BOX,
                         lambda t: np.full_like(t, 1.0))
    out = extract_signal(trained, np.zeros(0))
    assert out.shape == (0,)


def test_extract_signal_matches_forward():
    net = small_net()
    trained = TrainedNet(net, [], {}, "trajectory", "diffusion", BOX,
                         lambda t: np.full_like(t, 1.0))
    tg = np.linspace(0.0, 2.0, 9)
    got = extract_signal(trained, tg)
    ref = forward_with_derivatives(net, np.ones_like(tg), tg)[0]
    assert np.allclose(got, ref, atol=1e-15)
    # at_x override
    got0 = extract_signal(trained, tg, at_x=0.25)
    ref0 = forward_with_derivatives(net, np.full_like(tg, 0.25), tg)[0]
    assert np.allclose(got0, ref0, atol=1e-15)


def test_mse_examples_and_guards():
    assert mse([1.0, 2.0], [0.0, 0.0]) == pytest.approx(2.5, rel=1e-15)
    assert mse([1.0, 1.0], [1.0, 1.0]) == 0.0
    with pytest.raises(ValidationError):
        mse([1.0], [1.0, 2.0])
    with pytest.raises(ValidationError):
        mse([], [])


def test_config_presets_and_validation():
    paper = paper_config()
    assert (paper.hidden_layers, paper.width) == (5, 100)
    assert (paper.iterations, paper.n_residual) == (40000, 10000)
    desk = desk_config()
    assert (desk.hidden_layers, desk.width) == (3, 32)
    assert desk.iterations == 5000 and desk.eta == 1e-3
    with pytest.raises(ValidationError):
        desk_config(eta=0.0)
    with pytest.raises(ValidationError):
        desk_config(iterations=0)
    with pytest.raises(ValidationError):
        paper_config(width=0)
