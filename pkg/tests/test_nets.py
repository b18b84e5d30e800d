import math

import numpy as np
import pytest

from insertrl.nets import (
    AdamState,
    GaussianHead,
    MlpParams,
    adam_step,
    flatten_grads,
    flatten_params,
    head_from_raw,
    kl_diag_gaussian,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    mlp_init,
    save_checkpoint,
    squash_log_std,
    tanh_gaussian_sample,
    unflatten_params,
)

from helpers import central_diff, rel_err


def test_forward_zero_weights_returns_bias():
    b = np.array([0.3, -1.2])
    p = MlpParams([np.zeros((2, 4))], [b], ["identity"])
    out = mlp_forward(p, np.array([1.0, 2.0, 3.0, 4.0]))
    assert np.array_equal(out, b)


def test_forward_identity_layer():
    p = MlpParams([np.eye(2)], [np.zeros(2)], ["identity"])
    out = mlp_forward(p, np.array([1.0, 2.0]))
    assert np.array_equal(out, np.array([1.0, 2.0]))


def test_forward_matches_straight_line_oracle():
    # independent forward, written out long-hand
    rng = np.random.default_rng(7)
    p = mlp_init((3, 4, 2), rng)
    x = rng.normal(size=3)

    h = np.zeros(4)
    for i in range(4):
        acc = p.biases[0][i]
        for j in range(3):
            acc += p.weights[0][i, j] * x[j]
        h[i] = math.tanh(acc)
    y = np.zeros(2)
    for i in range(2):
        acc = p.biases[1][i]
        for j in range(4):
            acc += p.weights[1][i, j] * h[j]
        y[i] = acc

    assert np.max(np.abs(mlp_forward(p, x) - y)) < 1e-12


def test_forward_dim_mismatch_raises():
    p = MlpParams([np.eye(2)], [np.zeros(2)], ["identity"])
    with pytest.raises(ValueError):
        mlp_forward(p, np.zeros(3))


def test_backward_linear_layer_rows():
    p = MlpParams([np.zeros((3, 2))], [np.zeros(3)], ["identity"])
    x = np.array([1.5, -2.0])
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        grads, _ = mlp_backward(p, x, e)
        dw, db = grads[0]
        assert np.array_equal(dw[i], x)
        assert np.all(dw[np.arange(3) != i] == 0.0)
        assert db[i] == 1.0


def test_backward_zero_upstream():
    rng = np.random.default_rng(0)
    p = mlp_init((3, 5, 2), rng)
    grads, gx = mlp_backward(p, rng.normal(size=3), np.zeros(2))
    assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)
    assert np.all(gx == 0)


@pytest.mark.parametrize("seed", range(20))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    dims = rng.choice([2, 3, 5, 8], size=rng.integers(2, 5)).tolist()
    p = mlp_init(dims, rng, hidden_activation="tanh")
    x = rng.normal(size=dims[0])
    up = rng.normal(size=dims[-1])

    grads, gx = mlp_backward(p, x, up)
    flat0 = flatten_params(p)

    def loss(flat):
        unflatten_params(p, flat)
        out = mlp_forward(p, x)
        return float(out @ up)

    fd = central_diff(loss, flat0)
    unflatten_params(p, flat0)
    assert rel_err(flatten_grads(grads), fd) <= 1e-6

    fd_x = central_diff(lambda xv: float(mlp_forward(p, xv) @ up), x.copy())
    assert rel_err(gx, fd_x) <= 1e-6


def test_backward_batch_consistent_with_sum_of_singles():
    rng = np.random.default_rng(3)
    p = mlp_init((4, 6, 3), rng)
    xs = rng.normal(size=(5, 4))
    ups = rng.normal(size=(5, 3))
    gb, gxb = mlp_backward(p, xs, ups)
    acc = [np.zeros_like(w) for w in p.weights]
    accb = [np.zeros_like(b) for b in p.biases]
    for i in range(5):
        g, gx = mlp_backward(p, xs[i], ups[i])
        for k, (dw, db) in enumerate(g):
            acc[k] += dw
            accb[k] += db
        assert np.allclose(gx, gxb[i])
    for k, (dw, db) in enumerate(gb):
        assert np.allclose(dw, acc[k])
        assert np.allclose(db, accb[k])


# ---------------------------------------------------------------------------
# Adam

def test_adam_zero_grads_keeps_params():
    st = AdamState(lr=0.1)
    params = np.array([1.0, -2.0])
    out = adam_step(st, params, np.zeros(2))
    assert np.array_equal(out, params)
    assert st.step == 1


def test_adam_first_step_unit_gradient():
    # bias correction makes the very first update ~lr * g/|g|
    st = AdamState(lr=0.1)
    out = adam_step(st, np.array([0.5]), np.array([1.0]))
    delta = 0.5 - out[0]
    assert 0.0999 < delta <= 0.1


def test_adam_second_identical_step_not_larger():
    st = AdamState(lr=0.1)
    p0 = np.array([0.0])
    p1 = adam_step(st, p0, np.array([1.0]))
    p2 = adam_step(st, p1, np.array([1.0]))
    assert abs(p2[0] - p1[0]) <= abs(p1[0] - p0[0]) + 1e-9


def test_adam_deterministic_bitwise():
    def run():
        st = AdamState(lr=3e-4)
        p = np.linspace(-1, 1, 7)
        for g in np.random.default_rng(5).normal(size=(20, 7)):
            p = adam_step(st, p, g)
        return p

    assert np.array_equal(run(), run())


def test_adam_rejects_non_finite():
    st = AdamState()
    with pytest.raises(FloatingPointError, match="index 1"):
        adam_step(st, np.zeros(3), np.array([0.0, np.nan, 0.0]))


# ---------------------------------------------------------------------------
# tanh-Gaussian head

def test_sample_at_symmetry_point():
    head = GaussianHead(np.zeros(3), np.log(np.full(3, 0.5)))
    a, lp = tanh_gaussian_sample(head, np.zeros(3))
    assert np.array_equal(a, np.zeros(3))
    expected = 3 * (-math.log(0.5) - 0.5 * math.log(2 * math.pi))
    assert abs(lp - expected) < 1e-12


def test_density_integrates_to_one():
    # 1-D: integrate exp(log_prob) over the squashed support via quadrature
    head = GaussianHead(np.array([0.3]), np.array([math.log(0.7)]))
    n = 10_000
    actions = np.linspace(-1 + 1e-9, 1 - 1e-9, n)
    pre = np.arctanh(actions)
    noise = (pre - head.mean[0]) / head.std[0]
    dens = np.empty(n)
    for i in range(n):
        _, lp = tanh_gaussian_sample(head, np.array([noise[i]]))
        dens[i] = math.exp(lp)
    integral = np.trapezoid(dens, actions)
    assert abs(integral - 1.0) < 1e-3


def test_large_mean_saturates_with_finite_logprob():
    head = GaussianHead(np.array([40.0]), np.array([0.0]))
    a, lp = tanh_gaussian_sample(head, np.zeros(1))
    assert a[0] > 0.999999
    assert math.isfinite(lp)


def test_sample_deterministic_given_noise():
    head = GaussianHead(np.array([0.1, -0.2]), np.array([-1.0, 0.0]))
    noise = np.array([0.5, -1.5])
    assert tanh_gaussian_sample(head, noise)[0].tolist() == \
        tanh_gaussian_sample(head, noise)[0].tolist()


def test_squash_log_std_stays_in_bounds():
    raw = np.array([-1e6, -3.0, 0.0, 3.0, 1e6])
    out = squash_log_std(raw)
    assert np.all(out >= -5.0) and np.all(out <= 2.0)


def test_head_from_raw_splits():
    raw = np.array([0.1, 0.2, 0.0, 0.0])
    h = head_from_raw(raw)
    assert h.mean.tolist() == [0.1, 0.2]
    assert np.allclose(h.log_std, squash_log_std(np.zeros(2)))


# ---------------------------------------------------------------------------
# diagonal-Gaussian KL

def test_kl_identical_is_zero():
    m = np.array([0.4, -0.7])
    s = np.array([0.3, 1.1])
    assert kl_diag_gaussian(m, s, m, s) == 0.0


def test_kl_unit_shift_closed_form():
    assert abs(kl_diag_gaussian([0.0], [1.0], [1.0], [1.0]) - 0.5) < 1e-12


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(11)
    pm, ps = np.array([0.2, -0.5]), np.array([0.8, 1.3])
    qm, qs = np.array([-0.1, 0.4]), np.array([1.1, 0.6])
    x = rng.normal(size=(100_000, 2)) * ps + pm

    def logpdf(x, m, s):
        return (-0.5 * ((x - m) / s) ** 2 - np.log(s)
                - 0.5 * math.log(2 * math.pi)).sum(axis=1)

    mc = float(np.mean(logpdf(x, pm, ps) - logpdf(x, qm, qs)))
    cf = float(kl_diag_gaussian(pm, ps, qm, qs))
    assert abs(mc - cf) / cf < 0.02


def test_kl_nonnegative_random():
    rng = np.random.default_rng(2)
    for _ in range(200):
        pm, qm = rng.normal(size=(2, 3))
        ps, qs = rng.uniform(0.05, 3.0, size=(2, 3))
        assert kl_diag_gaussian(pm, ps, qm, qs) >= 0.0


def test_kl_rejects_bad_std():
    with pytest.raises(ValueError):
        kl_diag_gaussian([0.0], [0.0], [0.0], [1.0])


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    net = mlp_init((4, 8, 3), rng)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, {"actor": net}, {"log_alpha": -1.25})
    nets, scalars = load_checkpoint(path)
    back = nets["actor"]
    for w0, w1 in zip(net.weights, back.weights):
        assert np.max(np.abs(w0 - w1)) <= 1e-15
    for b0, b1 in zip(net.biases, back.biases):
        assert np.max(np.abs(b0 - b1)) <= 1e-15
    assert scalars["log_alpha"] == -1.25
    assert back.activations == net.activations
