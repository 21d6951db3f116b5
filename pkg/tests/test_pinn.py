import numpy as np
import pytest

from elmfin import pinn
from elmfin.elm import HiddenLayer, activation_deriv, init_hidden_layer


def constant_problem(value=1.0):
    return pinn.PdeProblem(
        m=1,
        diffusion=np.array([[0.02]]),
        drift=np.array([0.1]),
        discount=0.0,
        rhs=lambda X, t: np.zeros(len(X)),
        lo=np.array([-1.0]),
        hi=np.array([1.0]),
        horizon=1.0,
        terminal=lambda X: np.full(len(X), value),
        boundary=lambda X, t: np.full(len(X), value),
        name="constant",
    )


# -- derivative rows ----------------------------------------------------------

def test_derivative_rows_zero_weights():
    layer = HiddenLayer(np.zeros((4, 3)), np.ones(4) * 0.3, "tanh", 1.0, 0)
    point = np.array([0.5, -0.2, 0.7])
    for spec in [(1, 0, 0), (0, 0, 1), (2, 0, 0), (1, 1, 0)]:
        assert np.all(pinn.derivative_row(layer, point, spec) == 0.0)
    # value row is G(b), not zero
    np.testing.assert_allclose(
        pinn.derivative_row(layer, point, (0, 0, 0)), np.tanh(0.3), rtol=1e-15
    )


def test_derivative_row_single_node_hand_values():
    # node: w_x = 2, w_t = -1, b = 0.5 over input (x, t)
    layer = HiddenLayer(np.array([[2.0, -1.0]]), np.array([0.5]), "tanh", 1.0, 0)
    x, t = 0.3, 0.8
    z = 2.0 * x - 1.0 * t + 0.5
    th = np.tanh(z)
    assert pinn.derivative_row(layer, [x, t], (1, 0))[0] == pytest.approx(2.0 * (1 - th**2), rel=1e-14)
    assert pinn.derivative_row(layer, [x, t], (2, 0))[0] == pytest.approx(4.0 * -2 * th * (1 - th**2), rel=1e-14)
    assert pinn.derivative_row(layer, [x, t], (0, 1))[0] == pytest.approx(-1.0 * (1 - th**2), rel=1e-14)


@pytest.mark.parametrize("activation", ["tanh", "sine"])
def test_derivative_rows_match_finite_differences(activation):
    rng = np.random.default_rng(3)
    m = 2
    layer = init_hidden_layer(m + 1, 8, 0.9, activation, seed=5)
    point = rng.uniform(-0.5, 0.5, size=m + 1)

    def net(p):
        return activation_deriv(activation, layer.weights @ p + layer.biases, 0)

    specs = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (0, 2, 0), (1, 1, 0)]
    for spec in specs:
        row = pinn.derivative_row(layer, point, spec)
        # wider step for second-order stencils: their roundoff goes as eps/h^2
        h = 1e-5 if sum(spec) == 1 else 1e-4
        approx = _fd_derivative(net, point, spec, h)
        assert np.max(np.abs(row - approx)) <= 1e-6


def _fd_derivative(f, p, spec, h):
    axes = [i for i, s in enumerate(spec) for _ in range(s)]
    if len(axes) == 1:
        e = np.zeros(len(p)); e[axes[0]] = h
        return (f(p + e) - f(p - e)) / (2 * h)
    i, j = axes
    if i == j:
        e = np.zeros(len(p)); e[i] = h
        return (f(p + e) - 2 * f(p) + f(p - e)) / h**2
    ei = np.zeros(len(p)); ei[i] = h
    ej = np.zeros(len(p)); ej[j] = h
    return (f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)) / (4 * h**2)


def test_derivative_row_rejects_unsupported():
    layer = init_hidden_layer(3, 4, 1.0, "tanh", seed=0)
    with pytest.raises(ValueError):
        pinn.derivative_row(layer, [0, 0, 0], (0, 0, 2))     # d2/dt2
    with pytest.raises(ValueError):
        pinn.derivative_row(layer, [0, 0, 0], (1, 0, 1))     # mixed x-t
    with pytest.raises(ValueError):
        pinn.derivative_row(layer, [0, 0, 0], (3, 0, 0))


# -- assembly -----------------------------------------------------------------

def test_assemble_pure_time_rows_when_operator_vanishes():
    prob = pinn.PdeProblem(
        m=1, diffusion=np.zeros((1, 1)), drift=np.zeros(1), discount=0.0,
        rhs=lambda X, t: np.zeros(len(X)),
        lo=np.array([-1.0]), hi=np.array([1.0]), horizon=1.0,
        terminal=lambda X: np.zeros(len(X)), boundary=lambda X, t: np.zeros(len(X)),
    )
    layer = init_hidden_layer(2, 6, 0.8, "sine", seed=2)
    pts = pinn.sample_collocation(prob, 5, 3, 3, seed=1)
    H, Y = pinn.assemble(prob, layer, pts, weighting="uniform")
    for i in range(5):
        expected = pinn.derivative_row(layer, [pts.interior_x[i, 0], pts.interior_t[i]], (0, 1))
        np.testing.assert_allclose(H[i], expected, atol=1e-13)


def test_assemble_single_row_hand_check():
    sigma, r = 0.3, 0.05
    prob = pinn.PdeProblem(
        m=1, diffusion=np.array([[0.5 * sigma**2]]), drift=np.array([r]), discount=r,
        rhs=lambda X, t: np.zeros(len(X)),
        lo=np.array([-1.0]), hi=np.array([1.0]), horizon=1.0,
        terminal=lambda X: np.zeros(len(X)), boundary=lambda X, t: np.zeros(len(X)),
    )
    wx, wt, b = 1.7, -0.6, 0.2
    layer = HiddenLayer(np.array([[wx, wt]]), np.array([b]), "tanh", 1.0, 0)
    pts = pinn.CollocationSet(
        np.array([[0.4]]), np.array([0.3]), np.array([[1.0]]), np.array([0.1]),
        np.array([[0.0]]), seed=0,
    )
    H, Y = pinn.assemble(prob, layer, pts, weighting="uniform")
    z = wx * 0.4 + wt * 0.3 + b
    g0, g1, g2 = np.tanh(z), 1 - np.tanh(z) ** 2, -2 * np.tanh(z) * (1 - np.tanh(z) ** 2)
    hand = wt * g1 + 0.5 * sigma**2 * wx**2 * g2 + r * wx * g1 - r * g0
    assert H[0, 0] == pytest.approx(hand, rel=1e-13)


def test_assemble_block_weighting():
    prob = constant_problem()
    layer = init_hidden_layer(2, 5, 1.0, "tanh", seed=3)
    pts = pinn.sample_collocation(prob, 16, 4, 9, seed=2)
    H_u, Y_u = pinn.assemble(prob, layer, pts, weighting="uniform")
    H_w, Y_w = pinn.assemble(prob, layer, pts, weighting="inverse-sqrt-count")
    np.testing.assert_allclose(H_w[:16], H_u[:16] / 4.0, rtol=1e-15)
    np.testing.assert_allclose(H_w[16:20], H_u[16:20] / 2.0, rtol=1e-15)
    np.testing.assert_allclose(H_w[20:], H_u[20:] / 3.0, rtol=1e-15)
    np.testing.assert_allclose(Y_w[16:20], Y_u[16:20] / 2.0, rtol=1e-15)


def test_collocation_counts_and_faces():
    prob = pinn.rainbow_max_put_problem()
    pts = pinn.sample_collocation(prob, 100, 80, 40, seed=7)
    assert pts.counts == (100, 80, 40)
    on_face = 0
    for x in pts.boundary_x:
        on_face += int(any(np.isclose(x[l], [prob.lo[l], prob.hi[l]]).any() for l in range(2)))
    assert on_face == 80


def test_late_time_fraction():
    prob = constant_problem()
    pts = pinn.sample_collocation(prob, 1000, 10, 10, seed=5, late_time_fraction=0.25)
    assert np.mean(pts.interior_t >= 0.9) >= 0.25


# -- solving ------------------------------------------------------------------

def test_solve_constant_solution():
    prob = constant_problem(1.0)
    cfg = pinn.PinnConfig(L=200, scale=1.0, C=1e-10, n_interior=400, n_boundary=120,
                          n_terminal=120, layer_seed=1, collocation_seed=2)
    sol = pinn.solve_pde(prob, cfg)
    xs = np.linspace(-0.95, 0.95, 40)[:, None]
    for t in (0.0, 0.5, 0.99):
        err = np.max(np.abs(sol.evaluate(xs, t) - 1.0))
        assert err <= 1e-4


def test_solve_normal_equations_optimality():
    prob = pinn.bs_put_problem()
    cfg = pinn.PinnConfig(L=80, C=1e-8, n_interior=300, n_boundary=100, n_terminal=100)
    layer = init_hidden_layer(2, cfg.L, cfg.scale, cfg.activation, cfg.layer_seed)
    pts = pinn.sample_collocation(prob, cfg.n_interior, cfg.n_boundary, cfg.n_terminal, cfg.collocation_seed)
    H, Y = pinn.assemble(prob, layer, pts)
    from elmfin.elm import fit_ridge

    beta = fit_ridge(H, Y, cfg.C)
    lhs = H.T @ (H @ beta) + cfg.C * beta
    rhs = H.T @ Y
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_solution_boundary_fidelity():
    prob = pinn.bs_put_problem()
    cfg = pinn.PinnConfig(L=400, C=1e-10, n_interior=1500, n_boundary=500, n_terminal=500)
    sol = pinn.solve_pde(prob, cfg)
    fresh = pinn.sample_collocation(prob, 10, 400, 10, seed=999)
    pred = sol.evaluate(fresh.boundary_x, fresh.boundary_t)
    truth = prob.boundary(fresh.boundary_x, fresh.boundary_t)
    rms = float(np.sqrt(np.mean((pred - truth) ** 2)))
    assert rms <= 10.0 * sol.residual_norms[1]


def test_presets_exist_with_configs():
    for name in ("bs_put", "rainbow_max_put", "double_barrier_call"):
        problem, cfg = pinn.preset(name)
        assert problem.name == name
        assert cfg.L == 5000
    problem, cfg = pinn.preset("bs_put", problem_overrides={"sigma": 0.5}, L=100)
    assert cfg.L == 100
    with pytest.raises(ValueError):
        pinn.preset("american_put")


# -- relative error -----------------------------------------------------------

def test_relative_error_trivials():
    assert pinn.relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert pinn.relative_error([0.0, 0.0], [3.0, 4.0]) == 1.0


def test_relative_error_matches_scalar():
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=10), rng.normal(size=10)
    num = np.sqrt(np.sum((a - b) ** 2))
    den = np.sqrt(np.sum(b**2))
    assert pinn.relative_error(a, b) == pytest.approx(num / den, rel=1e-14)


def test_relative_error_zero_truth_errors():
    with pytest.raises(ValueError):
        pinn.relative_error([1.0], [0.0])
