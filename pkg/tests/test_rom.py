import warnings

import numpy as np
import pytest

from conservative_rom.cases import Problem, default_config
from conservative_rom.neural import TrainConfig
from conservative_rom.pod import compute_pod
from conservative_rom.rom import (
    STRATEGIES, RomModel, constraint_violation, correct, evaluate, evaluate_predictions,
    homogeneous_snapshots, load_model, postprocess, predict_stress, save_model, train_strategy,
)

FAST = TrainConfig(epochs=300)


@pytest.fixture(scope="module")
def small_footing():
    problem = Problem(default_config("footing", resolution=5, pod_dim=6))
    mus = problem.config.sample(40, 11)
    sols = [problem.solve(m) for m in mus]
    S = np.column_stack([s.sigma for s in sols])
    U = np.column_stack([s.u for s in sols])
    R = np.column_stack([s.r for s in sols])
    return problem, mus, S, U, R


@pytest.fixture(scope="module")
def models(small_footing):
    problem, mus, S, _, _ = small_footing
    return {st: train_strategy(st, mus[:30], S[:, :30], problem, cfg=FAST) for st in STRATEGIES}


def test_split_targets_are_homogeneous(small_footing):
    problem, _, S, _, _ = small_footing
    H = homogeneous_snapshots(problem, S)
    assert np.abs(problem.B @ H).max() <= 1e-11 * np.abs(S).max()


def test_homogeneous_basis_in_kernel(models):
    for st in ("split", "corrected"):
        V0 = models[st].basis0.V
        assert np.abs(models[st].problem.B @ V0).max() <= 1e-11
        assert np.allclose(V0.T @ V0, np.eye(V0.shape[1]), atol=1e-12)


def test_corrector_satisfies_constraint_for_any_input(small_footing, models):
    problem, mus, _, _, _ = small_footing
    V0 = models["corrected"].basis0.V
    rng = np.random.default_rng(3)
    for j in range(10):
        mu = mus[30 + j % 10]
        f = problem.rhs(mu)
        wild = 10.0 ** rng.uniform(-3, 3) * rng.standard_normal(problem.n_sigma)
        out = correct(V0, wild, problem.tree.SI(f))
        assert np.abs(problem.B @ out - f).max() <= 1e-11


def test_corrector_error_bound(small_footing, models):
    problem, mus, S, _, _ = small_footing
    V0 = models["corrected"].basis0.V
    held_out = homogeneous_snapshots(problem, S[:, 30:])
    eps = np.linalg.norm(held_out - V0 @ (V0.T @ held_out), axis=0).max()
    rng = np.random.default_rng(4)
    for j in range(30, 40):
        sigma = S[:, j]
        guess = sigma + 10.0 ** rng.uniform(-6, -1) * rng.standard_normal(sigma.size)
        out = correct(V0, guess, problem.tree.SI(problem.rhs(mus[j])))
        assert np.linalg.norm(sigma - out) <= np.linalg.norm(sigma - guess) + eps * (1 + 1e-12)


def test_oracle_network_through_corrector(small_footing, models):
    """Feeding the exact stress leaves only the projection defect."""
    problem, mus, S, _, _ = small_footing
    V0 = models["corrected"].basis0.V
    for j in range(30, 35):
        particular = problem.tree.SI(problem.rhs(mus[j]))
        out = correct(V0, S[:, j], particular)
        h = S[:, j] - particular
        assert np.linalg.norm(out - S[:, j]) == pytest.approx(
            np.linalg.norm(h - V0 @ (V0.T @ h)), rel=1e-8, abs=1e-15)


def test_exact_conservation_of_split_and_corrected(small_footing, models):
    problem, mus, S, U, R = small_footing
    for st in ("split", "corrected"):
        report = evaluate(models[st], mus[30:], S[:, 30:], U[:, 30:], R[:, 30:])
        assert report.violations.max() <= 1e-11
    assert evaluate(models["blackbox"], mus[30:], S[:, 30:], U[:, 30:], R[:, 30:]).acv > 1e-9


def test_split_without_load_stays_in_kernel(small_footing):
    problem = Problem(default_config("hencky", resolution=5, pod_dim=4, root_count=2))
    mus = problem.config.sample(12, 0)
    S = np.column_stack([problem.solve(m).sigma for m in mus])
    model = train_strategy("split", mus, S, problem, cfg=TrainConfig(epochs=50))
    unloaded = mus[:3].copy()
    unloaded[:, 3] = 0.0  # delta = 0 switches the body force off
    out = predict_stress(model, unloaded)
    assert np.abs(problem.B @ out).max() <= 1e-12


def test_podnn_keeps_angular_momentum(small_footing, models):
    problem, mus, _, _, _ = small_footing
    nc = problem.mesh.num_cells
    out = predict_stress(models["podnn"], mus[30:])
    assert np.abs((problem.B @ out)[2 * nc:]).max() <= 1e-11


def test_fom_oracle_scores_zero(small_footing):
    problem, mus, S, U, R = small_footing
    rep = evaluate_predictions(problem, "oracle", mus[30:], S[:, 30:], S[:, 30:], U[:, 30:], R[:, 30:])
    assert rep.sigma_mre == 0.0
    assert rep.u_mre <= 1e-10 and rep.r_mre <= 1e-10
    assert rep.acv <= 1e-11


def test_zero_model_scores_one():
    problem = Problem(default_config("hencky", resolution=4, root_count=1))
    mus = problem.config.sample(4, 2)
    mus[:, 2] = 0.0  # gamma = 0: no boundary data, so sigma = 0 post-processes to 0
    sols = [problem.solve(m) for m in mus]
    S = np.column_stack([s.sigma for s in sols])
    U = np.column_stack([s.u for s in sols])
    R = np.column_stack([s.r for s in sols])
    rep = evaluate_predictions(problem, "zero", mus, np.zeros_like(S), S, U, R)
    assert rep.sigma_mre == pytest.approx(1.0)
    assert rep.u_mre == pytest.approx(1.0)
    assert rep.r_mre == pytest.approx(1.0)
    F = problem.rhs(mus)
    assert rep.acv == pytest.approx(np.abs(F).max(axis=0).mean())


def test_postprocess_round_trip(small_footing):
    problem, mus, S, U, R = small_footing
    for j in range(5):
        u, r = postprocess(problem, S[:, j], mus[j])
        ref = np.concatenate([U[:, j], R[:, j]])
        assert np.linalg.norm(np.concatenate([u, r]) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_postprocess_is_affine(small_footing):
    problem, mus, _, _, _ = small_footing
    rng = np.random.default_rng(0)
    s1, s2 = rng.standard_normal((2, problem.n_sigma))
    mu = mus[0]
    a = np.concatenate(postprocess(problem, s1 + s2, mu))
    b = np.concatenate(postprocess(problem, s1, mu)) + np.concatenate(postprocess(problem, s2, mu))
    offset = np.concatenate(postprocess(problem, np.zeros(problem.n_sigma), mu))
    assert np.allclose(a, b - offset, atol=1e-12 * np.abs(b).max())
    assert np.allclose(offset, -problem.tree.SI_adjoint(problem.boundary(mu)))


def test_zero_stress_and_data_postprocess_to_zero():
    problem = Problem(default_config("hencky", resolution=3, root_count=1))
    u, r = postprocess(problem, np.zeros(problem.n_sigma), [1.0, 1.0, 0.0, 0.0])
    assert not u.any() and not r.any()


def test_podnn_memorizes_single_snapshot(small_footing):
    problem, mus, S, _, _ = small_footing
    model = train_strategy("podnn", mus[:1], S[:, :1], problem,
                           cfg=TrainConfig(epochs=2000), n=1)
    out = predict_stress(model, mus[0])
    assert np.linalg.norm(out - S[:, 0]) <= 1e-6 * np.linalg.norm(S[:, 0])


def test_training_is_deterministic(small_footing):
    problem, mus, S, _, _ = small_footing
    for st in ("podnn", "split"):
        a = train_strategy(st, mus[:20], S[:, :20], problem, cfg=TrainConfig(epochs=30))
        b = train_strategy(st, mus[:20], S[:, :20], problem, cfg=TrainConfig(epochs=30))
        assert np.array_equal(predict_stress(a, mus[25]), predict_stress(b, mus[25]))


def test_corrected_shares_the_podnn_network(models):
    a, b = models["podnn"].network, models["corrected"].network
    for La, Lb in zip(a.layers, b.layers):
        assert np.array_equal(La.W, Lb.W)


def test_save_load_round_trip(tmp_path, small_footing, models):
    problem, mus, _, _, _ = small_footing
    for st, model in models.items():
        path = save_model(model, tmp_path / f"{st}.npz")
        again = load_model(path)
        assert again.strategy == st
        assert np.array_equal(predict_stress(model, mus[31:33]), predict_stress(again, mus[31:33]))
        # same bytes when written twice
        path2 = save_model(again, tmp_path / f"{st}_2.npz")
        assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_other_case(tmp_path, models):
    path = save_model(models["podnn"], tmp_path / "m.npz")
    with pytest.raises(ValueError):
        load_model(path, problem=Problem(default_config("footing", resolution=4)))


def test_extrapolation_warns(models):
    with pytest.warns(UserWarning):
        predict_stress(models["podnn"], np.array([5.0, 1.0, 1.0, 1.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        predict_stress(models["podnn"], np.array([1.0, 1.0, 1.0, 1.0]))


def test_gramian_latent_loss(small_footing):
    problem, mus, S, U, R = small_footing
    cfg = TrainConfig(epochs=200)
    a = train_strategy("podnn", mus[:30], S[:, :30], problem, cfg=cfg)
    b = train_strategy("podnn", mus[:30], S[:, :30], problem, cfg=cfg, latent_loss="gramian")
    assert not np.array_equal(predict_stress(a, mus[31]), predict_stress(b, mus[31]))
    assert b.history[-1] < b.history[0]
    c = train_strategy("corrected", mus[:30], S[:, :30], problem, cfg=cfg, latent_loss="gramian")
    assert evaluate(c, mus[30:], S[:, 30:], U[:, 30:], R[:, 30:]).acv <= 1e-11
    with pytest.raises(ValueError):
        train_strategy("podnn", mus[:30], S[:, :30], problem, latent_loss="h1")


def test_validation(small_footing):
    problem, mus, S, _, _ = small_footing
    with pytest.raises(ValueError):
        train_strategy("nonsense", mus, S, problem)
    with pytest.raises(ValueError):
        train_strategy("podnn", mus[:3], S[:, :4], problem)
    with pytest.raises(ValueError):
        RomModel("split", None, problem)


def test_constraint_violation_matches_definition(small_footing):
    problem, mus, S, _, _ = small_footing
    noisy = S[:, :3] + 1e-3
    v = constraint_violation(problem, noisy, mus[:3])
    expect = np.abs(problem.B @ noisy - problem.rhs(mus[:3])).max(axis=0)
    assert np.allclose(v, expect)


def test_weighted_pod_option_keeps_kernel(small_footing):
    problem, _, S, _, _ = small_footing
    H = homogeneous_snapshots(problem, S)
    basis = compute_pod(H, 4, gramian=problem.D, weighted=True)
    assert np.abs(problem.B @ basis.V).max() <= 1e-9 * np.abs(basis.V).max()
