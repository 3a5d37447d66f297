import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings, strategies as st

from conservative_rom.pod import compute_pod, project, reconstruct

from conftest import make_tree


def test_repeated_snapshot():
    v = np.array([1.0, -2.0, 2.0])
    basis = compute_pod(np.column_stack([v, v, v]), 1)
    assert np.allclose(np.abs(basis.V[:, 0]), np.abs(v) / 3.0)
    assert basis.projection_error(np.column_stack([v, v])) < 1e-28


def test_three_orthogonal_snapshots():
    Xi = np.zeros((5, 3))
    Xi[0, 0], Xi[2, 1], Xi[4, 2] = 3.0, 2.0, 1.0
    basis = compute_pod(Xi, 2)
    assert np.allclose(basis.singular_values, [3.0, 2.0, 1.0])
    assert basis.projection_error(Xi) == pytest.approx(1.0 / 3.0)


def test_full_rank_basis_is_exact(rng):
    Xi = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 12))
    basis = compute_pod(Xi, 4)
    assert basis.projection_error(Xi) < 1e-24 * np.sum(Xi**2)
    with pytest.raises(ValueError):
        compute_pod(Xi, 5)
    with pytest.raises(ValueError):
        compute_pod(Xi, 0)


def test_project_reconstruct(rng):
    basis = compute_pod(rng.standard_normal((40, 10)), 4)
    V = basis.V
    c = rng.standard_normal(4)
    assert np.allclose(project(basis, reconstruct(basis, c)), c, atol=1e-12)
    w = rng.standard_normal(40)
    w_perp = w - V @ (V.T @ w)
    assert np.abs(reconstruct(basis, project(basis, w_perp))).max() < 1e-12
    res = w - V @ project(basis, w)
    assert np.abs(V.T @ res).max() < 1e-12
    assert np.allclose(V.T @ V, np.eye(4), atol=1e-12)


def test_projection_error_decreases_with_n(rng):
    Xi = rng.standard_normal((50, 20)) * np.logspace(0, -3, 20)
    errors = [compute_pod(Xi, n).projection_error(Xi) for n in range(1, 21)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(errors, errors[1:]))
    # the discarded energy equals the tail of the singular values
    s = compute_pod(Xi, 1).singular_values
    for n, e in zip(range(1, 21), errors):
        assert e == pytest.approx(np.sum(s[n:] ** 2) / 20, rel=1e-8, abs=1e-26)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_pod_beats_random_frames(seed, n):
    rng = np.random.default_rng(seed)
    rank = n + 2
    Xi = rng.standard_normal((25, rank)) @ rng.standard_normal((rank, 15))
    best = compute_pod(Xi, n).projection_error(Xi)
    for _ in range(100):
        Q, _ = np.linalg.qr(rng.standard_normal((25, n)))
        err = np.mean(np.sum((Xi - Q @ (Q.T @ Xi)) ** 2, axis=0))
        assert best <= err * (1 + 1e-12)


def test_kernel_snapshots_give_kernel_basis(rng):
    disc, tree = make_tree(8, roots=2)
    H = tree.S0(rng.standard_normal((disc.B.shape[1], 20)))
    basis = compute_pod(H, 8)
    assert np.abs(disc.B @ basis.V).max() <= 1e-11 * np.abs(H).max()


def test_latent_gramian(rng):
    n = 30
    R = sps.random(n, n, density=0.2, random_state=1)
    D = (R @ R.T + sps.eye(n)).tocsr()
    Xi = rng.standard_normal((n, 8))
    plain = compute_pod(Xi, 3, gramian=D)
    assert np.allclose(plain.latent_gramian, plain.V.T @ (D @ plain.V))
    assert np.allclose(compute_pod(Xi, 3).latent_gramian, np.eye(3))

    weighted = compute_pod(Xi, 3, gramian=D, weighted=True)
    assert np.allclose(weighted.latent_gramian, np.eye(3), atol=1e-10)
    # D-orthogonal projection: the residual is D-orthogonal to the basis
    res = Xi - weighted.reconstruct(weighted.project(Xi))
    assert np.abs(weighted.V.T @ (D @ res)).max() < 1e-10
    with pytest.raises(ValueError):
        compute_pod(Xi, 3, weighted=True)


def test_weighted_with_identity_matches_plain(rng):
    Xi = rng.standard_normal((20, 6))
    a = compute_pod(Xi, 3)
    b = compute_pod(Xi, 3, gramian=sps.eye(20), weighted=True)
    assert np.allclose(np.abs(a.V.T @ b.V), np.eye(3), atol=1e-8)
