import numpy as np
import pytest

from kolmo.conditions import (
    BoundaryVerdict,
    check_all,
    fichera_classify,
    gramian_positivity,
    hormander_bracket_rank,
    invariant_subspace_check,
    kalman_rank,
    random_broken_spec,
    random_valid_spec,
)
from kolmo.errors import DimensionMismatch, ZeroNormal
from kolmo.operator import make_operator


def test_k2_all_conditions(K2):
    rep = check_all(K2)
    assert rep.c1 and rep.c2 and rep.c3 and rep.c4 and rep.c5
    assert rep.consistent and rep.hypoelliptic
    assert rep.kalman_rank == 2 and rep.generated_dimension == 3
    assert rep.c3_min_eig == pytest.approx(np.linalg.eigvalsh([[1, -0.5], [-0.5, 1 / 3]])[0], rel=1e-12)


def test_zero_diffusion_fails_everything():
    rep = check_all(make_operator(np.zeros((2, 2)), [[0, 0], [1, 0]]))
    assert not (rep.c1 or rep.c2 or rep.c3 or rep.c4 or rep.c5)
    assert rep.consistent and rep.generated_dimension == 1


def test_invariance_uses_transposed_drift():
    # x1' = x2 only: Ker A = span(e2) is fixed by B^T but not by B
    A = np.diag([1.0, 0.0])
    B = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert not kalman_rank(np.sqrt(2) * np.array([[1.0], [0.0]]), B)[1]
    assert not invariant_subspace_check(A, B)
    assert invariant_subspace_check(A, B.T)


def test_kalman_rank_values():
    sigma = np.array([[1.0], [0.0], [0.0]])
    assert kalman_rank(sigma, np.eye(3, k=-1)) == (3, True)
    B = np.eye(3, k=-1)
    B[2, 1] = 0.0
    assert kalman_rank(sigma, B) == (2, False)
    with pytest.raises(DimensionMismatch):
        kalman_rank(np.ones((2, 1)), np.eye(3))


def test_bracket_generations():
    holds, dim = hormander_bracket_rank(np.array([[1.0], [0.0], [0.0]]), np.eye(3, k=-1))
    assert holds and dim == 4


def test_gramian_positivity_degenerate():
    spec = make_operator(np.diag([1.0, 0.0, 0.0]), np.eye(3, k=-1) * np.array([1.0, 0.0, 0.0])[None, :])
    holds, mn = gramian_positivity(spec)
    assert not holds and abs(mn) < 1e-12


def test_conditions_invariant_under_orthogonal_change(rng):
    spec = random_valid_spec(rng, max_N=5)
    P, _ = np.linalg.qr(rng.standard_normal((spec.N, spec.N)))
    rot = make_operator(P @ spec.A @ P.T, P @ spec.B @ P.T, P @ spec.sigma)
    a, b = check_all(spec), check_all(rot)
    assert (a.c1, a.c2, a.c3, a.c4) == (b.c1, b.c2, b.c3, b.c4) == (True,) * 4
    assert not b.c5  # block form is basis dependent


@pytest.mark.parametrize("seed", range(5))
def test_fuzz_small_sample(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        ok = check_all(random_valid_spec(rng))
        bad = check_all(random_broken_spec(rng))
        assert ok.consistent and ok.hypoelliptic
        assert bad.consistent and not bad.hypoelliptic


@pytest.mark.parametrize(
    "x, nu, verdict",
    [
        ([1.0, 0.0], [1.0, 0.0, 0.0], BoundaryVerdict.BARRIER),
        ([1.0, 0.0], [0.0, 1.0, 0.0], BoundaryVerdict.BARRIER),
        ([1.0, 0.0], [0.0, -1.0, 0.0], BoundaryVerdict.NON_REGULAR),
        ([0.0, 0.0], [0.0, 0.0, -1.0], BoundaryVerdict.BARRIER),
        ([0.0, 0.0], [0.0, 0.0, 1.0], BoundaryVerdict.NON_REGULAR),
        ([0.0, 0.0], [0.0, 1.0, 0.0], BoundaryVerdict.UNDETERMINED),
    ],
)
def test_fichera_k2(K2, x, nu, verdict):
    # Y(z) = (Bx, -1); for K2 at x = (1, 0) the drift points along +x2
    assert fichera_classify(K2, (np.array(x), 0.0), nu) is verdict


def test_fichera_zero_normal(K2):
    with pytest.raises(ZeroNormal):
        fichera_classify(K2, (np.zeros(2), 0.0), np.zeros(3))
