import math

import numpy as np
import pytest
from scipy.linalg import expm

from badscan.ssm import DiscreteSsm, SsmParams, apply_kernel, discretize_zoh, kernel, scan_recurrent


def scalar(e_bar=0.5, f_bar=1.0, g=1.0):
    return DiscreteSsm(np.array([[e_bar]]), np.array([[f_bar]]), np.array([[g]]))


def test_zoh_scalar_ln2():
    d = discretize_zoh(SsmParams(E=[[-1.0]], F=[1.0], G=[1.0], delta=math.log(2)))
    assert d.E_bar[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert d.F_bar[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_zoh_zero_limit():
    d = discretize_zoh(SsmParams(E=np.diag([0.0, 0.0]), F=[1.0, 2.0], G=[1.0, 1.0], delta=0.3))
    assert np.allclose(d.E_bar, np.eye(2))
    assert np.allclose(d.F_bar[:, 0], [0.3, 0.6])


def test_zoh_dense_matches_diagonal_path(rng):
    E = np.diag(-rng.uniform(0.1, 2.0, 4))
    F, G = rng.normal(size=4), rng.normal(size=4)
    diag = discretize_zoh(SsmParams(E, F, G, 0.7))
    # tiny off-diagonal entry forces the augmented-matrix branch
    E2 = E.copy()
    E2[0, 1] = 1e-300
    dense = discretize_zoh(SsmParams(E2, F, G, 0.7))
    assert np.allclose(diag.E_bar, dense.E_bar, rtol=1e-12)
    assert np.allclose(diag.F_bar, dense.F_bar, rtol=1e-12)


def test_zoh_dense_against_inverse_formula(rng):
    m = 3
    E = rng.normal(size=(m, m)) - 3 * np.eye(m)
    F = rng.normal(size=m)
    dt = 0.4
    d = discretize_zoh(SsmParams(E, F, np.ones(m), dt))
    oracle = np.linalg.solve(dt * E, (expm(dt * E) - np.eye(m)) @ (dt * F))
    assert np.allclose(d.F_bar[:, 0], oracle, rtol=1e-10)


def test_zoh_singular_dense_ok():
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    d = discretize_zoh(SsmParams(E, [0.0, 1.0], [1.0, 0.0], 2.0))
    assert np.allclose(d.F_bar[:, 0], [2.0, 2.0])


def test_stable_diagonal_contracts(rng):
    d = discretize_zoh(SsmParams(np.diag(-rng.uniform(0.01, 5, 6)), np.ones(6), np.ones(6), 0.1))
    assert np.all(np.abs(np.diag(d.E_bar)) < 1)


def test_params_validation():
    with pytest.raises(ValueError):
        SsmParams(E=[[-1.0]], F=[1.0], G=[1.0], delta=0.0)
    with pytest.raises(ValueError):
        SsmParams(E=np.zeros((2, 3)), F=[1.0, 1.0], G=[1.0, 1.0], delta=1.0)


def test_recurrence_unrolled():
    assert scan_recurrent(scalar(), [1, 0, 0]).tolist() == [1.0, 0.5, 0.25]
    assert kernel(scalar(), 3).tolist() == [1.0, 0.5, 0.25]


def test_recurrence_zero_and_homogeneous(rng):
    d = discretize_zoh(SsmParams(np.diag([-0.5, -1.0]), [1, 1], [1, -1], 0.5))
    assert not scan_recurrent(d, np.zeros(5)).any()
    x = rng.normal(size=9)
    assert np.allclose(scan_recurrent(d, 2 * x), 2 * scan_recurrent(d, x))


def test_kernel_edge_cases():
    d = scalar(e_bar=0.0, f_bar=2.0, g=3.0)
    assert kernel(d, 1).tolist() == [6.0]
    assert kernel(d, 4).tolist() == [6.0, 0.0, 0.0, 0.0]


def test_apply_kernel_identities(rng):
    v = rng.normal(size=6)
    impulse = np.zeros(6)
    impulse[0] = 1.0
    assert np.allclose(apply_kernel(v, impulse), v)
    x = rng.normal(size=6)
    assert np.allclose(apply_kernel(impulse, x), x)
    with pytest.raises(ValueError):
        apply_kernel(v, x[:5])


def test_dual_path(rng):
    for _ in range(20):
        m = int(rng.integers(1, 9))
        L = int(rng.integers(1, 65))
        p = SsmParams(np.diag(-rng.uniform(0.05, 3, m)), rng.normal(size=m), rng.normal(size=m),
                      float(rng.uniform(0.01, 1.0)))
        d = discretize_zoh(p)
        x = rng.normal(size=L)
        rec = scan_recurrent(d, x)
        conv = apply_kernel(kernel(d, L), x)
        assert np.max(np.abs(rec - conv)) <= 1e-9 * max(1.0, np.max(np.abs(rec)))
