import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chebwave.bank import (
    ContractError,
    bank_backward,
    bank_from_json,
    build_bank,
    forward_transform,
    frame_function,
    frame_identity_error,
    frame_operators,
    inverse_transform,
    operator_backward,
    spectral_frame_error,
)
from chebwave.graph import Spectrum, generate_graph, spectrum

from conftest import central_diff, connected_er, max_rel_error

P3 = spectrum(generate_graph("path", n=3))
K2 = spectrum(generate_graph("path", n=2))


def test_p3_tight_example():
    bank = build_bank([1.0], [1.0], [1.0], P3, tight=True)
    # eigenvalues 0, 1, 2
    np.testing.assert_allclose(bank.h_vals, [1.0, 0.5 / np.sqrt(1.25), 0.0], atol=1e-12)
    np.testing.assert_allclose(bank.g_vals[0], [0.0, 1 / np.sqrt(1.25), 0.0], atol=1e-12)
    assert bank.h_vals[1] == pytest.approx(0.4472135955, abs=1e-9)
    assert bank.g_vals[0, 1] == pytest.approx(0.894427191, abs=1e-9)
    assert bank.degenerate_modes == (2,)
    np.testing.assert_allclose(frame_function(bank), [1.0, 1.0, 0.0], atol=1e-12)


def test_untight_passes_raw_values():
    bank = build_bank([1.0], [1.0], [1.0], P3, tight=False)
    np.testing.assert_allclose(bank.h_vals, [1.0, 0.5, 0.0], atol=1e-12)
    np.testing.assert_allclose(bank.g_vals[0], [0.0, 1.0, 0.0], atol=1e-12)
    assert bank.degenerate_modes == ()


def test_computer_preset_accepted():
    g = connected_er(20, 0.3, 0)
    bank = build_bank(np.ones(7), np.ones(7), [10.0, 10.0, 10.0], spectrum(g), tight=True)
    assert bank.rho == 7 and bank.J == 3


@pytest.mark.parametrize("kwargs", [
    dict(a=[1.0], b=[1.0], scales=[0.0]),
    dict(a=[1.0], b=[1.0], scales=[-1.0]),
    dict(a=[1.0, 2.0], b=[1.0], scales=[1.0]),
])
def test_bad_bank_inputs(kwargs):
    with pytest.raises(ValueError):
        build_bank(spec=P3, **kwargs)


def test_zero_coefficients():
    bank = build_bank([0.0, 0.0], [0.0, 0.0], [1.0], P3, tight=False)
    assert np.all(frame_function(bank) == 0)
    ops = frame_operators(bank, P3)
    assert np.all(ops.phi == 0) and np.all(ops.psi == 0)


def test_k2_operators():
    ops = frame_operators(build_bank([1.0], [1.0], [1.0], K2, tight=False), K2)
    np.testing.assert_allclose(ops.phi, np.full((2, 2), 0.5), atol=1e-15)
    np.testing.assert_allclose(ops.psi[0], 0.0, atol=1e-15)


def test_threshold_zeroes_small_entries():
    g = connected_er(12, 0.3, 4)
    s = spectrum(g)
    bank = build_bank([1.0, 0.5], [1.0, -0.3], [0.5, 2.0], s, tight=True)
    ops = frame_operators(bank, s, threshold=0.1)
    for op in ops.heads():
        assert np.all((op == 0) | (np.abs(op) >= 0.1))
    assert spectral_frame_error(bank, s) < 1e-8
    # thresholding breaks exact tightness
    assert frame_identity_error(ops) > 1e-6


def test_forward_zero_and_order():
    ops = frame_operators(build_bank([1.0], [1.0], [0.5, 2.0], P3), P3)
    assert np.all(forward_transform(ops, np.zeros((3, 2))) == 0)
    X = np.arange(6.0).reshape(3, 2)
    C = forward_transform(ops, X)
    np.testing.assert_allclose(C[:3], ops.phi @ X)
    np.testing.assert_allclose(C[6:], ops.psi[1] @ X)
    with pytest.raises(ValueError):
        forward_transform(ops, np.zeros((4, 2)))


def test_p3_degenerate_mode_annihilated():
    ops = frame_operators(build_bank([1.0], [1.0], [1.0], P3, tight=True), P3)
    u2 = P3.eigenvectors[:, [2]]
    np.testing.assert_allclose(forward_transform(ops, u2), 0.0, atol=1e-12)
    X = np.array([[1.0], [-2.0], [0.5]])
    expected = X - u2 @ (u2.T @ X)
    np.testing.assert_allclose(inverse_transform(ops, forward_transform(ops, X)), expected, atol=1e-12)


def test_inverse_requires_tight():
    ops = frame_operators(build_bank([1.0], [1.0], [1.0], P3, tight=False), P3)
    with pytest.raises(ContractError):
        inverse_transform(ops, np.zeros((6, 1)))
    tight_ops = frame_operators(build_bank([1.0], [1.0], [1.0], P3, tight=True), P3)
    assert np.all(inverse_transform(tight_ops, np.zeros((6, 2))) == 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_admissibility_and_dc_anchors(rho, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=rho), rng.normal(size=rho)
    spec = Spectrum(np.array([0.0, 0.7, 2.0]), np.eye(3))
    bank = build_bank(a, b, rng.uniform(0.1, 5, size=3), spec, tight=False)
    assert np.all(np.abs(bank.g_vals[:, 0]) <= 1e-12)
    assert abs(bank.h_vals[0] - b.sum()) <= 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_tight_frame_identity(seed):
    rng = np.random.default_rng(seed)
    g = connected_er(int(rng.integers(6, 40)), 0.2, seed)
    s = spectrum(g)
    rho, J = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    bank = build_bank(rng.normal(size=rho), rng.normal(size=rho), rng.uniform(0.2, 3, J), s, tight=True)
    ops = frame_operators(bank, s)
    for op in ops.heads():
        assert np.abs(op - op.T).max() < 1e-9
    assert frame_identity_error(ops) < 1e-8
    nondeg = [i for i in range(g.n) if i not in bank.degenerate_modes]
    np.testing.assert_allclose(bank.frame_vals[nondeg], 1.0, atol=1e-9)
    assert np.all(bank.h_vals[list(bank.degenerate_modes)] == 0)


def test_truncation_and_scale_semantics():
    g = connected_er(30, 0.2, 11)
    s = spectrum(g)
    bank = build_bank([1.0, -0.4], [1.0, 0.2], [0.5, 3.0], s, tight=False)
    lam = s.eigenvalues
    assert np.all(bank.g_vals[1][lam > 2 / 3.0] == 0.0)
    assert np.all(bank.support[0])
    inside = (lam > 0) & (lam < 2 / 3.0 - 1e-6)
    assert np.all(bank.g_vals[1][inside] != 0.0)


def test_eigenbasis_invariance_c4():
    c4 = generate_graph("cycle", n=4)
    s = spectrum(c4)
    lam, U = s.eigenvalues, s.eigenvectors.copy()
    idx = np.flatnonzero(np.isclose(lam, 1.0))
    assert idx.size == 2
    theta = 0.731
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    U[:, idx] = U[:, idx] @ R
    rotated = Spectrum(lam, U)
    args = ([1.0, 0.3], [0.8, -0.5], [0.7, 1.5])
    ops_a = frame_operators(build_bank(*args, s, tight=True), s)
    ops_b = frame_operators(build_bank(*args, rotated, tight=True), rotated)
    for A, B in zip(ops_a.heads(), ops_b.heads()):
        assert np.abs(A - B).max() < 1e-8


def test_json_roundtrip():
    bank = build_bank([1.0, 2.0], [0.5, 0.1], [0.5, 4.0], P3, tight=True, threshold=0.1)
    text = json.dumps(bank.to_json())
    again = bank_from_json(text, P3)
    np.testing.assert_array_equal(again.h_vals, bank.h_vals)
    assert again.threshold == 0.1
    assert set(json.loads(text)) == {"rho", "J", "a", "b", "scales", "tight", "threshold"}


@pytest.mark.parametrize("tight", [False, True])
def test_bank_backward_matches_finite_differences(tight):
    rng = np.random.default_rng(3)
    g = connected_er(9, 0.35, 2)
    s = spectrum(g)
    rho, J = 3, 2
    a, b, sc = rng.normal(size=rho), rng.normal(size=rho), np.array([0.6, 1.7])
    wh, wg = rng.normal(size=g.n), rng.normal(size=(J, g.n))

    def obj(a_, b_, s_):
        bk = build_bank(a_, b_, s_, s, tight=tight)
        return float(wh @ bk.h_vals + np.sum(wg * bk.g_vals))

    d_a, d_b, d_s = bank_backward(build_bank(a, b, sc, s, tight=tight), wh, wg)
    assert max_rel_error(d_a, central_diff(lambda x: obj(x, b, sc), a)) < 1e-6
    assert max_rel_error(d_b, central_diff(lambda x: obj(a, x, sc), b)) < 1e-6
    assert max_rel_error(d_s, central_diff(lambda x: obj(a, b, x), sc)) < 1e-6


def test_operator_backward_matches_finite_differences():
    rng = np.random.default_rng(5)
    g = connected_er(7, 0.4, 5)
    s = spectrum(g)
    bank = build_bank([1.0, 0.3], [0.7, -0.2], [0.8], s, tight=False)
    Wt = rng.normal(size=(2, g.n, g.n))

    def obj(filters):
        return float(sum(np.sum(w * s.operator(f)) for w, f in zip(Wt, filters)))

    d_h, d_g = operator_backward(frame_operators(bank, s), Wt)
    num = central_diff(obj, bank.filters())
    np.testing.assert_allclose(np.vstack([d_h, d_g]), num, atol=1e-7)
