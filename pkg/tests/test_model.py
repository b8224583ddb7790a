import numpy as np
import pytest

from satmpc import (DisturbanceBounds, benchmark_model, disturbance_sequence,
                    model_from_config, model_from_descriptor, step,
                    step_disturbed)
from satmpc.model import fd_jacobians, jacobians


def test_benchmark_step_known_values(model):
    # x1+ = x1 + 0.1 x2 + 0.1 (0.5 + 0.5 x1) u
    # x2+ = x2 + 0.1 x1 + 0.1 (0.5 - 2.0 x2) u
    np.testing.assert_allclose(step(model, [0, 0], [0.5]), [0.025, 0.025])
    np.testing.assert_allclose(step(model, [0, 0], [-0.5]), [-0.025, -0.025])
    np.testing.assert_allclose(step(model, [1, -1], [0.0]), [0.9, -0.9])
    np.testing.assert_allclose(step(model, [2, 2], [0.0]), [2.2, 2.2])
    # x=(1,1), u=0.5: x1+ = 1 + 0.1 + 0.1*1.0*0.5 = 1.15
    #                 x2+ = 1 + 0.1 + 0.1*(-1.5)*0.5 = 1.025
    np.testing.assert_allclose(step(model, [1, 1], [0.5]), [1.15, 1.025])


def test_step_rejects_wrong_shapes(model):
    with pytest.raises(ValueError):
        step(model, [1.0], [0.0])
    with pytest.raises(ValueError):
        step(model, [0.0, 0.0], [0.0, 0.0])


def test_jacobians_match_finite_differences(model):
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-0.5, 0.5, 1)
        A, B = jacobians(model, x, u)
        A_fd, B_fd = fd_jacobians(model, x, u)
        np.testing.assert_allclose(A, A_fd, atol=1e-6)
        np.testing.assert_allclose(B, B_fd, atol=1e-6)


def test_second_order_matches_jacobian_differences(model):
    rng = np.random.default_rng(12)
    h = 1e-6
    for _ in range(20):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-0.5, 0.5, 1)
        fxx, fxu, fuu = model.second_order(x, u)
        for a in range(2):
            xp = x.copy(); xp[a] += h
            xm = x.copy(); xm[a] -= h
            dA = (np.asarray(model.jac_x(xp, u)) - np.asarray(model.jac_x(xm, u))) / (2 * h)
            np.testing.assert_allclose(fxx[:, :, a], dA, atol=1e-5)
            dB = (np.asarray(model.jac_u(xp, u)) - np.asarray(model.jac_u(xm, u))) / (2 * h)
            np.testing.assert_allclose(fxu[:, a, :], dB, atol=1e-5)
        up = u + h
        um = u - h
        dBu = (np.asarray(model.jac_u(x, up)) - np.asarray(model.jac_u(x, um))) / (2 * h)
        np.testing.assert_allclose(fuu[:, 0, :], dBu, atol=1e-5)


def test_benchmark_cross_derivatives_exact(model):
    # d2 x1+ / dx1 du = 0.05 and d2 x2+ / dx2 du = -0.2, constants everywhere
    _, fxu, fuu = model.second_order(np.array([0.3, -0.7]), np.array([0.2]))
    assert fxu[0, 0, 0] == pytest.approx(0.05)
    assert fxu[0, 1, 0] == 0.0
    assert fxu[1, 0, 0] == 0.0
    assert fxu[1, 1, 0] == pytest.approx(-0.2)
    np.testing.assert_allclose(fuu, 0.0)


def test_step_map_broadcasts_over_batches(model):
    rng = np.random.default_rng(13)
    X = rng.uniform(-2, 2, (40, 2))
    U = rng.uniform(-0.5, 0.5, (40, 1))
    batched = np.asarray(model.step_map(X, U))
    assert batched.shape == (40, 2)
    for b in range(40):
        np.testing.assert_allclose(batched[b], step(model, X[b], U[b]), rtol=0,
                                   atol=1e-14)


def test_disturbance_sequence_determinism_and_bounds():
    bounds = DisturbanceBounds(np.array([-0.01, -0.01]), np.array([0.01, 0.01]))
    seq1 = disturbance_sequence(bounds, np.random.default_rng(5), 50)
    seq2 = disturbance_sequence(bounds, np.random.default_rng(5), 50)
    assert seq1.shape == (50, 2)
    np.testing.assert_array_equal(seq1, seq2)
    assert np.all(seq1 >= -0.01) and np.all(seq1 <= 0.01)
    const = disturbance_sequence(bounds, np.random.default_rng(5), 50, constant=True)
    assert np.all(const == const[0])


def test_disturbance_bounds_validation():
    with pytest.raises(ValueError):
        DisturbanceBounds(np.array([0.01, 0.01]), np.array([-0.01, -0.01]))


def test_step_disturbed_adds_offset(model):
    x = np.array([0.5, -0.5])
    u = np.array([0.1])
    w = np.array([0.003, -0.002])
    np.testing.assert_allclose(step_disturbed(model, x, u, w),
                               step(model, x, u) + w)


def test_descriptor_round_trip(model):
    rebuilt = model_from_descriptor(model.descriptor)
    rng = np.random.default_rng(14)
    for _ in range(10):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-0.5, 0.5, 1)
        np.testing.assert_array_equal(step(rebuilt, x, u), step(model, x, u))


def test_poly_config_builds_matching_model(model):
    # the benchmark written out as an explicit coefficient table
    cfg = {
        "n": 2, "m": 1, "name": "bilinear",
        "rows": [
            [{"c": 1.0, "x": [1, 0], "u": [0]},
             {"c": 0.1, "x": [0, 1], "u": [0]},
             {"c": 0.05, "x": [0, 0], "u": [1]},
             {"c": 0.05, "x": [1, 0], "u": [1]}],
            [{"c": 0.1, "x": [1, 0], "u": [0]},
             {"c": 1.0, "x": [0, 1], "u": [0]},
             {"c": 0.05, "x": [0, 0], "u": [1]},
             {"c": -0.2, "x": [0, 1], "u": [1]}],
        ],
    }
    poly = model_from_config(cfg)
    rng = np.random.default_rng(15)
    for _ in range(20):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-0.5, 0.5, 1)
        np.testing.assert_allclose(step(poly, x, u), step(model, x, u),
                                   rtol=0, atol=1e-15)
        np.testing.assert_allclose(poly.jac_x(x, u), model.jac_x(x, u),
                                   rtol=0, atol=1e-15)


def test_poly_config_validation():
    with pytest.raises(ValueError):
        model_from_config({"n": 2, "m": 1, "rows": [[]]})  # one row short
    with pytest.raises(ValueError):
        model_from_config({"n": 2, "m": 1,
                           "rows": [[{"c": 1.0, "x": [1], "u": [0]}], []]})


def test_unknown_descriptor_rejected():
    with pytest.raises(ValueError):
        model_from_descriptor({"kind": "nope"})
