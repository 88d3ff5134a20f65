import math

import numpy as np
import pytest
from scipy import stats

from uwbtrack.core import (
    ConfigError,
    SimConfig,
    as_rotation,
    as_sym_matrix,
    chi2_quantile,
    load_config,
    make_transition_matrices,
    parse_config_text,
    rng_stream,
    rotation_z,
)


def test_transition_unit_step():
    A, B = make_transition_matrices(1.0)
    np.testing.assert_array_equal(A[:3, 3:], np.eye(3))
    np.testing.assert_array_equal(B, np.vstack([0.5 * np.eye(3), np.eye(3)]))


def test_transition_dt_01():
    _, B = make_transition_matrices(0.1)
    np.testing.assert_allclose(B[:3], 0.005 * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(B[3:], 0.1 * np.eye(3), atol=1e-15)


def test_transition_semigroup_zero_input():
    x = np.array([1.0, -2.0, 0.5, 0.3, 0.7, -1.1])
    A1, _ = make_transition_matrices(0.1)
    A2, _ = make_transition_matrices(0.2)
    np.testing.assert_allclose(A1 @ (A1 @ x), A2 @ x, atol=1e-14)


def test_transition_block_structure():
    for dt in (0.01, 0.05, 0.3, 2.0):
        A, B = make_transition_matrices(dt)
        expect = np.block([[np.eye(3), dt * np.eye(3)], [np.zeros((3, 3)), np.eye(3)]])
        np.testing.assert_array_equal(A, expect)
        np.testing.assert_array_equal(B, np.vstack([0.5 * dt * dt * np.eye(3), dt * np.eye(3)]))


def test_transition_rejects_bad_dt():
    with pytest.raises(ValueError):
        make_transition_matrices(0.0)


def test_chi2_spot_values():
    assert abs(chi2_quantile(3, 0.95) - 7.81473) <= 1e-4
    assert abs(chi2_quantile(1, 0.5) - 0.45494) <= 1e-4


def test_chi2_matches_scipy_and_is_increasing():
    for dof in range(1, 11):
        probs = np.linspace(0.01, 0.99, 25)
        vals = [chi2_quantile(dof, p) for p in probs]
        assert np.all(np.diff(vals) > 0)
        np.testing.assert_allclose(vals, stats.chi2.ppf(probs, dof), rtol=1e-9)


def test_chi2_small_prob_tends_to_zero():
    assert chi2_quantile(3, 1e-12) < 1e-6


@pytest.mark.parametrize("dof,prob", [(0, 0.5), (11, 0.5), (2.5, 0.5), (3, 0.0), (3, 1.0)])
def test_chi2_domain(dof, prob):
    with pytest.raises(ValueError):
        chi2_quantile(dof, prob)


def test_rng_stream_determinism_and_separation():
    a = rng_stream(42, 0).standard_normal(100)
    b = rng_stream(42, 0).standard_normal(100)
    np.testing.assert_array_equal(a, b)
    assert rng_stream(42, 1).standard_normal() != a[0]


def test_rng_stream_mean():
    x = rng_stream(42, 0).standard_normal(10**6)
    assert abs(x.mean()) < 0.01


def test_sym_matrix_validation():
    as_sym_matrix(np.eye(3))
    with pytest.raises(ValueError):
        as_sym_matrix(np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(ValueError):
        as_sym_matrix(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        as_sym_matrix(np.eye(3), dim=2)


def test_rotation_validation():
    as_rotation(rotation_z(0.3))
    with pytest.raises(ValueError):
        as_rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        as_rotation(2 * np.eye(3))


def test_rotation_z_points_sensor_x_along_heading():
    yaw = 0.7
    v = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    np.testing.assert_allclose(rotation_z(yaw) @ v, [1, 0, 0], atol=1e-15)


def test_config_parse_and_roundtrip(tmp_path):
    cfg = parse_config_text("# comment\nsigma_r = 0.1\nwindow_size = 12  # trailing\n\ncontrollers = clf_only\n")
    assert cfg.sigma_r == 0.1 and cfg.window_size == 12 and cfg.controller_list == ("clf_only",)
    path = tmp_path / "c.cfg"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg


@pytest.mark.parametrize("text,line,key", [
    ("sigma_r = 0.1\nbogus = 3\n", 2, "bogus"),
    ("sigma_r = abc\n", 1, "sigma_r"),
    ("p_out = 0.1\np_out = 0.2\n", 2, "p_out"),
    ("d_min = 5\n", 1, "d_star"),
    ("window_size = 1\n", 1, "window_size"),
    ("just a line\n", 1, None),
    ("controllers = clf_only,nope\n", 1, "controllers"),
])
def test_config_errors_locate_problem(text, line, key):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    if key == "d_star":
        # cross-field check reports the key it is attached to
        assert exc.value.key == "d_star"
    else:
        assert exc.value.line == line
        assert exc.value.key == key


def test_config_overrides():
    cfg = SimConfig().with_overrides({"p_out": "0.3", "horizon": "10"})
    assert cfg.p_out == 0.3 and cfg.horizon == 10
    with pytest.raises(ConfigError):
        SimConfig().with_overrides({"nope": "1"})
