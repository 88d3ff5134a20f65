import math

import numpy as np
import pytest

from oracles import enumerate_qp
from uwbtrack.control import (
    clf_value,
    compute_control,
    confidence_radius,
    deadzone_errors,
    hocbf_halfspaces,
    reference_accel,
    relative_kinematics,
    safety_envelope,
)
from uwbtrack.core import SimConfig, chi2_quantile
from uwbtrack.dynamics import UavState
from uwbtrack.estimation import GaussianBelief

CFG = SimConfig()
CHI = chi2_quantile(3, 0.95)


def _belief(p, v=(0, 0, 0), cov=1e-10):
    return GaussianBelief(np.concatenate([p, v]).astype(float), np.eye(6) * cov)


def _uav(p=(0, 0, 0), v=(0, 0, 0)):
    return UavState(np.concatenate([p, v]).astype(float))


def test_confidence_radius_examples():
    assert confidence_radius(np.zeros((3, 3)), 0.05) == 0.0
    for s in (0.01, 0.3, 2.0):
        assert abs(confidence_radius(s * s * np.eye(3), 0.05) - 2.7955 * s) <= 1e-3 * s
    assert confidence_radius(np.diag([1.0, 4.0, 0.25]), 0.05) == pytest.approx(2 * math.sqrt(CHI), abs=1e-4)


def test_relative_kinematics_example():
    kin = relative_kinematics(_belief([4, 0, 0], [1, 2, 0]), _uav())
    assert kin.d_hat == 4.0 and kin.v_r_hat == 1.0
    np.testing.assert_array_equal(kin.n_hat, [1, 0, 0])
    np.testing.assert_array_equal(kin.v_tau_hat, [0, 2, 0])
    kin = relative_kinematics(_belief([4, 1, 0], [1, 2, 3]), _uav(v=(1, 2, 3)))
    assert kin.v_r_hat == 0.0 and np.all(kin.v_tau_hat == 0)


def test_tangential_velocity_orthogonal():
    rng = np.random.default_rng(0)
    for _ in range(500):
        kin = relative_kinematics(_belief(rng.standard_normal(3) * 3, rng.standard_normal(3)),
                                  _uav(rng.standard_normal(3), rng.standard_normal(3)))
        assert abs(kin.v_tau_hat @ kin.n_hat) <= 1e-12


def test_deadzone():
    assert deadzone_errors(3.2, 0.0, 0.5, 3.0) == (0.0, 0.0)
    assert deadzone_errors(3.0 + 0.5 + 0.5, 0.0, 0.5, 3.0)[0] == pytest.approx(0.5)
    for x in (-2.0, -0.7, 0.1, 0.9, 3.0):
        a = deadzone_errors(3.0 + x, 0.0, 0.4, 3.0)[0]
        b = deadzone_errors(3.0 - x, 0.0, 0.4, 3.0)[0]
        assert a == pytest.approx(-b, abs=1e-15)


def test_clf_value_examples():
    cfg = CFG.replace(k_r=2.0)
    kin = relative_kinematics(_belief([3, 0, 0]), _uav())
    assert clf_value(kin, (0.0, 0.0), cfg) == 0.0
    assert clf_value(kin, (1.0, 0.0), cfg) == pytest.approx(1.0)
    a = relative_kinematics(_belief([3, 0, 0], [0, 1, 0]), _uav())
    # rotate v_tau about n within the horizontal plane (vertical velocity has its own term)
    c = relative_kinematics(_belief([3, 0, 0], [0, -1, 0]), _uav())
    assert clf_value(a, (0, 0), cfg) == pytest.approx(clf_value(c, (0, 0), cfg))


def test_reference_accel_examples():
    cfg = CFG.replace(k_r=1.0, k_z=1.0)
    kin = relative_kinematics(_belief([3, 0, 0]), _uav())
    np.testing.assert_array_equal(reference_accel(kin, (0.0, 0.0), cfg), 0)
    np.testing.assert_allclose(reference_accel(kin, (1.0, 0.0), cfg), [1, 0, 0])
    np.testing.assert_allclose(reference_accel(kin, (0.0, 1.0), cfg), [0, 0, -1])


def test_deadzone_inactivity_gives_zero_reference():
    belief = _belief([3.1, 0, 0.05], cov=0.01)
    kin = relative_kinematics(belief, _uav())
    R = confidence_radius(belief.position_cov, CFG.alpha_risk)
    assert abs(kin.d_hat - CFG.d_star) <= R and abs(kin.e_z_hat) <= R
    errors = deadzone_errors(kin.d_hat, kin.e_z_hat, R, CFG.d_star)
    np.testing.assert_array_equal(reference_accel(kin, errors, CFG), 0)


def test_safety_envelope_examples():
    cfg = CFG.replace(d_min=1.0, d_max=5.0)
    env = safety_envelope(3.0, 0.5, cfg)
    assert (env.d_min_eff, env.d_max_eff) == (1.5, 4.5)
    env = safety_envelope(3.0, 0.0, cfg)
    assert (env.d_min_eff, env.d_max_eff) == (1.0, 5.0)
    env = safety_envelope(3.0, 10.0, cfg)
    assert env.d_min_eff == pytest.approx(2.8) and env.d_max_eff == pytest.approx(3.2)


def test_hocbf_near_bound_worked_example():
    cfg = CFG.replace(d_min=1.5, omega=1.0, a_max=1.0)
    kin = relative_kinematics(_belief([2, 0, 0]), _uav())
    env = safety_envelope(kin.d_hat, 0.0, cfg)
    assert env.d_min_eff == 1.5
    (g_n, b_n), _ = hocbf_halfspaces(kin, env, cfg)
    np.testing.assert_array_equal(g_n, [1, 0, 0])
    assert b_n == -0.5


def test_hocbf_static_interior_slack():
    cfg = CFG.replace(a_max=0.0)
    d_mid = 0.5 * (cfg.d_min + cfg.d_max)
    kin = relative_kinematics(_belief([d_mid, 0, 0]), _uav())
    env = safety_envelope(d_mid, 0.0, cfg)
    (_, b_n), (_, b_f) = hocbf_halfspaces(kin, env, cfg)
    assert b_n == pytest.approx(cfg.omega**2 * env.h_near) and b_n > 0
    assert b_f == pytest.approx(cfg.omega**2 * env.h_far) and b_f > 0


def test_increasing_radius_tightens_both_bounds():
    kin = relative_kinematics(_belief([3.0, 0.5, 0.2], [0.3, -0.2, 0.1]), _uav())
    prev = None
    for R in np.linspace(0, 1.2, 40):
        env = safety_envelope(kin.d_hat, R, CFG)
        (_, b_n), (_, b_f) = hocbf_halfspaces(kin, env, CFG)
        # feasible interval of n'u is [-b_f, b_n]
        if prev is not None:
            assert env.h_near <= prev[0] and env.h_far <= prev[1]
            assert b_n <= prev[2] and -b_f >= prev[3]
        prev = (env.h_near, env.h_far, b_n, -b_f)


def test_interior_reference_is_returned_unchanged():
    belief = _belief([3.3, 0, 0])
    cmd = compute_control(belief, _uav(), CFG)
    assert cmd.qp_status == "optimal"
    assert np.linalg.norm(cmd.u_ref) > 0.1
    np.testing.assert_allclose(cmd.u, cmd.u_ref, atol=1e-8)
    assert not cmd.active_constraints


def test_single_box_face_clamps_one_component():
    # lateral target motion asks for more than u_max along y only
    belief = _belief([3.0, 0, 0], [0, 5.0, 0])
    cmd = compute_control(belief, _uav(), CFG, kind="clf_only")
    assert cmd.u_ref[1] > CFG.u_max
    assert cmd.u[1] == pytest.approx(CFG.u_max, abs=1e-12)
    np.testing.assert_allclose(cmd.u[[0, 2]], cmd.u_ref[[0, 2]], atol=1e-10)
    assert cmd.active_constraints == {"u_max_y"}


def test_near_barrier_active_matches_oracle():
    belief = _belief([2.6, 0, 0])
    uav = _uav(v=(1.0, 0, 0))
    cmd = compute_control(belief, uav, CFG)
    assert cmd.qp_status == "optimal" and "near" in cmd.active_constraints
    kin, env = cmd.kinematics, cmd.envelope
    (g_n, b_n), (g_f, b_f) = hocbf_halfspaces(kin, env, CFG)
    assert g_n @ cmd.u == pytest.approx(b_n, abs=1e-6)
    eye = np.eye(3)
    G = np.vstack([g_n, g_f, eye, -eye, CFG.dt * eye, -CFG.dt * eye])
    v = uav.velocity
    h = np.concatenate([[b_n, b_f], np.full(3, CFG.u_max), np.full(3, -CFG.u_min), CFG.v_max - v, CFG.v_max + v])
    x_ref = enumerate_qp(np.eye(3), -cmd.u_ref, G, h)
    np.testing.assert_allclose(cmd.u, x_ref, atol=1e-6)


def test_kkt_small_on_random_states():
    rng = np.random.default_rng(1)
    for _ in range(300):
        belief = _belief(rng.uniform(-4, 4, 3), rng.uniform(-1, 1, 3), cov=rng.uniform(1e-4, 0.05))
        uav = _uav(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        for kind in ("ca_clf_cbf", "fixed_clf_cbf", "clf_only"):
            cmd = compute_control(belief, uav, CFG, kind=kind)
            assert np.all(cmd.u >= CFG.u_min) and np.all(cmd.u <= CFG.u_max)
            if cmd.qp_status in ("optimal", "relaxed"):
                assert max(cmd.kkt.values()) <= 1e-6


def test_fixed_controller_ignores_radius_and_clf_only_has_no_barriers():
    belief = _belief([2.6, 0, 0], cov=0.05)
    uav = _uav(v=(1.0, 0, 0))
    fixed = compute_control(belief, uav, CFG, kind="fixed_clf_cbf")
    assert fixed.envelope.d_min_eff == CFG.d_min
    ca = compute_control(belief, uav, CFG)
    assert ca.envelope.d_min_eff > CFG.d_min
    clf = compute_control(belief, uav, CFG, kind="clf_only")
    assert clf.envelope is not None
    assert not {"near", "far"} & clf.active_constraints


def test_conflicting_barriers_relax():
    # closing fast inside the near limit: the near row cannot be met within the boxes
    cmd = compute_control(_belief([2.05, 0, 0]), _uav(v=(2.4, 0, 0)), CFG)
    assert cmd.qp_status == "relaxed"
    assert np.all(cmd.u >= CFG.u_min - 1e-12) and np.all(cmd.u <= CFG.u_max + 1e-12)


def test_degenerate_geometry_falls_back_to_damping():
    cmd = compute_control(_belief([0.01, 0, 0]), _uav(v=(2.0, -0.5, 0)), CFG)
    assert cmd.qp_status == "fallback"
    np.testing.assert_allclose(cmd.u, np.clip(-CFG.k_vr * np.array([2.0, -0.5, 0]), CFG.u_min, CFG.u_max))


def test_unknown_kind():
    with pytest.raises(ValueError):
        compute_control(_belief([3, 0, 0]), _uav(), CFG, kind="nope")
