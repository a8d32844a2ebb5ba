import json
import math

import numpy as np
import pytest

from qpmdesign.dispersion import (
    InteractionConfig,
    DispersionModel,
    delta_k,
    delta_k0,
    find_gvm_wavelength,
    gvm_slopes,
    gvm_table,
    load_model,
    nominal_period,
    omega_from_nm,
    refractive_index,
)
from qpmdesign.errors import ConfigError, DomainError, NumericalError


def hand_sellmeier(a, b, c, d, e, lam_um):
    return math.sqrt(a + b / (lam_um ** 2 - c) + d / (lam_um ** 2 - e))


def test_index_matches_hand_evaluation(model):
    ny = hand_sellmeier(3.45018, 0.04341, 0.04597, 16.98825, 39.43799, 1.55)
    nz = hand_sellmeier(4.59423, 0.06206, 0.04763, 110.80672, 86.12171, 1.55)
    assert refractive_index(model, 1550.0, "y") == pytest.approx(ny, rel=1e-14)
    assert refractive_index(model, 1550.0, "z") == pytest.approx(nz, rel=1e-14)
    # nz > ny > nx for KTP in the near infrared
    assert nz > ny > refractive_index(model, 1550.0, "x")


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_index_physical_and_normal_dispersion(model, axis):
    lam = np.linspace(1000, 2000, 201)
    n = refractive_index(model, lam, axis)
    assert np.all(n > 1)
    assert np.all(np.diff(n) < 0)


def test_window_enforced(model):
    with pytest.raises(DomainError, match="430"):
        refractive_index(model, 400.0, "y")
    with pytest.raises(DomainError):
        refractive_index(model, [1000.0, 4000.0], "z")


def test_unknown_axis(model):
    with pytest.raises(ConfigError):
        refractive_index(model, 1550.0, "w")


def test_delta_k_relabel_symmetry(model, cfg1550):
    rng = np.random.default_rng(3)
    w0 = cfg1550.omega_p0 / 2
    ws = w0 + rng.uniform(-2e12, 2e12, 50)
    wi = w0 + rng.uniform(-2e12, 2e12, 50)
    a = delta_k(ws, wi, cfg1550, model)
    b = delta_k(wi, ws, cfg1550.swapped(), model)
    np.testing.assert_array_equal(a, b)


def test_delta_k0_golden(model, cfg1550):
    assert delta_k0(cfg1550, model) == pytest.approx(-139516, rel=1e-4)


@pytest.mark.parametrize("dw_thz", [0.5, 1.0])
def test_first_order_expansion(model, cfg1550, dw_thz):
    gs, gi = gvm_slopes(cfg1550, model)
    dk0 = delta_k0(cfg1550, model)
    w0 = cfg1550.omega_p0 / 2
    dw = 2 * np.pi * dw_thz * 1e12
    for s, i in [(dw, 0), (0, dw), (dw, -dw), (-dw, 0.5 * dw)]:
        exact = float(delta_k(w0 + s, w0 + i, cfg1550, model)) - dk0
        linear = gs * s - gi * i
        # second-order remainder stays small against the linear term
        assert abs(exact - linear) < 0.02 * (abs(gs * s) + abs(gi * i))


def test_slopes_positive_and_step_converged(model, cfg1550):
    gs, gi = gvm_slopes(cfg1550, model)
    assert gs > 0 and gi > 0
    gs2, gi2 = gvm_slopes(cfg1550, model, step=np.pi * 1e9)
    assert abs(gs2 - gs) / gs < 1e-6
    assert abs(gi2 - gi) / gi < 1e-6


def test_gvm_wavelength(model, cfg1550):
    lam = find_gvm_wavelength(cfg1550, model)
    assert 1577 <= lam <= 1587
    c = InteractionConfig.for_degenerate(lam)
    gs, gi = gvm_slopes(c, model)
    assert abs(gs - gi) / gs < 1e-4


def test_gvm_root_stable_under_perturbation(model, cfg1550):
    lam = find_gvm_wavelength(cfg1550, model)
    coeffs = list(model.axes["z"])
    coeffs[0] *= 1 + 1e-5
    lam2 = find_gvm_wavelength(cfg1550, model.with_axis("z", coeffs))
    assert abs(lam2 - lam) < 1.0


def test_slopes_unequal_far_from_gvm(model):
    gs, gi = gvm_slopes(InteractionConfig.for_degenerate(1310.0), model)
    assert abs(gs - gi) / max(gs, gi) > 0.5


def test_no_gvm_point(model, cfg1550):
    with pytest.raises(NumericalError, match="no GVM point"):
        find_gvm_wavelength(cfg1550, model, bracket=(1000, 1200))


def test_nominal_period(model):
    for lam, n_lo, n_hi in [(1310, 170, 200), (1550, 210, 235), (1600, 210, 235)]:
        cfg = InteractionConfig.for_degenerate(lam)
        n = math.floor(cfg.length_m / nominal_period(cfg, model))
        assert n_lo <= n <= n_hi
    assert nominal_period(InteractionConfig.for_degenerate(1550), model) == pytest.approx(
        45.04e-6, rel=1e-3)


def test_gvm_table_rows(model, cfg1550):
    rep = gvm_table(cfg1550, model, [1550.0])
    assert len(rep.rows) == 2
    assert rep.rows[0]["wavelength_nm"] == rep.gvm_nm


def test_interaction_validation():
    with pytest.raises(ConfigError):
        InteractionConfig(775.0, signal_axis="z", idler_axis="z")
    with pytest.raises(ConfigError):
        InteractionConfig(775.0, pump_axis="q")
    with pytest.raises(ConfigError):
        InteractionConfig(-1.0)


def test_model_file_roundtrip(tmp_path, model):
    data = {"crystal_name": "test", "formula_id": "two_pole_sellmeier",
            "valid_window_nm": [430, 3540],
            "axes": {k: list(v) for k, v in model.axes.items()}}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(data))
    m2 = load_model(p)
    assert len(m2.source_hash) == 64
    assert refractive_index(m2, 1550.0, "y") == refractive_index(model, 1550.0, "y")


def test_model_rejects_unknown_formula(model):
    with pytest.raises(ConfigError):
        DispersionModel.from_dict({"crystal_name": "t", "formula_id": "nope",
                                   "valid_window_nm": [400, 4000], "axes": {}})


def test_omega_conversion():
    assert float(omega_from_nm(1550.0)) == pytest.approx(1.2153e15, rel=1e-4)
