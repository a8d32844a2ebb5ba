import json

import numpy as np
import pytest

from qpmdesign.dispersion import nominal_period, omega_from_nm
from qpmdesign.errors import ConfigError, NumericalError
from qpmdesign.jsa import (
    FrequencyGrid,
    GaussianPump,
    Jsa,
    SpectralFilter,
    TabulatedPump,
    apply_filter,
    compute_jsa,
    dump_jsa,
    marginal_peaks,
    marginal_widths,
    pump_amplitude,
    pump_matrix,
    purity,
    read_grid_csv,
    schmidt_coefficients,
    span_nm_to_omega,
)
from qpmdesign.poling import periodic_profile


def gaussian_grid(n=256, half=5.0):
    x = np.linspace(-half, half, n)
    return x[:, None], x[None, :]


# --- purity properties -----------------------------------------------------------

def test_rank_one_is_pure():
    rng = np.random.default_rng(0)
    u = rng.normal(size=40) + 1j * rng.normal(size=40)
    v = rng.normal(size=30)
    assert purity(np.outer(u, v)) == pytest.approx(1.0, abs=1e-10)


def test_identity_half():
    assert purity(np.eye(2) / np.sqrt(2)) == 0.5


def test_two_by_two_known_value():
    # singular values 1.5 and 0.5
    assert purity(np.array([[1.0, 0.5], [0.5, 1.0]])) == pytest.approx(0.82, abs=1e-14)


def test_scale_and_transpose_invariance():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(64, 80)) + 1j * rng.normal(size=(64, 80))
    p = purity(m)
    assert purity(m.T) == p
    assert purity(8.0 * m) == p
    for c in (3.7, 1e-6, 2e9, -1j):
        assert purity(c * m) == pytest.approx(p, rel=1e-13)


def test_zero_rows_ignored():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(20, 20))
    padded = np.zeros((30, 25))
    padded[5:25, 2:22] = m
    assert purity(padded) == pytest.approx(purity(m), rel=1e-14)


def test_zero_matrix_raises():
    with pytest.raises(NumericalError):
        purity(np.zeros((4, 4)))


def test_separable_gaussian_is_pure():
    x, y = gaussian_grid()
    sigma = 1.0
    f = np.exp(-(x + y) ** 2 / sigma ** 2) * np.exp(-(x - y) ** 2 / sigma ** 2)
    assert purity(f) == pytest.approx(1.0, abs=1e-10)


def test_narrow_pump_is_correlated():
    x, y = gaussian_grid()
    f = np.exp(-(x + y) ** 2 / 0.05 ** 2) * np.exp(-(x - y) ** 2 / 4.0)
    assert purity(f) < 0.2


def test_schmidt_descending():
    rng = np.random.default_rng(3)
    xi = schmidt_coefficients(rng.normal(size=(10, 10)))
    assert np.all(np.diff(xi) <= 0)


# --- grid, pump, filters ---------------------------------------------------------

def test_grid_construction():
    g = FrequencyGrid.centered(1550, 1550, 24, 24, 128)
    assert g.shape == (128, 128)
    ss, si = g.span_nm()
    assert ss == pytest.approx(24, rel=1e-3)
    assert np.allclose(np.diff(g.omega_s), g.omega_s[1] - g.omega_s[0])
    r = g.refined()
    assert r.shape == (255, 255)
    assert r.omega_s[0] == g.omega_s[0] and r.omega_s[-1] == g.omega_s[-1]
    with pytest.raises(ConfigError):
        FrequencyGrid.centered(1550, 1550, 24, 24, 16)


def test_gaussian_pump_amplitude():
    p = GaussianPump(1e15, 1e12)
    assert pump_amplitude(p, 1e15) == 1.0
    assert abs(pump_amplitude(p, 1e15 + 1e12)) == pytest.approx(np.exp(-1))
    with pytest.raises(ConfigError):
        GaussianPump(1e15, 0.0)


def test_tabulated_pump_matches_gaussian():
    g = GaussianPump(1e15, 1e12)
    w = np.linspace(1e15 - 5e12, 1e15 + 5e12, 4001)
    t = TabulatedPump(w, pump_amplitude(g, w))
    q = 1e15 + np.linspace(-3e12, 3e12, 17)
    np.testing.assert_allclose(pump_amplitude(t, q), pump_amplitude(g, q), atol=1e-5)
    assert pump_amplitude(t, 2e15) == 0


def test_rectangular_filter_edges():
    f = SpectralFilter("rectangular", 1550, 8)
    w = omega_from_nm(np.array([1545.9, 1546.0, 1550.0, 1554.0, 1554.1]))
    np.testing.assert_array_equal(f.transmission(w), [0, 1, 1, 1, 0])


def test_gaussian_filter_half_power_at_fwhm():
    f = SpectralFilter("gaussian", 1550, 8)
    wc = omega_from_nm(1550)
    half = span_nm_to_omega(1550, 8) / 2
    assert f.transmission(wc) == 1.0
    assert f.transmission(wc + half) ** 2 == pytest.approx(0.5, rel=1e-12)


def test_filter_validation():
    with pytest.raises(ConfigError):
        SpectralFilter("triangle", 1550, 8)
    with pytest.raises(ConfigError):
        SpectralFilter("gaussian", 1550, -1)


@pytest.fixture(scope="module")
def periodic_jsa(model, cfg1550):
    period = nominal_period(cfg1550, model)
    prof = periodic_profile(period, cfg1550.length_m)
    grid = FrequencyGrid.centered(1550, 1550, 60, 60, 256)
    return compute_jsa(grid, GaussianPump(cfg1550.omega_p0, 2e12), prof, cfg1550, model)


def test_wide_filter_is_identity(periodic_jsa):
    f = SpectralFilter("rectangular", 1550, 500)
    out = apply_filter(periodic_jsa, f, f)
    np.testing.assert_array_equal(out.values, periodic_jsa.values)


def test_filter_idempotent(periodic_jsa):
    f = SpectralFilter("rectangular", 1550, 8)
    once = apply_filter(periodic_jsa, f, f)
    twice = apply_filter(once, f, f)
    np.testing.assert_array_equal(once.values, twice.values)


def test_narrow_filter_raises_periodic_purity(periodic_jsa):
    f = SpectralFilter("rectangular", 1550, 8)
    assert purity(apply_filter(periodic_jsa, f, f)) > purity(periodic_jsa)


def test_filter_outside_grid_annihilates(periodic_jsa):
    f = SpectralFilter("rectangular", 1700, 8)
    with pytest.raises(NumericalError, match="annihilates"):
        apply_filter(periodic_jsa, f, f)


def test_transpose_keeps_purity(periodic_jsa):
    assert purity(periodic_jsa.transpose()) == purity(periodic_jsa)


# --- marginals ---------------------------------------------------------------------

def _synthetic(center_s, center_i, sig_s, sig_i):
    grid = FrequencyGrid.centered(1550, 1550, 40, 40, 401)
    ls, li = grid.wavelength_s_nm, grid.wavelength_i_nm
    f = np.exp(-(ls[:, None] - center_s) ** 2 / (4 * sig_s ** 2)
               - (li[None, :] - center_i) ** 2 / (4 * sig_i ** 2))
    return Jsa(f, grid)


def test_marginal_peaks_recovered():
    ls, li = marginal_peaks(_synthetic(1551.234, 1548.9, 2.0, 3.0))
    assert ls == pytest.approx(1551.234, abs=2e-3)
    assert li == pytest.approx(1548.9, abs=2e-3)


def test_marginal_widths_recovered():
    ss, si = marginal_widths(_synthetic(1550, 1550, 2.0, 3.0))
    assert ss == pytest.approx(2.0, rel=2e-3)
    assert si == pytest.approx(3.0, rel=2e-3)


def test_peak_at_edge_raises():
    with pytest.raises(NumericalError, match="too narrow"):
        marginal_peaks(_synthetic(1580, 1550, 1.0, 1.0))


# --- dumps -------------------------------------------------------------------------

def test_dump_format(tmp_path, periodic_jsa):
    paths = dump_jsa(periodic_jsa, tmp_path, stem="t", log=True, extra={"k": 1})
    ls, li, data = read_grid_csv(paths["intensity"])
    assert np.all(np.diff(ls) > 0) and np.all(np.diff(li) > 0)
    assert data.shape == periodic_jsa.grid.shape
    assert data.max() == pytest.approx(periodic_jsa.intensity.max(), rel=1e-8)
    _, _, lg = read_grid_csv(paths["log_intensity"])
    assert lg.max() == 0.0 and lg.min() >= -12
    meta = json.loads(open(paths["sidecar"]).read())
    assert meta["k"] == 1
    assert meta["purity"] == pytest.approx(purity(periodic_jsa))
    assert meta["grid"]["uniform_in"] == "angular frequency"


def test_pump_matrix_depends_on_sum_only():
    grid = FrequencyGrid.centered(1550, 1550, 10, 10, 64)
    p = pump_matrix(grid, GaussianPump(2 * grid.omega_s[32], 1e12))
    assert np.all(np.abs(p) <= 1)
