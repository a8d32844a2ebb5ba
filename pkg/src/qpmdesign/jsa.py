"""Sampled joint spectral amplitude, spectral filters and Schmidt purity."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dispersion import C_LIGHT, delta_k, nm_from_omega, omega_from_nm
from .errors import ConfigError, NumericalError
from .poling import phase_matching

MIN_GRID_POINTS = 64
LOG_FLOOR = -12.0


def span_nm_to_omega(center_nm, span_nm):
    """Full angular-frequency span matching ``span_nm`` at ``center_nm``."""
    return 2 * np.pi * C_LIGHT * span_nm * 1e-9 / (center_nm * 1e-9) ** 2


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Uniform signal/idler frequency axes (rad/s), row index = signal."""

    omega_s: np.ndarray
    omega_i: np.ndarray

    def __post_init__(self):
        for name in ("omega_s", "omega_i"):
            ax = np.array(getattr(self, name), dtype=float).reshape(-1)
            if ax.size < MIN_GRID_POINTS:
                raise ConfigError(f"{name} needs at least {MIN_GRID_POINTS} samples")
            if np.any(np.diff(ax) <= 0):
                raise ConfigError(f"{name} must be strictly increasing")
            ax.setflags(write=False)
            object.__setattr__(self, name, ax)

    @classmethod
    def centered(cls, center_s_nm, center_i_nm, span_s_nm, span_i_nm, points_s=512,
                 points_i=None):
        points_i = points_s if points_i is None else points_i
        ws0, wi0 = omega_from_nm(center_s_nm), omega_from_nm(center_i_nm)
        hs = span_nm_to_omega(center_s_nm, span_s_nm) / 2
        hi = span_nm_to_omega(center_i_nm, span_i_nm) / 2
        return cls(np.linspace(ws0 - hs, ws0 + hs, points_s),
                   np.linspace(wi0 - hi, wi0 + hi, points_i))

    @property
    def shape(self):
        return self.omega_s.size, self.omega_i.size

    @property
    def wavelength_s_nm(self):
        return nm_from_omega(self.omega_s)

    @property
    def wavelength_i_nm(self):
        return nm_from_omega(self.omega_i)

    def span_nm(self):
        ls, li = self.wavelength_s_nm, self.wavelength_i_nm
        return float(ls.max() - ls.min()), float(li.max() - li.min())

    def refined(self, factor=2):
        """Same span with ``factor`` times as many points per axis."""
        ns, ni = self.shape
        return FrequencyGrid(
            np.linspace(self.omega_s[0], self.omega_s[-1], factor * (ns - 1) + 1),
            np.linspace(self.omega_i[0], self.omega_i[-1], factor * (ni - 1) + 1),
        )

    def describe(self):
        ss, si = self.span_nm()
        return {
            "points": list(self.shape),
            "signal_nm": [float(self.wavelength_s_nm.min()), float(self.wavelength_s_nm.max())],
            "idler_nm": [float(self.wavelength_i_nm.min()), float(self.wavelength_i_nm.max())],
            "span_nm": [ss, si],
            "uniform_in": "angular frequency",
        }


@dataclass(frozen=True)
class GaussianPump:
    """alpha(w) = exp(-(w - w0)^2 / sigma^2), peak amplitude 1."""

    omega_p0: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("pump bandwidth must be positive")

    def describe(self):
        return {"kind": "gaussian", "omega_p0": self.omega_p0, "sigma_p": self.sigma}


@dataclass(frozen=True, eq=False)
class TabulatedPump:
    """Pump amplitude linearly interpolated from (omega, complex amplitude) samples."""

    omega: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(-1)
        a = np.asarray(self.amplitude, dtype=complex).reshape(-1)
        if w.size == 0 or w.size != a.size:
            raise ConfigError("tabulated pump needs matching, nonempty arrays")
        if np.any(np.diff(w) <= 0):
            raise ConfigError("tabulated pump frequencies must be sorted ascending")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "amplitude", a)

    def describe(self):
        return {"kind": "tabulated", "samples": int(self.omega.size)}


def pump_amplitude(pump, omega_p):
    omega_p = np.asarray(omega_p, dtype=float)
    if isinstance(pump, GaussianPump):
        out = np.exp(-((omega_p - pump.omega_p0) ** 2) / pump.sigma ** 2).astype(complex)
    elif isinstance(pump, TabulatedPump):
        re = np.interp(omega_p, pump.omega, pump.amplitude.real, left=0.0, right=0.0)
        im = np.interp(omega_p, pump.omega, pump.amplitude.imag, left=0.0, right=0.0)
        out = re + 1j * im
    else:
        raise TypeError(f"unsupported pump {type(pump).__name__}")
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectralFilter:
    """Band-pass filter; ``bandwidth_nm`` is the full width (intensity FWHM for gaussian)."""

    shape: str
    center_nm: float
    bandwidth_nm: float

    def __post_init__(self):
        if self.shape not in ("rectangular", "gaussian"):
            raise ConfigError(f"unknown filter shape {self.shape!r}")
        if not self.bandwidth_nm > 0:
            raise ConfigError("filter bandwidth must be positive")

    def transmission(self, omega):
        """Amplitude transmission at ``omega`` (rad/s)."""
        omega = np.asarray(omega, dtype=float)
        if self.shape == "rectangular":
            w_lo = omega_from_nm(self.center_nm + self.bandwidth_nm / 2)
            w_hi = omega_from_nm(self.center_nm - self.bandwidth_nm / 2)
            return ((omega >= w_lo) & (omega <= w_hi)).astype(float)
        wc = omega_from_nm(self.center_nm)
        bw = span_nm_to_omega(self.center_nm, self.bandwidth_nm)
        return np.exp(-((omega - wc) ** 2) * 4 * np.log(2) / (2 * bw ** 2))

    def describe(self):
        return {"shape": self.shape, "center_nm": self.center_nm,
                "bandwidth_nm": self.bandwidth_nm}


@dataclass(frozen=True, eq=False)
class Jsa:
    values: np.ndarray
    grid: FrequencyGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ConfigError(f"JSA shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericalError("JSA contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def transpose(self):
        g = FrequencyGrid(self.grid.omega_i, self.grid.omega_s)
        return Jsa(self.values.T, g, dict(self.meta))


def grid_delta_k(grid, cfg, model):
    return delta_k(grid.omega_s[:, None], grid.omega_i[None, :], cfg, model)


def pump_matrix(grid, pump):
    return pump_amplitude(pump, grid.omega_s[:, None] + grid.omega_i[None, :])


def phase_matching_matrix(grid, profile, cfg, model):
    return phase_matching(grid_delta_k(grid, cfg, model), profile)


def compute_jsa(grid, pump, profile, cfg, model, pm=None):
    """f = alpha(w_S + w_I) * G(delta_k(w_S, w_I)), unnormalized.

    ``pm`` may carry a precomputed phase_matching_matrix for this grid.
    """
    if pm is None:
        pm = phase_matching_matrix(grid, profile, cfg, model)
    f = pump_matrix(grid, pump) * pm
    if not np.any(f):
        raise NumericalError("JSA vanishes on the grid")
    return Jsa(f, grid, {"pump": pump.describe()})


def apply_filter(jsa, filter_s, filter_i):
    ts = filter_s.transmission(jsa.grid.omega_s)
    ti = filter_i.transmission(jsa.grid.omega_i)
    if not (np.any(ts > 0) and np.any(ti > 0)):
        raise NumericalError("filter annihilates JSA")
    f = jsa.values * ts[:, None] * ti[None, :]
    if not np.any(f):
        raise NumericalError("filter annihilates JSA")
    meta = dict(jsa.meta)
    meta["filters"] = [filter_s.describe(), filter_i.describe()]
    return Jsa(f, jsa.grid, meta)


def schmidt_coefficients(jsa_or_matrix):
    """Singular values of the sampled JSA, descending."""
    m = jsa_or_matrix.values if isinstance(jsa_or_matrix, Jsa) else np.asarray(jsa_or_matrix)
    return np.linalg.svd(m, compute_uv=False)


def purity(jsa_or_matrix):
    """Schmidt purity sum(xi^4) / (sum(xi^2))^2."""
    m = jsa_or_matrix.values if isinstance(jsa_or_matrix, Jsa) else np.asarray(jsa_or_matrix)
    if not np.any(m):
        raise NumericalError("purity undefined for a zero matrix")
    # zero rows/columns (filter stop bands) carry no singular weight
    m = m[np.any(m != 0, axis=1)][:, np.any(m != 0, axis=0)]
    m = m / np.abs(m).max()

    def one(a):
        p = schmidt_coefficients(a) ** 2
        p = p / p.sum()
        return float(np.sum(p * p))

    # averaging both orientations makes transposition invariance bit-exact
    return (one(m) + one(m.T)) / 2


def _parabolic_peak(y):
    k = int(np.argmax(y))
    if k == 0 or k == y.size - 1:
        raise NumericalError("marginal peak at grid edge: grid too narrow")
    a, b, c = y[k - 1], y[k], y[k + 1]
    den = a - 2 * b + c
    return k + (0.5 * (a - c) / den if den != 0 else 0.0)


def _interp_axis(axis, pos):
    k = int(np.floor(pos))
    k = min(max(k, 0), axis.size - 2)
    return axis[k] + (pos - k) * (axis[k + 1] - axis[k])


def marginal_peaks(jsa):
    """Peak wavelengths (nm) of the signal and idler marginal intensities."""
    inten = jsa.intensity
    if not np.any(inten):
        raise NumericalError("marginal peaks undefined for a zero JSA")
    ws = _interp_axis(jsa.grid.omega_s, _parabolic_peak(inten.sum(axis=1)))
    wi = _interp_axis(jsa.grid.omega_i, _parabolic_peak(inten.sum(axis=0)))
    return float(nm_from_omega(ws)), float(nm_from_omega(wi))


def _fwhm(x, y):
    y = y / y.max()
    k = int(np.argmax(y))
    above = y >= 0.5
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < y.size - 1 and above[hi + 1]:
        hi += 1

    def cross(i0, i1):
        # linear interpolation of the 0.5 crossing between samples i0 (above) and i1
        if i1 < 0 or i1 >= y.size:
            return x[i0]
        t = (y[i0] - 0.5) / (y[i0] - y[i1])
        return x[i0] + t * (x[i1] - x[i0])

    return abs(cross(hi, hi + 1) - cross(lo, lo - 1))


FWHM_TO_SIGMA = 1.0 / (2 * np.sqrt(2 * np.log(2)))


def marginal_widths(jsa):
    """Intensity-marginal standard deviations (sigma_S, sigma_I) in nm, from the FWHM."""
    inten = jsa.intensity
    ls, li = jsa.grid.wavelength_s_nm, jsa.grid.wavelength_i_nm
    return (float(_fwhm(ls, inten.sum(axis=1)) * FWHM_TO_SIGMA),
            float(_fwhm(li, inten.sum(axis=0)) * FWHM_TO_SIGMA))


# --- dumps ------------------------------------------------------------------

def _write_grid_csv(path, grid, data):
    """Rows ascend in signal wavelength, columns in idler wavelength."""
    ls, li = grid.wavelength_s_nm[::-1], grid.wavelength_i_nm[::-1]
    data = data[::-1, ::-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["signal_nm\\idler_nm"] + [f"{x:.6f}" for x in li])
        for lam, row in zip(ls, data):
            w.writerow([f"{lam:.6f}"] + [f"{v:.9e}" for v in row])


def read_grid_csv(path):
    """Inverse of the dump writer: (signal_nm, idler_nm, data)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    li = np.array([float(x) for x in rows[0][1:]])
    ls = np.array([float(r[0]) for r in rows[1:]])
    data = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return ls, li, data


def dump_jsa(jsa, out_dir, stem="jsa", log=False, extra=None):
    """Write |f|^2 (and optionally log10(|f|^2/max) clipped at -12) plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inten = jsa.intensity
    paths = {"intensity": out_dir / f"{stem}_intensity.csv"}
    _write_grid_csv(paths["intensity"], jsa.grid, inten)
    if log:
        with np.errstate(divide="ignore"):
            lg = np.log10(inten / inten.max())
        lg = np.clip(lg, LOG_FLOOR, 0.0)
        paths["log_intensity"] = out_dir / f"{stem}_log_intensity.csv"
        _write_grid_csv(paths["log_intensity"], jsa.grid, lg)
    xi = schmidt_coefficients(jsa)
    meta = {
        "grid": jsa.grid.describe(),
        "pump": jsa.meta.get("pump"),
        "filters": jsa.meta.get("filters", []),
        "purity": purity(jsa),
        "schmidt_coefficients": [float(x) for x in xi[:16]],
    }
    if extra:
        meta.update(extra)
    paths["sidecar"] = out_dir / f"{stem}.json"
    paths["sidecar"].write_text(json.dumps(meta, indent=2))
    return {k: str(v) for k, v in paths.items()}


def with_meta(jsa, **kw):
    return replace(jsa, meta={**jsa.meta, **kw})
