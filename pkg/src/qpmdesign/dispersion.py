"""Material dispersion of the nonlinear crystal.

Refractive indices come from a Sellmeier coefficient file (JSON). Everything
downstream works in SI units: angular frequencies in rad/s, wavevectors in
rad/m, lengths in m. Wavelength arguments at the public boundary are in nm.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, NumericalError

C_LIGHT = 299_792_458.0  # m/s

AXES = ("x", "y", "z")

# Central-difference step for frequency derivatives of delta_k.
DERIVATIVE_STEP = 2 * np.pi * 1e9

GVM_BRACKET_NM = (1400.0, 1700.0)
GVM_TOL_NM = 0.01


def omega_from_nm(wavelength_nm):
    return 2 * np.pi * C_LIGHT / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


def nm_from_omega(omega):
    return 2 * np.pi * C_LIGHT / np.asarray(omega, dtype=float) * 1e9


def _two_pole_sellmeier(coeffs, lam_um):
    # n^2 = A + B/(lam^2 - C) + D/(lam^2 - E), lam in um
    a, b, c, d, e = coeffs
    lam2 = lam_um * lam_um
    return np.sqrt(a + b / (lam2 - c) + d / (lam2 - e))


SELLMEIER_FORMULAS = {
    "two_pole_sellmeier": (_two_pole_sellmeier, 5),
}


@dataclass(frozen=True)
class DispersionModel:
    crystal_name: str
    formula_id: str
    axes: dict
    valid_window_nm: tuple
    source_hash: str = ""
    source_path: str = ""

    def __post_init__(self):
        if self.formula_id not in SELLMEIER_FORMULAS:
            raise ConfigError(
                f"unsupported formula_id {self.formula_id!r}; "
                f"supported: {sorted(SELLMEIER_FORMULAS)}"
            )
        _, ncoef = SELLMEIER_FORMULAS[self.formula_id]
        for ax, coeffs in self.axes.items():
            if ax not in AXES:
                raise ConfigError(f"unknown axis label {ax!r}")
            if len(coeffs) != ncoef:
                raise ConfigError(
                    f"axis {ax}: {self.formula_id} needs {ncoef} coefficients, got {len(coeffs)}"
                )
        lo, hi = self.valid_window_nm
        if not 0 < lo < hi:
            raise ConfigError(f"bad valid_window_nm {self.valid_window_nm}")

    @classmethod
    def from_dict(cls, data, source_hash="", source_path=""):
        try:
            return cls(
                crystal_name=data["crystal_name"],
                formula_id=data["formula_id"],
                axes={k: tuple(float(c) for c in v) for k, v in data["axes"].items()},
                valid_window_nm=tuple(float(x) for x in data["valid_window_nm"]),
                source_hash=source_hash,
                source_path=source_path,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed dispersion file: {exc}") from exc

    @classmethod
    def from_file(cls, path):
        raw = Path(path).read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        return cls.from_dict(json.loads(raw), source_hash=digest, source_path=str(path))

    def with_axis(self, axis, coeffs):
        """Copy of the model with one axis's coefficients replaced."""
        axes = dict(self.axes)
        axes[axis] = tuple(coeffs)
        return DispersionModel(
            self.crystal_name, self.formula_id, axes, self.valid_window_nm, "", ""
        )

    def check_window(self, wavelength_nm):
        lo, hi = self.valid_window_nm
        lam = np.asarray(wavelength_nm, dtype=float)
        if not np.all(np.isfinite(lam)) or lam.min() < lo or lam.max() > hi:
            raise DomainError(
                f"wavelength outside the supported window [{lo:g}, {hi:g}] nm "
                f"(got {lam.min():.2f}..{lam.max():.2f} nm)"
            )


def default_model_path():
    return resources.files("qpmdesign") / "data" / "ktp_kato2002.json"


def load_model(path=None) -> DispersionModel:
    """Load a coefficient file; ``None`` loads the bundled KTP set."""
    if path is None:
        with resources.as_file(default_model_path()) as p:
            return DispersionModel.from_file(p)
    return DispersionModel.from_file(path)


@dataclass(frozen=True)
class InteractionConfig:
    """Collinear three-wave interaction.

    ``pump_nm`` is the central pump vacuum wavelength; signal and idler are
    degenerate at twice that. Axis defaults are type-II (pump y, signal y,
    idler z), the assignment whose GVM point sits near 1582 nm for KTP.
    """

    pump_nm: float
    pump_axis: str = "y"
    signal_axis: str = "y"
    idler_axis: str = "z"
    length_mm: float = 10.0

    def __post_init__(self):
        for ax in (self.pump_axis, self.signal_axis, self.idler_axis):
            if ax not in AXES:
                raise ConfigError(f"unknown axis {ax!r}")
        if self.signal_axis == self.idler_axis:
            raise ConfigError("signal and idler must use different axes (type-II)")
        if not self.pump_nm > 0:
            raise ConfigError("pump wavelength must be positive")
        if not self.length_mm > 0:
            raise ConfigError("crystal length must be positive")

    @classmethod
    def for_degenerate(cls, wavelength_nm, **kw):
        return cls(pump_nm=wavelength_nm / 2.0, **kw)

    @property
    def degenerate_nm(self):
        return 2.0 * self.pump_nm

    @property
    def omega_p0(self):
        return float(omega_from_nm(self.pump_nm))

    @property
    def length_m(self):
        return self.length_mm * 1e-3

    def swapped(self):
        return InteractionConfig(
            self.pump_nm, self.pump_axis, self.idler_axis, self.signal_axis, self.length_mm
        )


def refractive_index(model: DispersionModel, wavelength_nm, axis: str):
    """n(lambda) on one crystal axis. Accepts scalars or arrays."""
    if axis not in model.axes:
        raise ConfigError(f"axis {axis!r} not present in {model.crystal_name} model")
    model.check_window(wavelength_nm)
    fn, _ = SELLMEIER_FORMULAS[model.formula_id]
    n = fn(model.axes[axis], np.asarray(wavelength_nm, dtype=float) * 1e-3)
    return float(n) if np.ndim(n) == 0 else n


def wavevector(model, omega, axis):
    """k = n(omega) omega / c in rad/m."""
    omega = np.asarray(omega, dtype=float)
    return refractive_index(model, nm_from_omega(omega), axis) * omega / C_LIGHT


def delta_k(omega_s, omega_i, cfg: InteractionConfig, model: DispersionModel):
    """Phase mismatch k_P(w_S + w_I) - k_S(w_S) - k_I(w_I), rad/m."""
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    return (
        wavevector(model, omega_s + omega_i, cfg.pump_axis)
        - wavevector(model, omega_s, cfg.signal_axis)
        - wavevector(model, omega_i, cfg.idler_axis)
    )


def delta_k0(cfg, model):
    w = cfg.omega_p0 / 2
    return float(delta_k(w, w, cfg, model))


def gvm_slopes(cfg, model, step=DERIVATIVE_STEP):
    """First-order slopes (gamma_S, gamma_I) of delta_k at degeneracy, s/m.

    delta_k - delta_k0 ~ gamma_S * dw_S - gamma_I * dw_I. If the raw slopes
    come out both negative the overall sign is flipped so both are positive.
    """
    w = cfg.omega_p0 / 2
    d_s = (delta_k(w + step, w, cfg, model) - delta_k(w - step, w, cfg, model)) / (2 * step)
    d_i = (delta_k(w, w + step, cfg, model) - delta_k(w, w - step, cfg, model)) / (2 * step)
    gamma_s, gamma_i = float(d_s), float(-d_i)
    if gamma_s < 0 and gamma_i < 0:
        gamma_s, gamma_i = -gamma_s, -gamma_i
    return gamma_s, gamma_i


def _gvm_mismatch(degenerate_nm, cfg, model, step):
    c = InteractionConfig(
        degenerate_nm / 2, cfg.pump_axis, cfg.signal_axis, cfg.idler_axis, cfg.length_mm
    )
    gs, gi = gvm_slopes(c, model, step)
    return gs - gi


def find_gvm_wavelength(cfg, model, bracket=GVM_BRACKET_NM, tol_nm=GVM_TOL_NM,
                        step=DERIVATIVE_STEP):
    """Degenerate wavelength (nm) where gamma_S == gamma_I, by bisection.

    Only the axis assignment of ``cfg`` is used; its pump wavelength is ignored.
    """
    lo, hi = map(float, bracket)
    f_lo = _gvm_mismatch(lo, cfg, model, step)
    f_hi = _gvm_mismatch(hi, cfg, model, step)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NumericalError(f"no GVM point in window [{lo:g}, {hi:g}] nm")
    while hi - lo > tol_nm:
        mid = 0.5 * (lo + hi)
        f_mid = _gvm_mismatch(mid, cfg, model, step)
        if f_mid == 0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nominal_period(cfg, model):
    """First-order QPM period 2*pi/|delta_k0| in m.

    With k_P - k_S - k_I the KTP type-II mismatch is negative; the phase-matching
    magnitude is even in delta_k so the period only depends on |delta_k0|.
    """
    dk0 = delta_k0(cfg, model)
    if not np.isfinite(dk0) or abs(dk0) < 1e-9:
        raise ConfigError(
            "axis assignment gives no first-order QPM solution (delta_k0 == 0)"
        )
    return 2 * np.pi / abs(dk0)


@dataclass
class GvmReport:
    gvm_nm: float
    rows: list = field(default_factory=list)


def gvm_table(cfg, model, wavelengths_nm=(1310.0, 1550.0, 1600.0)):
    """GVM wavelength plus (gamma_S, gamma_I) at a few degenerate wavelengths."""
    report = GvmReport(find_gvm_wavelength(cfg, model))
    for lam in [report.gvm_nm, *wavelengths_nm]:
        c = InteractionConfig(lam / 2, cfg.pump_axis, cfg.signal_axis, cfg.idler_axis,
                              cfg.length_mm)
        gs, gi = gvm_slopes(c, model)
        report.rows.append({
            "wavelength_nm": float(lam),
            "gamma_s": gs,
            "gamma_i": gi,
            "delta_k0": delta_k0(c, model),
            "period_um": nominal_period(c, model) * 1e6,
        })
    return report
