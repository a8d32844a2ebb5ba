"""Duty-cycle poling profiles and their phase-matching function.

Period ``j`` of a profile occupies ``[j*period, (j+1)*period)``; its positive
domain is the leading fraction ``duty[j]`` of the period and the rest is
negative. Only ``N = floor(L/period)`` whole periods are poled. The trailing
remainder is excluded and the 1/L prefactor of the phase-matching integral
uses ``N*period``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dispersion import delta_k
from .errors import ConfigError, DomainError, ProfileFormatError

# Below this |delta_k| * L the closed form loses digits to cancellation and a
# moment series is summed instead.
SERIES_LIMIT = 1e-2
_SERIES_TERMS = 12
# Points per chunk when evaluating G on large delta_k arrays.
_CHUNK = 8192

CSV_HEADER = ["index", "z_start_m", "duty_cycle", "domain_up_length_m", "domain_down_length_m"]


@dataclass(frozen=True, eq=False)
class PolingProfile:
    period: float
    duty: np.ndarray
    length: float
    min_domain: float = 0.0

    def __post_init__(self):
        duty = np.array(self.duty, dtype=float).reshape(-1)
        duty.setflags(write=False)
        object.__setattr__(self, "duty", duty)
        if not (self.period > 0 and self.length > 0):
            raise ConfigError("period and length must be positive")
        if not 0 <= self.min_domain < self.period / 2:
            raise ConfigError("minimum domain length must lie in [0, period/2)")
        n = math.floor(self.length / self.period + 1e-9)
        if duty.size != n:
            raise ConfigError(
                f"profile has {duty.size} duty cycles but floor(L/period) = {n}"
            )
        lo, hi = self.bounds
        bad = np.flatnonzero((duty < lo - 1e-12) | (duty > hi + 1e-12) | ~np.isfinite(duty))
        if bad.size:
            j = int(bad[0])
            raise ConfigError(
                f"duty cycle at index {j} = {duty[j]!r} outside admissible "
                f"range [{lo:.6g}, {hi:.6g}]"
            )

    @property
    def n_periods(self):
        return self.duty.size

    @property
    def poled_length(self):
        return self.n_periods * self.period

    @property
    def bounds(self):
        r = self.min_domain / self.period
        return r, 1.0 - r

    def clamp(self, duty):
        lo, hi = self.bounds
        return np.clip(duty, lo, hi)

    def with_duty(self, duty):
        return PolingProfile(self.period, self.clamp(duty), self.length, self.min_domain)

    def with_period(self, period):
        """Same duty array on a new period; the crystal length follows N*period."""
        n = self.n_periods
        length = self.length
        if math.floor(length / period + 1e-9) != n:
            length = n * period
        return PolingProfile(period, self.duty, length, self.min_domain)

    def __eq__(self, other):
        if not isinstance(other, PolingProfile):
            return NotImplemented
        return (self.period == other.period and self.length == other.length
                and self.min_domain == other.min_domain
                and np.array_equal(self.duty, other.duty))


def periodic_profile(period, length, min_domain=0.0, duty=0.5):
    n = math.floor(length / period + 1e-9)
    return PolingProfile(period, np.full(n, duty), length, min_domain)


def g_profile(z, profile: PolingProfile):
    """Poling sign +1/-1 at position(s) z (m)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z > profile.length):
        raise DomainError(f"z outside crystal [0, {profile.length:g}] m")
    u = z / profile.period
    j = np.floor(u).astype(int)
    inside = j < profile.n_periods
    jj = np.clip(j, 0, profile.n_periods - 1)
    up = inside & (u - j < profile.duty[jj])
    out = np.where(up, 1, -1)
    return int(out) if out.ndim == 0 else out


def _geometric(x, n):
    """sum_{j<n} exp(-i j x), closed form away from x = 2*pi*m."""
    q = np.exp(-1j * x)
    den = 1 - q
    near = np.abs(den) < 1e-4
    out = (1 - np.exp(-1j * n * x)) / np.where(near, 1.0, den)
    if np.any(near):
        j = np.arange(n, dtype=float)
        out[near] = np.exp(-1j * np.multiply.outer(x[near], j)).sum(axis=-1)
    return out


def _sums(dk, profile):
    """Return (edge, phase): edge = sum_j e^{-ixj} + e^{-ix(j+1)} and
    phase[..., j] = exp(-i*period*(j+A_j)*dk), x = period*dk."""
    x = profile.period * dk
    pos = np.arange(profile.n_periods) + profile.duty
    ph_a = np.exp(-1j * np.multiply.outer(x, pos))
    edge = _geometric(x, profile.n_periods) * (1 + np.exp(-1j * x))
    return edge, ph_a


def _series(dk, profile):
    """Taylor series of G about delta_k = 0 from the moments of g(u), u = z/L."""
    L = profile.poled_length
    j = np.arange(profile.n_periods)
    u0 = j * profile.period / L
    um = (j + profile.duty) * profile.period / L
    u1 = (j + 1) * profile.period / L
    y = -1j * dk * L
    out = np.zeros(dk.shape, dtype=complex)
    term = np.ones(dk.shape, dtype=complex)
    for k in range(_SERIES_TERMS):
        p = k + 1
        m_k = np.sum(2 * um ** p - u0 ** p - u1 ** p) / p
        out += term * m_k
        term = term * y / p
    return out


def phase_matching(dk, profile: PolingProfile):
    """Closed-form phase-matching function G(delta_k) for a duty-cycle profile."""
    dk = np.asarray(dk, dtype=float)
    flat = dk.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    L = profile.poled_length
    for s in range(0, flat.size, _CHUNK):
        d = flat[s:s + _CHUNK]
        small = np.abs(d) * L < SERIES_LIMIT
        d_safe = np.where(small, 1.0, d)
        edge, ph_a = _sums(d_safe, profile)
        g = (edge - 2 * ph_a.sum(axis=-1)) / (1j * L * d_safe)
        if np.any(small):
            g[small] = _series(d[small], profile)
        out[s:s + _CHUNK] = g
    out = out.reshape(dk.shape)
    return complex(out) if out.ndim == 0 else out


def phase_matching_with_grad(dk, profile):
    """G(dk) and dG/dA_j, shapes (M,) and (M, N). dk must be 1-D."""
    dk = np.asarray(dk, dtype=float).reshape(-1)
    L = profile.poled_length
    small = np.abs(dk) * L < SERIES_LIMIT
    d_safe = np.where(small, 1.0, dk)
    edge, ph_a = _sums(d_safe, profile)
    g = (edge - 2 * ph_a.sum(axis=-1)) / (1j * L * d_safe)
    if np.any(small):
        g[small] = _series(dk[small], profile)
        pos = np.arange(profile.n_periods) + profile.duty
        ph_a[small] = np.exp(-1j * np.multiply.outer(profile.period * dk[small], pos))
    grad = (2 * profile.period / L) * ph_a
    return g, grad


def slice_delta_k(omega_s, omega_p0, cfg, model):
    """delta_k along the anti-diagonal w_S + w_I = w_P0."""
    omega_s = np.asarray(omega_s, dtype=float)
    return delta_k(omega_s, omega_p0 - omega_s, cfg, model)


def _check_samples(omega_s):
    omega_s = np.asarray(omega_s, dtype=float).reshape(-1)
    if omega_s.size == 0:
        raise ValueError("empty signal-frequency sample array")
    return omega_s


def h_slice(omega_s, profile, omega_p0, cfg, model, dk=None):
    """Normalized |G| along the pump-centre slice (max = 1).

    ``dk`` may be passed to reuse a precomputed slice_delta_k.
    """
    omega_s = _check_samples(omega_s)
    if dk is None:
        dk = slice_delta_k(omega_s, omega_p0, cfg, model)
    h = np.abs(phase_matching(dk, profile))
    peak = h.max()
    return h / peak if peak > 0 else h


def h_with_gradient(omega_s, profile, omega_p0, cfg, model, dk=None):
    """Normalized H and dH_l/dA_j (shape samples x N)."""
    omega_s = _check_samples(omega_s)
    if dk is None:
        dk = slice_delta_k(omega_s, omega_p0, cfg, model)
    g, dg = phase_matching_with_grad(dk, profile)
    mag = np.abs(g)
    nz = mag > 0
    # d|G|/dA = Re(conj(G) dG/dA) / |G|; zero where |G| vanishes
    dmag = np.zeros(dg.shape)
    dmag[nz] = (np.conj(g[nz])[:, None] * dg[nz]).real / mag[nz][:, None]
    m = int(np.argmax(mag))
    peak = mag[m]
    if peak == 0:
        return mag, np.zeros_like(dmag)
    h = mag / peak
    dh = dmag / peak - np.outer(h, dmag[m]) / peak
    return h, dh


def h_gradient(omega_s, profile, omega_p0, cfg, model, dk=None):
    return h_with_gradient(omega_s, profile, omega_p0, cfg, model, dk)[1]


def gaussian_init(n_periods, period, width, min_domain=0.0, length=None):
    """Duty cycles whose first-order amplitude sin(pi*A) follows a Gaussian.

    The envelope exp(-(z - L/2)^2 / (2 w^2)) is sampled at period centres and
    inverted on the branch A <= 1/2; the result is clamped to the bounds.
    """
    if n_periods < 1:
        raise ConfigError("need at least one period")
    if not width > 0:
        raise ConfigError("Gaussian width must be positive")
    if length is None:
        length = n_periods * period
    z = (np.arange(n_periods) + 0.5) * period
    centre = n_periods * period / 2
    env = np.exp(-((z - centre) ** 2) / (2 * width ** 2))
    j_mid = int(np.argmin(np.abs(z - centre)))
    env[j_mid] = 1.0
    duty = np.arcsin(np.clip(env, 0.0, 1.0)) / np.pi
    r = min_domain / period
    duty = np.clip(duty, r, 1 - r)
    return PolingProfile(period, duty, length, min_domain)


# --- export / import ---------------------------------------------------------

def export_profile(profile, csv_path, metadata=None):
    """Write the per-period CSV and a JSON sidecar next to it."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for j, a in enumerate(profile.duty):
            w.writerow([
                j,
                repr(j * profile.period),
                repr(float(a)),
                repr(float(a) * profile.period),
                repr((1 - float(a)) * profile.period),
            ])
    meta = {
        "period_m": profile.period,
        "length_m": profile.length,
        "min_domain_m": profile.min_domain,
        "n_periods": profile.n_periods,
    }
    if metadata:
        meta.update(metadata)
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2))
    return csv_path, sidecar


def import_profile(csv_path, min_domain=None, length=None):
    """Read a profile CSV (plus sidecar if present).

    Without a sidecar, the period is taken from the z_start column and the
    length from N*period. Admissibility errors name the offending index.
    """
    csv_path = Path(csv_path)
    meta = {}
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    duty, z = [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ProfileFormatError(f"{csv_path}: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            try:
                if len(row) != len(CSV_HEADER):
                    raise ValueError(f"expected {len(CSV_HEADER)} fields")
                idx = int(row[0])
                if idx != len(duty):
                    raise ValueError(f"index {idx} out of sequence")
                z.append(float(row[1]))
                duty.append(float(row[2]))
            except ValueError as exc:
                raise ProfileFormatError(f"{csv_path}: row {lineno}: {exc}") from exc
    if not duty:
        raise ProfileFormatError(f"{csv_path}: no rows")
    period = meta.get("period_m")
    if period is None:
        if len(z) < 2:
            raise ProfileFormatError(f"{csv_path}: cannot infer period without sidecar")
        period = (z[-1] - z[0]) / (len(z) - 1)
    if length is None:
        length = meta.get("length_m", len(duty) * period)
    if min_domain is None:
        min_domain = meta.get("min_domain_m", 0.0)
    return PolingProfile(float(period), np.array(duty), float(length), float(min_domain))
