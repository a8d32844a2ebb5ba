"""Gaussian-target learning of the duty-cycle array and post-learning tuning."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dispersion import gvm_slopes, nm_from_omega
from .errors import ConfigError, NumericalError
from .jsa import (
    GaussianPump,
    Jsa,
    apply_filter,
    compute_jsa,
    marginal_peaks,
    phase_matching_matrix,
    pump_matrix,
    purity,
)
from .poling import h_slice, h_with_gradient, slice_delta_k

log = logging.getLogger(__name__)

SIGMA_FLOOR_FRACTION = 1e-3
DIVERGENCE_PATIENCE = 50


class DesignWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GaussianTarget:
    """Gaussian the normalized slice H is fitted to (peak height fixed at 1).

    ``sigma_ref`` is the initial width. Adam works on (omega_t0, sigma_t)
    divided by it, so the learning rate is dimensionless.
    """

    omega_t0: float
    sigma_t: float
    sigma_ref: float = 0.0

    def __post_init__(self):
        if not self.sigma_t > 0:
            raise ConfigError("target sigma must be positive")
        if self.sigma_ref <= 0:
            object.__setattr__(self, "sigma_ref", self.sigma_t)

    def values(self, omega_s):
        return np.exp(-((np.asarray(omega_s) - self.omega_t0) ** 2) / (2 * self.sigma_t ** 2))

    def as_params(self):
        return np.array([self.omega_t0 / self.sigma_ref, self.sigma_t / self.sigma_ref])

    def from_params(self, p):
        sigma = max(p[1] * self.sigma_ref, SIGMA_FLOOR_FRACTION * self.sigma_ref)
        return GaussianTarget(float(p[0] * self.sigma_ref), float(sigma), self.sigma_ref)

    def describe(self):
        return {
            "omega_t0": self.omega_t0,
            "sigma_t": self.sigma_t,
            "center_nm": float(nm_from_omega(self.omega_t0)),
        }


@dataclass(frozen=True, eq=False)
class AdamState:
    lr: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size, lr, **kw):
        return cls(lr, np.zeros(size), np.zeros(size), 0, **kw)


def adam_step(state: AdamState, gradient, params):
    """One bias-corrected Adam update. Returns (new_state, new_params)."""
    g = np.asarray(gradient, dtype=float)
    params = np.asarray(params, dtype=float)
    if g.shape != params.shape or g.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: gradient {g.shape}, params {params.shape}, state {state.m.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericalError(f"non-finite gradient at parameter index {int(bad[0])}")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), new


# --- cost ---------------------------------------------------------------------

def cost(h_values, target: GaussianTarget, omega_s):
    h_values = np.asarray(h_values, dtype=float)
    if h_values.shape != np.shape(omega_s):
        raise ValueError("H values and sample frequencies differ in length")
    r = h_values - target.values(omega_s)
    return float(r @ r)


def cost_grad_target(h_values, target, omega_s):
    """d cost / d(omega_t0, sigma_t) in physical units (s/rad each)."""
    omega_s = np.asarray(omega_s, dtype=float)
    t = target.values(omega_s)
    r = np.asarray(h_values) - t
    d = omega_s - target.omega_t0
    dt_dmu = t * d / target.sigma_t ** 2
    dt_dsig = t * d * d / target.sigma_t ** 3
    return np.array([-2 * r @ dt_dmu, -2 * r @ dt_dsig])


def cost_grad_duty(h_values, dh, target, omega_s):
    """d cost / dA_j given H and dH/dA (samples x N)."""
    r = np.asarray(h_values) - target.values(omega_s)
    return 2 * r @ dh


# --- learning steps -------------------------------------------------------------

def optimize_pump_target(target, h_values, omega_s, state_a):
    """Adam step on the target centre and width with H held fixed."""
    grad = cost_grad_target(h_values, target, omega_s) * target.sigma_ref
    state_a, p = adam_step(state_a, grad, target.as_params())
    return target.from_params(p), state_a


def optimize_poling(profile, target, omega_s, state_b, cfg, model, h_and_grad=None, dk=None):
    """Adam step on the duty cycles, then projection onto the admissible box."""
    if h_and_grad is None:
        h_and_grad = h_with_gradient(omega_s, profile, cfg.omega_p0, cfg, model, dk=dk)
    h, dh = h_and_grad
    grad = cost_grad_duty(h, dh, target, omega_s)
    state_b, duty = adam_step(state_b, grad, profile.duty)
    return profile.with_duty(duty), state_b


@dataclass(frozen=True)
class LearnRunConfig:
    rate_target: float = 0.005
    rate_poling: float = 0.015
    max_iterations: int = 300
    tolerance: float = 1e-6
    window: int = 10
    samples: int = 1024
    # sample half-span about the initial target centre, in initial sigma_T;
    # must reach past the widest filter or its side lobes go unpenalized
    half_span_sigmas: float = 12.0

    def __post_init__(self):
        if not (self.rate_target > 0 and self.rate_poling > 0):
            raise ConfigError("learning rates must be positive")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.samples < 2:
            raise ConfigError("need at least two slice samples")


def sample_frequencies(target, run_cfg):
    hw = run_cfg.half_span_sigmas * target.sigma_t
    return np.linspace(target.omega_t0 - hw, target.omega_t0 + hw, run_cfg.samples)


@dataclass
class LearnResult:
    profile: object
    target: GaussianTarget
    cost_history: list
    omega_s: np.ndarray
    converged: bool = False
    iterations: int = 0
    best_iteration: int = 0


def initial_target(profile, cfg, model, pilot_points=2049):
    """Fit a Gaussian (peak location, FWHM) to the initial slice H."""
    gs, gi = gvm_slopes(cfg, model)
    # slice width of a Gaussian apodization with w = L/4; the pilot spans 8x that
    guess = 4.0 / (profile.poled_length * (gs + gi))
    w0 = cfg.omega_p0 / 2
    omega = np.linspace(w0 - 8 * guess, w0 + 8 * guess, pilot_points)
    h = h_slice(omega, profile, cfg.omega_p0, cfg, model)
    k = int(np.argmax(h))
    lo = k
    while lo > 0 and h[lo - 1] >= 0.5:
        lo -= 1
    hi = k
    while hi + 1 < h.size and h[hi + 1] >= 0.5:
        hi += 1
    fwhm = omega[hi] - omega[lo] + (omega[1] - omega[0])
    sigma = fwhm / (2 * math.sqrt(2 * math.log(2)))
    return GaussianTarget(float(omega[k]), float(sigma))


def run_learning_loop(profile, run_cfg: LearnRunConfig, cfg, model, target=None,
                      callback=None):
    """Alternate cost evaluation, target update and duty-cycle update.

    Stops at max_iterations or when the relative cost change over
    ``run_cfg.window`` iterations drops below ``run_cfg.tolerance``. The
    lowest-cost iterate is returned; ``cost_history`` holds every evaluation,
    starting with the initial state.
    """
    if target is None:
        target = initial_target(profile, cfg, model)
    omega_s = sample_frequencies(target, run_cfg)
    dk = slice_delta_k(omega_s, cfg.omega_p0, cfg, model)
    state_a = AdamState.fresh(2, run_cfg.rate_target)
    state_b = AdamState.fresh(profile.n_periods, run_cfg.rate_poling)

    h, dh = h_with_gradient(omega_s, profile, cfg.omega_p0, cfg, model, dk=dk)
    history = [cost(h, target, omega_s)]
    best = (history[0], 0, profile, target)
    rising = 0
    converged = False
    it = 0
    for it in range(1, run_cfg.max_iterations + 1):
        target, state_a = optimize_pump_target(target, h, omega_s, state_a)
        profile, state_b = optimize_poling(profile, target, omega_s, state_b, cfg, model,
                                           h_and_grad=(h, dh))
        h, dh = h_with_gradient(omega_s, profile, cfg.omega_p0, cfg, model, dk=dk)
        c = cost(h, target, omega_s)
        if not math.isfinite(c):
            raise NumericalError(f"cost became non-finite at iteration {it}")
        rising = rising + 1 if c > history[-1] else 0
        history.append(c)
        if c < best[0]:
            best = (c, it, profile, target)
        if callback is not None:
            callback(it, c, profile, target)
        # slow late drift after a good minimum is not divergence; no net progress is
        if rising >= DIVERGENCE_PATIENCE and c > history[0]:
            raise NumericalError("learning diverged; reduce rates")
        if it >= run_cfg.window:
            ref = history[-1 - run_cfg.window]
            if ref > 0 and abs(ref - c) / ref < run_cfg.tolerance:
                converged = True
                break
    _, best_it, profile, target = best
    return LearnResult(profile, target, history, omega_s, converged, it, best_it)


# --- Step 4 and pump selection ----------------------------------------------------

def implied_pump_sigma(target, cfg, model):
    """Pump bandwidth that cancels the JSA cross term for a Gaussian slice.

    With |G| ~ exp(-(dk - dk*)^2 / (2 s^2)), s = sigma_T (gamma_S + gamma_I),
    and alpha = exp(-(w_S + w_I - w_P0)^2 / sigma_P^2): sigma_P^2 = 2 s^2 / (gamma_S gamma_I).
    """
    gs, gi = gvm_slopes(cfg, model)
    s = target.sigma_t * (gs + gi)
    return math.sqrt(2.0) * s / math.sqrt(gs * gi)


def peak_separation(profile, cfg, model, grid, pump, filt=None):
    jsa = compute_jsa(grid, pump, profile, cfg, model)
    if filt is not None:
        jsa = apply_filter(jsa, filt, filt)
    ls, li = marginal_peaks(jsa)
    return ls - li


@dataclass
class PeriodAdjustment:
    profile: object
    separation_nm: float
    evaluations: int
    history: list = field(default_factory=list)
    converged: bool = True


def adjust_period(profile, cfg, model, grid, pump, filt=None, tol_nm=0.05,
                  max_iter=40, rel_bracket=0.005):
    """Tune the period (duty cycles untouched) until the marginal peaks coincide.

    Regula falsi (Illinois variant) on the signed signal-minus-idler peak
    separation inside period * (1 +- rel_bracket).
    """
    history = []

    def sep(period):
        s = peak_separation(profile.with_period(period), cfg, model, grid, pump, filt)
        history.append((period, s))
        return s

    p0 = profile.period
    s0 = sep(p0)
    if abs(s0) < tol_nm:
        return PeriodAdjustment(profile, s0, 1, history)
    a, b = p0 * (1 - rel_bracket), p0 * (1 + rel_bracket)
    fa, fb = sep(a), sep(b)
    # narrow the bracket to the half containing the root
    if np.sign(fa) != np.sign(s0):
        b, fb = p0, s0
    elif np.sign(fb) != np.sign(s0):
        a, fa = p0, s0
    else:
        best = min(history, key=lambda x: abs(x[1]))
        warnings.warn("no sign change of the peak separation in the period bracket; "
                      "returning best period found", DesignWarning, stacklevel=2)
        return PeriodAdjustment(profile.with_period(best[0]), best[1], len(history),
                                history, converged=False)
    side = 0
    for _ in range(max_iter):
        c = (a * fb - b * fa) / (fb - fa)
        fc = sep(c)
        if abs(fc) < tol_nm:
            break
        if np.sign(fc) == np.sign(fa):
            a, fa = c, fc
            if side == -1:
                fb /= 2
            side = -1
        else:
            b, fb = c, fc
            if side == 1:
                fa /= 2
            side = 1
    best = min(history, key=lambda x: abs(x[1]))
    ok = abs(best[1]) < tol_nm
    if not ok:
        warnings.warn(f"period adjustment stopped at {best[1]:.3g} nm separation",
                      DesignWarning, stacklevel=2)
    return PeriodAdjustment(profile.with_period(best[0]), best[1], len(history), history, ok)


@dataclass
class PumpSelection:
    sigma_p: float
    purity: float
    scan: list
    unimodal: bool = True


def _filtered_purity(pm, grid, omega_p0, sigma, filt):
    f = pump_matrix(grid, GaussianPump(omega_p0, sigma)) * pm
    jsa = Jsa(f, grid)
    if filt is not None:
        jsa = apply_filter(jsa, filt, filt)
    return purity(jsa)


def select_pump_bandwidth(profile, cfg, model, grid, filt, sigma_guess, pm=None,
                          lo_factor=0.2, hi_factor=5.0, coarse_points=9, tol=1e-3):
    """Pump bandwidth maximizing the filtered purity over [0.2, 5] x sigma_guess.

    A coarse log-spaced scan checks unimodality; golden-section search then
    refines around the best coarse point. Non-unimodal scans fall back to a
    dense 64-point scan. ``pm`` overrides the phase-matching matrix.
    """
    if pm is None:
        pm = phase_matching_matrix(grid, profile, cfg, model)
    omega_p0 = cfg.omega_p0
    scan = []

    def pur(log_s):
        s = math.exp(log_s)
        p = _filtered_purity(pm, grid, omega_p0, s, filt)
        scan.append((s, p))
        return p

    lo, hi = math.log(lo_factor * sigma_guess), math.log(hi_factor * sigma_guess)
    xs = np.linspace(lo, hi, coarse_points)
    ys = [pur(x) for x in xs]
    k = int(np.argmax(ys))
    d = np.diff(ys)
    unimodal = bool(np.all(d[:k] >= 0) and np.all(d[k:] <= 0))
    if not unimodal:
        warnings.warn("filtered purity is not unimodal in the pump bandwidth; "
                      "using a dense scan", DesignWarning, stacklevel=2)
        xs = np.linspace(lo, hi, 64)
        ys = [pur(x) for x in xs]
        k = int(np.argmax(ys))
        return PumpSelection(math.exp(xs[k]), ys[k], sorted(scan), unimodal=False)
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, len(xs) - 1)]
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = pur(c), pur(e)
    while b - a > tol:
        if fc > fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = pur(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = pur(e)
    s_best, p_best = max(scan, key=lambda x: x[1])
    return PumpSelection(s_best, p_best, sorted(scan), unimodal=True)
