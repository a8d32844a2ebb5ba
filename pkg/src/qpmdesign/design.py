"""End-to-end poling design: initialize, learn, fix degeneracy, pick the pump."""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dispersion import (
    InteractionConfig,
    gvm_slopes,
    load_model,
    nm_from_omega,
    nominal_period,
)
from .errors import ConfigError, QpmError
from .jsa import (
    FrequencyGrid,
    GaussianPump,
    apply_filter,
    compute_jsa,
    dump_jsa,
    marginal_peaks,
    marginal_widths,
    purity,
    span_nm_to_omega,
    SpectralFilter,
)
from .optimizer import (
    DesignWarning,
    LearnRunConfig,
    adjust_period,
    implied_pump_sigma,
    initial_target,
    run_learning_loop,
    select_pump_bandwidth,
)
from .poling import export_profile, gaussian_init, periodic_profile

log = logging.getLogger(__name__)

DEFAULT_FILTERS_NM = (8.0, 16.0, 25.0, 40.0)
FILTER_CONVENTION = "same filter on signal and idler; rectangular edges inclusive; gaussian bandwidth = intensity FWHM"
ELLIPTICITY_THRESHOLD = 0.02


@dataclass
class DesignRequest:
    wavelength_nm: float
    length_mm: float = 10.0
    lambda_min_um: float = 0.0
    filters_nm: tuple = DEFAULT_FILTERS_NM
    filter_shape: str = "rectangular"
    grid_points: int = 512
    learn: LearnRunConfig = field(default_factory=LearnRunConfig)
    dispersion: str | None = None
    init_width_fraction: float = 0.25
    pump_axis: str = "y"
    signal_axis: str = "y"
    idler_axis: str = "z"

    def __post_init__(self):
        if isinstance(self.learn, dict):
            self.learn = LearnRunConfig(**self.learn)
        self.filters_nm = tuple(float(b) for b in self.filters_nm)
        if not self.filters_nm:
            raise ConfigError("at least one filter bandwidth is required")
        if self.grid_points < 64:
            raise ConfigError("grid needs at least 64 points per axis")
        if self.lambda_min_um < 0:
            raise ConfigError("minimum domain length must be >= 0")
        if not self.init_width_fraction > 0:
            raise ConfigError("initial Gaussian width must be positive")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "learn" in data and isinstance(data["learn"], dict):
            data["learn"] = LearnRunConfig(**data["learn"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def interaction(self):
        return InteractionConfig.for_degenerate(
            self.wavelength_nm, pump_axis=self.pump_axis, signal_axis=self.signal_axis,
            idler_axis=self.idler_axis, length_mm=self.length_mm,
        )

    def filters(self):
        return [SpectralFilter(self.filter_shape, self.wavelength_nm, bw)
                for bw in self.filters_nm]

    def to_dict(self):
        d = asdict(self)
        d["filters_nm"] = list(self.filters_nm)
        return d


def _check_wavelength(request, model):
    cfg = request.interaction()
    model.check_window([cfg.pump_nm, request.wavelength_nm])
    return cfg


def filter_grid(center_nm, filt, marginal_sigma_nm, points):
    """Square grid spanning max(3 x filter bandwidth, 8 x marginal sigma)."""
    span = max(3.0 * filt.bandwidth_nm, 8.0 * marginal_sigma_nm)
    return FrequencyGrid.centered(center_nm, center_nm, span, span, points)


def pilot_marginal_sigma(profile, pump, cfg, model, center_nm, slice_sigma_nm, points=256):
    """Largest marginal standard deviation (nm) on a coarse, wide grid."""
    span = 16.0 * slice_sigma_nm
    grid = FrequencyGrid.centered(center_nm, center_nm, span, span, points)
    return max(marginal_widths(compute_jsa(grid, pump, profile, cfg, model)))


def omega_sigma_to_nm(sigma, center_nm):
    return sigma / span_nm_to_omega(center_nm, 1.0)


@dataclass
class Evaluation:
    """Filtered purities of one profile under one Gaussian pump."""

    rows: list
    sigma_p: float
    marginal_sigma_nm: float


def evaluate_profile(profile, cfg, model, filters, points=512, sigma_p=None,
                     marginal_sigma_nm=None):
    """Filtered purity for each filter.

    Missing ``sigma_p`` is chosen by the purity scan on the narrowest filter,
    seeded from a Gaussian fit of the profile's slice; missing
    ``marginal_sigma_nm`` comes from a pilot JSA. Deterministic in its inputs.
    """
    center = cfg.degenerate_nm
    if sigma_p is None or marginal_sigma_nm is None:
        target = initial_target(profile, cfg, model)
        slice_sigma_nm = omega_sigma_to_nm(target.sigma_t, center)
        guess = implied_pump_sigma(target, cfg, model)
        marg = pilot_marginal_sigma(profile, GaussianPump(cfg.omega_p0, guess), cfg, model,
                                    center, slice_sigma_nm)
        if sigma_p is None:
            narrow = _narrowest(filters)
            grid = filter_grid(center, narrow, marg, points)
            sigma_p = select_pump_bandwidth(profile, cfg, model, grid, narrow, guess).sigma_p
            marg = pilot_marginal_sigma(profile, GaussianPump(cfg.omega_p0, sigma_p), cfg,
                                        model, center, slice_sigma_nm)
        if marginal_sigma_nm is None:
            marginal_sigma_nm = marg
    pump = GaussianPump(cfg.omega_p0, sigma_p)
    rows = []
    for filt in filters:
        grid = filter_grid(center, filt, marginal_sigma_nm, points)
        jsa = apply_filter(compute_jsa(grid, pump, profile, cfg, model), filt, filt)
        rows.append({
            "filter_shape": filt.shape,
            "filter_bw_nm": filt.bandwidth_nm,
            "purity": purity(jsa),
            "grid": grid.describe(),
        })
    return Evaluation(rows, float(sigma_p), float(marginal_sigma_nm))


@contextmanager
def _step(label):
    try:
        yield
    except QpmError as exc:
        raise type(exc)(f"{label}: {exc}") from exc


def _narrowest(filters):
    return min(filters, key=lambda f: f.bandwidth_nm)


def design(request: DesignRequest, out_dir=None, callback=None):
    """Run the full recipe and return the report dict; exports go to ``out_dir``."""
    t_start = time.perf_counter()
    timing = {}
    model = load_model(request.dispersion)
    cfg = _check_wavelength(request, model)
    filters = request.filters()
    center = request.wavelength_nm
    captured = []

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DesignWarning)

        with _step("step 1 (initialization)"):
            period0 = nominal_period(cfg, model)
            n = math.floor(cfg.length_m / period0 + 1e-9)
            min_domain = request.lambda_min_um * 1e-6
            if not min_domain < period0 / 2:
                raise ConfigError(
                    f"minimum domain {request.lambda_min_um} um must be below half the "
                    f"period ({period0 * 5e5:.3f} um)"
                )
            profile0 = gaussian_init(n, period0, request.init_width_fraction * cfg.length_m,
                                     min_domain, cfg.length_m)
            target0 = initial_target(profile0, cfg, model)

        t = time.perf_counter()
        with _step("steps 2-3 (learning)"):
            learned = run_learning_loop(profile0, request.learn, cfg, model, target=target0,
                                        callback=callback)
        timing["learning_s"] = time.perf_counter() - t

        t = time.perf_counter()
        with _step("step 4 (period adjustment)"):
            step_filter = _narrowest(filters)
            sigma_guess = implied_pump_sigma(learned.target, cfg, model)
            slice_sigma_nm = omega_sigma_to_nm(learned.target.sigma_t, center)
            pump_guess = GaussianPump(cfg.omega_p0, sigma_guess)
            marg = pilot_marginal_sigma(learned.profile, pump_guess, cfg, model, center,
                                        slice_sigma_nm)
            grid4 = filter_grid(center, step_filter, marg, request.grid_points)
            sep_before = _separation(learned.profile, cfg, model, grid4, pump_guess,
                                     step_filter)
            adj = adjust_period(learned.profile, cfg, model, grid4, pump_guess, step_filter)
            profile = adj.profile
        timing["period_adjust_s"] = time.perf_counter() - t

        t = time.perf_counter()
        with _step("pump bandwidth selection"):
            sel = select_pump_bandwidth(profile, cfg, model, grid4, step_filter, sigma_guess)
            pump = GaussianPump(cfg.omega_p0, sel.sigma_p)
            sep_after = _separation(profile, cfg, model, grid4, pump, step_filter)
            if abs(sep_after) >= 0.05:
                # re-centre under the selected pump
                adj = adjust_period(profile, cfg, model, grid4, pump, step_filter)
                profile = adj.profile
                sep_after = adj.separation_nm
        timing["pump_select_s"] = time.perf_counter() - t

        t = time.perf_counter()
        with _step("evaluation"):
            marg = pilot_marginal_sigma(profile, pump, cfg, model, center, slice_sigma_nm)
            opt_eval = evaluate_profile(profile, cfg, model, filters, request.grid_points,
                                        sel.sigma_p, marg)
            baseline = periodic_profile(period0, cfg.length_m, min_domain)
            base_eval = evaluate_profile(baseline, cfg, model, filters, request.grid_points)
            unfiltered = compute_jsa(grid4, pump, profile, cfg, model)
            sig_s, sig_i = marginal_widths(unfiltered)
        timing["evaluation_s"] = time.perf_counter() - t
        captured = [str(w.message) for w in caught if issubclass(w.category, DesignWarning)]

    purity_table = []
    for o, b in zip(opt_eval.rows, base_eval.rows):
        purity_table.append({
            "filter_shape": o["filter_shape"],
            "filter_bw_nm": o["filter_bw_nm"],
            "purity": o["purity"],
            "baseline_purity": b["purity"],
            "grid": o["grid"],
        })
    gs, gi = gvm_slopes(cfg, model)
    report = {
        "version": __version__,
        "config": request.to_dict(),
        "dispersion": {
            "crystal": model.crystal_name,
            "file": model.source_path,
            "sha256": model.source_hash,
            "formula_id": model.formula_id,
        },
        "interaction": asdict(cfg),
        "slopes": {"gamma_s": gs, "gamma_i": gi},
        "nominal_period_m": period0,
        "n_periods": n,
        "learning": {
            "iterations": learned.iterations,
            "converged": learned.converged,
            "samples": int(learned.omega_s.size),
            "sample_span_nm": [float(nm_from_omega(learned.omega_s[-1])),
                               float(nm_from_omega(learned.omega_s[0]))],
            "initial_target": target0.describe(),
        },
        "cost_history": [float(c) for c in learned.cost_history],
        "final_target": learned.target.describe(),
        "final_period_m": profile.period,
        "step4": {
            "separation_before_nm": sep_before,
            "separation_after_nm": sep_after,
            "evaluations": adj.evaluations,
        },
        "pump": {"sigma_p": sel.sigma_p, "sigma_p_guess": sigma_guess,
                 "selection_filter_bw_nm": step_filter.bandwidth_nm},
        "baseline_pump": {"sigma_p": base_eval.sigma_p},
        "marginal_sigma_nm": {"signal": sig_s, "idler": sig_i},
        "evaluation": {"sigma_p": opt_eval.sigma_p,
                       "marginal_sigma_nm": opt_eval.marginal_sigma_nm},
        "elliptical": bool(abs(sig_s - sig_i) / max(sig_s, sig_i) > ELLIPTICITY_THRESHOLD),
        "filter_convention": FILTER_CONVENTION,
        "grid_points": request.grid_points,
        "purity_table": purity_table,
        "warnings": captured,
    }
    report["timing"] = {**timing, "total_s": time.perf_counter() - t_start}
    if out_dir is not None:
        report["files"] = write_outputs(report, profile, out_dir, model,
                                        jsa=apply_filter(unfiltered, step_filter, step_filter))
    return report, profile


def _separation(profile, cfg, model, grid, pump, filt):
    jsa = apply_filter(compute_jsa(grid, pump, profile, cfg, model), filt, filt)
    ls, li = marginal_peaks(jsa)
    return ls - li


def write_outputs(report, profile, out_dir, model, jsa=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    csv_path, sidecar = export_profile(
        profile, out_dir / "profile.csv",
        {"dispersion_sha256": model.source_hash,
         "design_wavelength_nm": report["config"]["wavelength_nm"],
         "pump_nm": report["interaction"]["pump_nm"],
         "length_mm": report["config"]["length_mm"],
         "sigma_p": report["evaluation"]["sigma_p"],
         "marginal_sigma_nm": report["evaluation"]["marginal_sigma_nm"],
         "grid_points": report["grid_points"]},
    )
    files["profile_csv"] = str(csv_path)
    files["profile_meta"] = str(sidecar)
    cost_path = out_dir / "cost_history.csv"
    with open(cost_path, "w") as fh:
        fh.write("iteration,cost\n")
        for i, c in enumerate(report["cost_history"]):
            fh.write(f"{i},{c!r}\n")
    files["cost_history_csv"] = str(cost_path)
    if jsa is not None:
        files.update({f"jsa_{k}": v for k, v in
                      dump_jsa(jsa, out_dir, stem="jsa_filtered", log=True).items()})
    report_path = out_dir / "report.json"
    files["report"] = str(report_path)
    report["files"] = files
    report_path.write_text(json.dumps(report, indent=2, default=_json_default))
    return files


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
