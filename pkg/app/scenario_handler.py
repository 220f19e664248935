"""
Scenario Handler Module

This module orchestrates experiments end to end:
- Parsing flat key = value scenario configs and shipped presets
- Building initial data (envelopes, shifted solitons, superposition)
- Time stepping with per-row diagnostics and snapshot export
- Writing the series CSV, manifest and rendered summary of a run
- Refinement studies against exact solutions and phase-difference sweeps
"""

import os
import csv
import math
import time
import uuid
import logging
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pytz
from jinja2 import Environment, FileSystemLoader
from pydantic import BaseModel, Field, ValidationError

from app import __version__
from app.config import Settings, get_settings
from app.diagnostics import (DEFAULT_TRACK_HALF_WIDTH, DiagnosticsRecord, TrackRecord,
                             breathing_period, component_masses, discrete_invariants,
                             energy, fitted_speeds, momentum, net_polarization,
                             polarization, polarization_record, relative_drift,
                             fit_energy_normalization, track_centers)
from app.envelope_gen import export_envelope_csv, generate_envelope
from app.errors import (ConfigInvalid, DegenerateWindow, NoOscillation, OracleUnavailable,
                        SolverError, TrackLost)
from app.models import EnvelopePair, EnvelopeParams, FieldState, Grid, ModelParams, SolitonSpec
from app.pde_core import (DEFAULT_OVERLAP_TOLERANCE, IterationControl, assemble_soliton,
                          evolve, exact_soliton, export_snapshot_csv, superpose)
from app.run_registry import RunRegistry

logger = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates")
SERIES_COLUMNS = list(DiagnosticsRecord.model_fields.keys())


class ScenarioConfig(BaseModel):
    """A complete experiment description."""
    name: str = Field("scenario", description="Run name, used in run ids")
    preset: Optional[str] = Field(None, description="Preset this config was loaded from")
    model: ModelParams
    grid: Grid
    solitons: List[SolitonSpec] = Field(default_factory=list)
    t_final: float = Field(..., gt=0, description="Final time")
    phase_diff_deg: float = Field(0.0, description="Phase difference [delta] = delta_r - delta_l in degrees")
    phase_mode: Literal["global", "component"] = "global"
    snapshot_times: List[float] = Field(default_factory=list)
    series_every: int = Field(10, ge=1, description="Steps between series rows")
    output_dir: Optional[str] = None
    iteration: IterationControl = Field(default_factory=IterationControl)
    overlap_tolerance: float = Field(DEFAULT_OVERLAP_TOLERANCE, gt=0)
    track_half_width: float = Field(DEFAULT_TRACK_HALF_WIDTH, gt=0)

    def check(self) -> None:
        """Validate cross-field rules.

        Raises:
            ConfigInvalid: If the soliton count is not 1 or 2.
        """
        if not 1 <= len(self.solitons) <= 2:
            raise ConfigInvalid(f"expected 1 or 2 solitons, got {len(self.solitons)}", field="solitons")

    def phased_solitons(self) -> List[SolitonSpec]:
        """Solitons ordered left to right with the phase difference applied to the right one."""
        ordered = sorted(self.solitons, key=lambda s: s.X)
        if len(ordered) < 2 or self.phase_diff_deg == 0.0:
            return ordered
        shift = math.radians(self.phase_diff_deg)
        right = ordered[-1]
        update = {"delta_phi": right.delta_phi + shift}
        if self.phase_mode == "global":
            update["delta_psi"] = right.delta_psi + shift
        return ordered[:-1] + [right.model_copy(update=update)]


class RunArtifacts(BaseModel):
    run_id: str
    output_dir: str
    series_path: str
    snapshot_paths: List[str]
    envelope_paths: List[str] = Field(default_factory=list)
    summary_path: str
    manifest_path: str
    summary: Dict[str, Any]


class RefinementRow(BaseModel):
    level: int
    h: float
    dtau: float
    m: int
    error: float
    order: Optional[float] = None


class SweepRow(BaseModel):
    phase_diff_deg: float
    status: Literal["ok", "failed"]
    sweep_id: Optional[str] = None
    run_id: Optional[str] = None
    output_dir: Optional[str] = None
    energy: Optional[float] = None
    energy_disc: Optional[float] = None
    energy_normalized: Optional[float] = None
    mass: Optional[float] = None
    momentum_min: Optional[float] = None
    momentum_max: Optional[float] = None
    polarization_amplitude_deg: Optional[float] = None
    error: Optional[str] = None


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_FLOAT_KEYS = {"beta", "alpha1", "gamma", "gamma_imag", "L1", "L2", "h", "dtau", "t_final",
               "phase_diff", "overlap_tolerance", "track_half_width", "update_tol", "residual_tol"}
_INT_KEYS = {"m", "series_every", "max_iterations"}
_BOOL_KEYS = {"check_residual"}
_STR_KEYS = {"name", "preset", "phase_mode", "output_dir", "coupling", "predictor"}
_SOLITON_FLOAT = {"X", "c", "n_psi", "n_phi", "delta_psi", "delta_phi", "delta_psi_rad", "delta_phi_rad"}


def _parse_bool(value: str, field: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigInvalid(f"expected a boolean, got {value!r}", field=field)


def _parse_float(value: str, field: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigInvalid(f"expected a number, got {value!r}", field=field)


def _parse_int(value: str, field: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigInvalid(f"expected an integer, got {value!r}", field=field)


def _read_pairs(text: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {number} is not 'key = value': {raw.strip()!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def parse_config_text(text: str, overrides: Optional[Dict[str, str]] = None) -> ScenarioConfig:
    """Parse a flat ``key = value`` scenario config.

    Args:
        text: Config text; ``#`` starts a comment.
        overrides: Extra ``key -> value`` pairs applied after the text.

    Returns:
        The validated ScenarioConfig.

    Raises:
        ConfigInvalid: On unknown keys, malformed values or failed validation.
    """
    pairs = _read_pairs(text)
    pairs.update({k: str(v) for k, v in (overrides or {}).items()})

    scalars: Dict[str, Any] = {}
    solitons: Dict[int, Dict[str, Any]] = {}
    snapshot_times: List[float] = []
    for key, value in pairs.items():
        if key.startswith("soliton."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit():
                raise ConfigInvalid("expected soliton.<index>.<field>", field=key)
            index, attr = int(parts[1]), parts[2]
            entry = solitons.setdefault(index, {})
            if attr in _SOLITON_FLOAT:
                number = _parse_float(value, key)
                if attr in ("delta_psi", "delta_phi"):
                    entry[attr] = math.radians(number)
                elif attr.endswith("_rad"):
                    entry[attr[:-4]] = number
                else:
                    entry[attr] = number
            elif attr == "linear":
                entry[attr] = _parse_bool(value, key)
            else:
                raise ConfigInvalid("unknown soliton field", field=key)
        elif key == "snapshot_times":
            snapshot_times = [_parse_float(v, key) for v in value.split(",") if v.strip()]
        elif key in _FLOAT_KEYS:
            scalars[key] = _parse_float(value, key)
        elif key in _INT_KEYS:
            scalars[key] = _parse_int(value, key)
        elif key in _BOOL_KEYS:
            scalars[key] = _parse_bool(value, key)
        elif key in _STR_KEYS:
            scalars[key] = value
        else:
            raise ConfigInvalid("unknown key", field=key)

    for field in ("alpha1", "L1", "L2", "dtau", "t_final"):
        if field not in scalars:
            raise ConfigInvalid("missing required key", field=field)
    if "m" not in scalars and "h" not in scalars:
        raise ConfigInvalid("one of 'h' or 'm' is required", field="h")

    try:
        model = ModelParams(beta=scalars.get("beta", 1.0), alpha1=scalars["alpha1"],
                            gamma_re=scalars.get("gamma", 0.0), gamma_im=scalars.get("gamma_imag", 0.0))
        if "m" in scalars:
            grid = Grid(L1=scalars["L1"], L2=scalars["L2"], m=scalars["m"], dtau=scalars["dtau"])
        else:
            grid = Grid.from_spacing(scalars["L1"], scalars["L2"], scalars["h"], scalars["dtau"])
        iteration = IterationControl(**{k: scalars[k] for k in
                                        ("update_tol", "residual_tol", "max_iterations",
                                         "coupling", "predictor", "check_residual") if k in scalars})
        specs = [SolitonSpec(**solitons[i]) for i in sorted(solitons)]
        optional = {k: scalars[k] for k in ("name", "preset", "phase_mode", "output_dir",
                                            "series_every", "overlap_tolerance", "track_half_width")
                    if k in scalars}
        config = ScenarioConfig(model=model, grid=grid, solitons=specs, t_final=scalars["t_final"],
                                phase_diff_deg=scalars.get("phase_diff", 0.0),
                                snapshot_times=snapshot_times, iteration=iteration, **optional)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigInvalid(first["msg"], field=".".join(str(p) for p in first["loc"]) or None)
    config.check()
    return config


def load_config(path: str, overrides: Optional[Dict[str, str]] = None) -> ScenarioConfig:
    logger.info(f"Loading scenario config from {path}")
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigInvalid(f"cannot read config file: {e}", field="config")
    return parse_config_text(text, overrides)


def list_presets(preset_dir: Optional[str] = None) -> List[str]:
    preset_dir = preset_dir or get_settings().preset_dir
    if not os.path.isdir(preset_dir):
        logger.warning(f"Preset directory {preset_dir} does not exist")
        return []
    return sorted(name[:-4] for name in os.listdir(preset_dir) if name.endswith(".cfg"))


def load_preset(name: str, preset_dir: Optional[str] = None,
                overrides: Optional[Dict[str, str]] = None) -> ScenarioConfig:
    """Load a shipped preset by name.

    Raises:
        ConfigInvalid: If the preset does not exist.
    """
    preset_dir = preset_dir or get_settings().preset_dir
    path = os.path.join(preset_dir, f"{name}.cfg")
    if not os.path.isfile(path):
        raise ConfigInvalid(f"unknown preset {name!r}; available: {', '.join(list_presets(preset_dir))}",
                            field="preset")
    merged = {"preset": name}
    merged.update(overrides or {})
    config = load_config(path, merged)
    logger.info(f"Preset {name} loaded")
    return config


def config_to_text(config: ScenarioConfig) -> str:
    """Serialize a config so that :func:`parse_config_text` restores it exactly."""
    lines = [
        f"name = {config.name}",
        f"beta = {config.model.beta!r}",
        f"alpha1 = {config.model.alpha1!r}",
        f"gamma = {config.model.gamma_re!r}",
        f"gamma_imag = {config.model.gamma_im!r}",
        f"L1 = {config.grid.L1!r}",
        f"L2 = {config.grid.L2!r}",
        f"m = {config.grid.m}",
        f"dtau = {config.grid.dtau!r}",
        f"t_final = {config.t_final!r}",
        f"phase_diff = {config.phase_diff_deg!r}",
        f"phase_mode = {config.phase_mode}",
        f"series_every = {config.series_every}",
        f"overlap_tolerance = {config.overlap_tolerance!r}",
        f"track_half_width = {config.track_half_width!r}",
        f"update_tol = {config.iteration.update_tol!r}",
        f"residual_tol = {config.iteration.residual_tol!r}",
        f"max_iterations = {config.iteration.max_iterations}",
        f"coupling = {config.iteration.coupling}",
        f"predictor = {config.iteration.predictor}",
        f"check_residual = {str(config.iteration.check_residual).lower()}",
    ]
    if config.preset:
        lines.append(f"preset = {config.preset}")
    if config.output_dir:
        lines.append(f"output_dir = {config.output_dir}")
    if config.snapshot_times:
        lines.append("snapshot_times = " + ", ".join(repr(t) for t in config.snapshot_times))
    for index, spec in enumerate(config.solitons, start=1):
        prefix = f"soliton.{index}."
        lines += [
            f"{prefix}X = {spec.X!r}",
            f"{prefix}c = {spec.c!r}",
            f"{prefix}n_psi = {spec.n_psi!r}",
            f"{prefix}n_phi = {spec.n_phi!r}",
            f"{prefix}delta_psi_rad = {spec.delta_psi!r}",
            f"{prefix}delta_phi_rad = {spec.delta_phi!r}",
            f"{prefix}linear = {str(spec.linear).lower()}",
        ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def build_initial_state(config: ScenarioConfig, envelope_dir: Optional[str] = None) -> FieldState:
    """Generate envelopes, place every soliton and superpose them.

    Args:
        config: Scenario to initialize.
        envelope_dir: When given, the envelope of soliton k (left to right)
            is written there as ``envelope_<k>.csv``.
    """
    config.check()
    cache: Dict[Tuple[float, float, float, bool], EnvelopePair] = {}
    states = []
    for k, spec in enumerate(config.phased_solitons(), start=1):
        # Envelopes depend on c only through c^2.
        key = (spec.n_psi, spec.n_phi, spec.c ** 2, spec.linear)
        if key not in cache:
            cache[key] = generate_envelope(EnvelopeParams.from_soliton(spec, config.model),
                                           config.grid, linear=spec.linear)
        if envelope_dir is not None:
            export_envelope_csv(cache[key], os.path.join(envelope_dir, f"envelope_{k}.csv"))
        states.append(assemble_soliton(cache[key], spec, config.grid))
    return superpose(states, config.overlap_tolerance)


class _SeriesRecorder:
    """Collects diagnostics rows and center tracks along a run."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.seeds = [s.X for s in config.phased_solitons()]
        self.tracks: List[TrackRecord] = []
        self.rows: List[DiagnosticsRecord] = []
        self._warned = False

    def _warn_once(self, message: str) -> None:
        if not self._warned:
            logger.warning(message)
            self._warned = True

    def record(self, state: FieldState, iterations: int) -> DiagnosticsRecord:
        config, grid, params = self.config, self.config.grid, self.config.model
        theta_l = theta_r = x_l = x_r = math.nan
        try:
            track = track_centers(state, grid, self.tracks, self.seeds, config.track_half_width)
            self.tracks.append(track)
            x_l = track.center_left
            x_r = track.center_right if track.center_right is not None else math.nan
            pol = polarization_record(state, grid, track, config.track_half_width)
            theta_l, theta_r = pol.theta_left, pol.theta_right
        except (TrackLost, DegenerateWindow) as e:
            self._warn_once(f"Tracking degraded at t={state.time:.4f}: {e}")
        try:
            theta_total = polarization(state, grid)
        except DegenerateWindow:
            theta_total = math.nan
        m_psi, m_phi = component_masses(state, params, grid)
        inv = discrete_invariants(state, params, grid)
        row = DiagnosticsRecord(
            t=state.time, M=m_psi + m_phi, M_psi=m_psi, M_phi=m_phi,
            P=momentum(state, grid), E=energy(state, params, grid),
            theta_l=theta_l, theta_r=theta_r, theta_total=theta_total, x_l=x_l, x_r=x_r,
            M_disc=inv.mass, P_disc=inv.momentum, E_disc=inv.energy, iterations=iterations,
        )
        self.rows.append(row)
        return row

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def _clean(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _nan_extrema(values: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return None, None
    return float(np.min(finite)), float(np.max(finite))


def summarize_series(config: ScenarioConfig, recorder: _SeriesRecorder,
                     iterations: Sequence[int]) -> Dict[str, Any]:
    """Reduce the recorded series to the run summary."""
    params = config.model
    t = recorder.column("t")
    last = recorder.rows[-1]
    summary: Dict[str, Any] = {
        "final_time": last.t,
        "mass": last.M,
        "momentum": last.P,
        "energy": last.E,
        "initial_energy": recorder.rows[0].E,
        "mass_disc": last.M_disc,
        "momentum_disc": last.P_disc,
        "energy_disc": last.E_disc,
        "momentum_max_abs": float(np.max(np.abs(recorder.column("P")))),
        "momentum_min": float(np.min(recorder.column("P"))),
        "momentum_max": float(np.max(recorder.column("P"))),
        "gamma_complex": params.has_gain,
    }
    if params.has_gain:
        summary.update(drift_mass=None, drift_energy=None, drift_momentum_abs=None)
    else:
        p = recorder.column("P_disc")
        summary.update(
            drift_mass=relative_drift(recorder.column("M_disc")),
            drift_energy=relative_drift(recorder.column("E_disc")),
            drift_momentum_abs=float(np.max(np.abs(p - p[0]))),
        )

    period = None
    if params.gamma_re != 0.0:
        summary["expected_breathing_period"] = math.pi / abs(params.gamma_re)
    try:
        period = breathing_period(t, recorder.column("M_psi"))
    except NoOscillation as e:
        logger.info(f"No breathing period: {e}")
    summary["breathing_period"] = period

    pre, post = fitted_speeds(recorder.tracks)
    summary["speeds_pre"] = pre
    summary["speeds_post"] = post

    for name in ("theta_l", "theta_r", "theta_total"):
        low, high = _nan_extrema(np.degrees(recorder.column(name)))
        summary[f"{name}_min_deg"], summary[f"{name}_max_deg"] = low, high

    spread = None
    if period:
        _, net = net_polarization(t, recorder.column("theta_total"), period)
        if net.size:
            spread = float(np.degrees(np.max(net) - np.min(net)))
    summary["net_polarization_spread_deg"] = spread

    summary["inner_iterations_median"] = float(np.median(iterations)) if len(iterations) else 0.0
    summary["inner_iterations_max"] = int(np.max(iterations)) if len(iterations) else 0
    return {k: _clean(v) for k, v in summary.items()}


def _render_summary(context: Dict[str, Any]) -> str:
    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), keep_trailing_newline=True)
    return env.get_template("summary.txt.j2").render(**context)


def _write_series(rows: Sequence[DiagnosticsRecord], path: str) -> None:
    data = np.array([[getattr(r, c) for c in SERIES_COLUMNS] for r in rows], dtype=float)
    np.savetxt(path, data, delimiter=",", header=",".join(SERIES_COLUMNS), comments="", fmt="%.12g")


def _snapshot_name(t: float) -> str:
    return f"snapshot_t{t:09.4f}.csv"


def run_scenario(config: ScenarioConfig, output_dir: Optional[str] = None,
                 registry: Optional[RunRegistry] = None,
                 settings: Optional[Settings] = None) -> RunArtifacts:
    """Run one scenario and write its outputs.

    Args:
        config: Scenario to run.
        output_dir: Output directory; defaults to the config's, then
            ``<SOLVER_OUTPUT_DIR>/<run_id>``.
        registry: Registry to record the run in, if any.
        settings: Settings; read from the environment when None.

    Returns:
        Paths of the written files and the summary values.

    Raises:
        ConfigInvalid: If the config fails validation.
        SolverError: Any generator or stepper failure.
    """
    config.check()
    settings = settings or get_settings()
    run_id = f"{config.name}-{uuid.uuid4().hex[:8]}"
    out = output_dir or config.output_dir or os.path.join(settings.output_dir, run_id)
    os.makedirs(out, exist_ok=True)
    params, grid = config.model, config.grid
    logger.info(f"Starting run {run_id}: {len(config.solitons)} soliton(s), m={grid.m}, h={grid.h:.4g}, "
                f"dtau={grid.dtau:.4g}, t_final={config.t_final}, phase_diff={config.phase_diff_deg} deg")

    ctrl = config.iteration
    if settings.assert_scheme and not params.has_gain:
        ctrl = ctrl.model_copy(update={"check_residual": True})

    started = time.perf_counter()
    state = build_initial_state(config, envelope_dir=out)
    recorder = _SeriesRecorder(config)
    recorder.record(state, 0)

    pending = sorted(config.snapshot_times)
    snapshot_paths: List[str] = []

    def flush_snapshots(current: FieldState) -> None:
        while pending and current.time >= pending[0] - 0.5 * grid.dtau:
            target = pending.pop(0)
            path = os.path.join(out, _snapshot_name(target))
            snapshot_paths.append(export_snapshot_csv(current, grid, path))

    flush_snapshots(state)
    n_steps = int(round((config.t_final - state.time) / grid.dtau))
    iterations: List[int] = []
    for index, state, report in evolve(state, params, grid, config.t_final, ctrl):
        iterations.append(report.iterations)
        if index % config.series_every == 0 or index == n_steps:
            recorder.record(state, report.iterations)
        flush_snapshots(state)
    wall_time = time.perf_counter() - started

    series_path = os.path.join(out, "series.csv")
    _write_series(recorder.rows, series_path)

    summary = summarize_series(config, recorder, iterations)
    summary["steps"] = len(iterations)
    summary["wall_time_s"] = wall_time

    manifest = {
        "run_id": run_id,
        "name": config.name,
        "preset": config.preset,
        "code_version": __version__,
        "created_at": datetime.now(pytz.UTC).isoformat(),
        "output_dir": os.path.abspath(out),
        "h": grid.h,
        "config": config.model_dump(mode="json"),
    }
    manifest_path = os.path.join(out, "manifest.cfg")
    with open(manifest_path, "w") as f:
        f.write(f"# run_id = {run_id}\n# code_version = {__version__}\n"
                f"# created_at = {manifest['created_at']}\n# h = {grid.h!r}\n")
        f.write(config_to_text(config))

    summary_path = os.path.join(out, "summary.txt")
    with open(summary_path, "w") as f:
        f.write(_render_summary({"run_id": run_id, "config": config, "summary": summary,
                                 "version": __version__, "h": grid.h}))

    if registry is not None:
        registry.record_run(manifest, summary)

    logger.info(f"Run {run_id} finished in {wall_time:.1f}s "
                f"(median inner iterations {summary['inner_iterations_median']}) -> {out}")
    envelope_paths = [os.path.join(out, f"envelope_{k}.csv") for k in range(1, len(config.solitons) + 1)]
    return RunArtifacts(run_id=run_id, output_dir=out, series_path=series_path,
                        snapshot_paths=snapshot_paths, summary_path=summary_path,
                        envelope_paths=envelope_paths,
                        manifest_path=manifest_path, summary=summary)


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

def run_refinement_study(config: ScenarioConfig, levels: int = 3) -> List[RefinementRow]:
    """Errors against the exact solution under simultaneous halving of h and dtau.

    Raises:
        ConfigInvalid: If ``levels`` < 3.
        OracleUnavailable: For two-soliton scenarios, complex Gamma or beta != 1.
    """
    config.check()
    if levels < 3:
        raise ConfigInvalid("at least three refinement levels are needed", field="levels")
    if len(config.solitons) != 1:
        raise OracleUnavailable("Collision scenarios have no closed-form solution")
    if config.model.has_gain or config.model.beta != 1.0:
        raise OracleUnavailable("Exact solutions need real Gamma and beta = 1")

    spec = config.phased_solitons()[0]
    params, grid = config.model, config.grid
    rows: List[RefinementRow] = []
    for level in range(levels):
        state = exact_soliton(params, spec, grid, 0.0)
        for field in (state.psi, state.phi):
            field[0] = field[-1] = 0.0
        for _, state, _ in evolve(state, params, grid, config.t_final, config.iteration):
            pass
        exact = exact_soliton(params, spec, grid, state.time)
        error = float(max(np.max(np.abs(state.psi - exact.psi)), np.max(np.abs(state.phi - exact.phi))))
        order = math.log2(rows[-1].error / error) if rows and error > 0 else None
        rows.append(RefinementRow(level=level, h=grid.h, dtau=grid.dtau, m=grid.m, error=error, order=order))
        logger.info(f"Refinement level {level}: h={grid.h:.4g} dtau={grid.dtau:.4g} error={error:.3e}"
                    + (f" order={order:.3f}" if order is not None else ""))
        grid = grid.refined()
    return rows


def _sweep_member(config: ScenarioConfig, output_dir: str) -> SweepRow:
    phase = config.phase_diff_deg
    try:
        artifacts = run_scenario(config, output_dir=output_dir)
    except SolverError as e:
        logger.warning(f"Sweep member [delta]={phase} deg failed: {e}")
        return SweepRow(phase_diff_deg=phase, status="failed", error=str(e))
    except Exception as e:
        logger.error(f"Sweep member [delta]={phase} deg crashed: {type(e).__name__}: {e}")
        return SweepRow(phase_diff_deg=phase, status="failed", error=f"{type(e).__name__}: {e}")
    s = artifacts.summary
    low, high = s.get("theta_total_min_deg"), s.get("theta_total_max_deg")
    return SweepRow(
        phase_diff_deg=phase, status="ok", run_id=artifacts.run_id, output_dir=artifacts.output_dir,
        energy=s["initial_energy"], energy_disc=s["energy_disc"], mass=s["mass"],
        momentum_min=s["momentum_min"], momentum_max=s["momentum_max"],
        polarization_amplitude_deg=(high - low) if low is not None and high is not None else None,
    )


def run_phase_sweep(config: ScenarioConfig, phase_differences: Sequence[float],
                    output_dir: Optional[str] = None, workers: Optional[int] = None,
                    registry: Optional[RunRegistry] = None,
                    normalization: Optional[Tuple[float, float]] = None) -> List[SweepRow]:
    """One independent run per phase difference.

    Args:
        config: Base scenario.
        phase_differences: Phase differences in degrees.
        output_dir: Parent directory of the per-phase run directories.
        workers: Worker processes; defaults to SWEEP_WORKERS.
        registry: Registry receiving one row per run.
        normalization: Optional (phase, reported energy); the energy of that
            row fixes one constant applied to every row.

    Returns:
        Rows in the order of ``phase_differences``; failed runs are marked.
    """
    if not phase_differences:
        return []
    settings = get_settings()
    workers = workers or settings.sweep_workers
    sweep_id = f"{config.name}-sweep-{uuid.uuid4().hex[:8]}"
    root = output_dir or os.path.join(settings.output_dir, sweep_id)
    members = [config.model_copy(update={"phase_diff_deg": float(p), "name": f"{config.name}_phase{p:g}"})
               for p in phase_differences]
    dirs = [os.path.join(root, f"phase_{float(p):g}") for p in phase_differences]
    logger.info(f"Sweep {sweep_id}: {len(members)} runs on {workers} worker(s)")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_member, members, dirs))
    else:
        rows = [_sweep_member(member, d) for member, d in zip(members, dirs)]
    for row in rows:
        row.sweep_id = sweep_id

    if normalization is not None:
        reference_phase, reference_energy = normalization
        reference = next((r for r in rows if r.status == "ok" and r.phase_diff_deg == reference_phase), None)
        if reference is None or reference.energy is None:
            logger.warning(f"Normalization phase {reference_phase} has no successful run; rows left unnormalized")
        else:
            constant = fit_energy_normalization(reference_energy, reference.energy)
            for row in rows:
                if row.energy is not None:
                    row.energy_normalized = constant * row.energy

    if registry is not None:
        for row in rows:
            registry.record_sweep_row(sweep_id, row.model_dump())
    failed = sum(r.status == "failed" for r in rows)
    logger.info(f"Sweep {sweep_id} complete: {len(rows) - failed} ok, {failed} failed")
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str) -> str:
    """Write sweep rows as CSV with 12 significant digits."""
    columns = list(SweepRow.model_fields.keys())
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            values = []
            for column in columns:
                value = getattr(row, column)
                if value is None:
                    values.append("")
                elif isinstance(value, float):
                    values.append(f"{value:.12g}")
                else:
                    values.append(value)
            writer.writerow(values)
    return path
