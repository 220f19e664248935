"""
Diagnostics Module

This module evaluates the conserved functionals of a field state, the discrete
invariants kept constant by the scheme, polarization angles and the tracked
centers of the quasi-particles, and post-processes time series (breathing
period, net polarization, drift, energy normalization).

Continuous functionals, with rho = |psi|^2 + |phi|^2:

    M = (1/2 beta) int rho dx
    P = -int Im(psi conj(psi_x) + phi conj(phi_x)) dx
    E = int beta (|psi_x|^2 + |phi_x|^2) - (alpha1/2) rho^2 + 2 Re(Gamma) Re(conj(psi) phi) dx
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field
from scipy.integrate import trapezoid

from app.errors import DegenerateWindow, NoOscillation, TrackLost
from app.models import FieldState, Grid, ModelParams

logger = logging.getLogger(__name__)

DEGENERATE_AMPLITUDE = 1e-10
TRACK_MASS_FLOOR = 1e-6
DEFAULT_TRACK_HALF_WIDTH = 15.0
DEFAULT_SPEED_WINDOW = 2.0


class InvariantTriple(BaseModel):
    mass: float
    momentum: float
    energy: float


class PolarizationRecord(BaseModel):
    """Polarization angles (radians); individual angles are NaN while windows overlap."""
    theta_left: float = Field(math.nan)
    theta_right: float = Field(math.nan)
    theta_total: float
    window_left: Optional[Tuple[float, float]] = None
    window_right: Optional[Tuple[float, float]] = None


class TrackRecord(BaseModel):
    """Tracked quasi-particle centers at one time.

    Speeds are finite differences over a trailing window; while the two windows
    overlap both centers report the joint centroid and ``merged`` is set.
    """
    time: float
    center_left: float
    center_right: Optional[float] = None
    speed_left: float = math.nan
    speed_right: Optional[float] = None
    merged: bool = False

    @property
    def centers(self) -> List[float]:
        return [self.center_left] if self.center_right is None else [self.center_left, self.center_right]

    @property
    def speeds(self) -> List[float]:
        return [self.speed_left] if self.speed_right is None else [self.speed_left, self.speed_right]


class DiagnosticsRecord(BaseModel):
    """One row of the per-step diagnostics series."""
    t: float
    M: float
    M_psi: float
    M_phi: float
    P: float
    E: float
    theta_l: float
    theta_r: float
    theta_total: float
    x_l: float
    x_r: float
    M_disc: float
    P_disc: float
    E_disc: float
    iterations: int = 0


def component_masses(state: FieldState, params: ModelParams, grid: Grid) -> Tuple[float, float]:
    """Trapezoid-rule masses (1/2 beta) int |chi|^2 of each component."""
    x = grid.x
    scale = 1.0 / (2.0 * params.beta)
    return (scale * float(trapezoid(np.abs(state.psi) ** 2, x)),
            scale * float(trapezoid(np.abs(state.phi) ** 2, x)))


def mass(state: FieldState, params: ModelParams, grid: Grid) -> float:
    m_psi, m_phi = component_masses(state, params, grid)
    return m_psi + m_phi


def momentum(state: FieldState, grid: Grid) -> float:
    """Pseudomomentum with central differences inside and one-sided at the ends."""
    x, h = grid.x, grid.h
    integrand = np.zeros(grid.m)
    for field in (state.psi, state.phi):
        integrand += np.imag(field * np.conj(np.gradient(field, h)))
    return -float(trapezoid(integrand, x))


def energy(state: FieldState, params: ModelParams, grid: Grid) -> float:
    x, h = grid.x, grid.h
    rho = state.density
    kinetic = np.abs(np.gradient(state.psi, h)) ** 2 + np.abs(np.gradient(state.phi, h)) ** 2
    coupling = 2.0 * params.gamma.real * np.real(np.conj(state.psi) * state.phi)
    return float(trapezoid(params.beta * kinetic - 0.5 * params.alpha1 * rho ** 2 + coupling, x))


def discrete_invariants(state: FieldState, params: ModelParams, grid: Grid) -> InvariantTriple:
    """Mass, pseudomomentum and energy sums kept constant by the scheme, weighted by h.

    Forward differences run over every mesh edge; with homogeneous boundary
    values the energy sum is exactly invariant for real Gamma.
    """
    h = grid.h
    rho = state.density
    m_disc = h / (2.0 * params.beta) * float(np.sum(rho))
    p_disc = 0.0
    kinetic = 0.0
    for field in (state.psi, state.phi):
        p_disc -= float(np.sum(np.imag(field[:-1] * np.conj(field[1:] - field[:-1]))))
        kinetic += float(np.sum(np.abs(np.diff(field)) ** 2))
    coupling = 2.0 * params.gamma.real * float(np.sum(np.real(np.conj(state.psi) * state.phi)))
    e_disc = params.beta * kinetic / h - 0.5 * params.alpha1 * h * float(np.sum(rho ** 2)) + h * coupling
    return InvariantTriple(mass=m_disc, momentum=p_disc, energy=e_disc)


def polarization(state: FieldState, grid: Grid, window: Optional[Tuple[float, float]] = None) -> float:
    """arctan(max|phi| / max|psi|) over ``window`` (the whole grid when None), in [0, pi/2].

    Raises:
        DegenerateWindow: If both maxima are below 1e-10.
    """
    if window is None:
        psi, phi = state.psi, state.phi
    else:
        x = grid.x
        mask = (x >= window[0]) & (x <= window[1])
        psi, phi = state.psi[mask], state.phi[mask]
    max_psi = float(np.max(np.abs(psi))) if psi.size else 0.0
    max_phi = float(np.max(np.abs(phi))) if phi.size else 0.0
    if max_psi < DEGENERATE_AMPLITUDE and max_phi < DEGENERATE_AMPLITUDE:
        raise DegenerateWindow(f"No signal inside window {window}")
    return math.atan2(max_phi, max_psi)


def polarization_record(state: FieldState, grid: Grid, track: TrackRecord,
                        half_width: float = DEFAULT_TRACK_HALF_WIDTH) -> PolarizationRecord:
    """Individual angles in windows around tracked centers plus the total angle."""
    record = PolarizationRecord(theta_total=polarization(state, grid))
    if track.merged:
        return record
    record.window_left = (track.center_left - half_width, track.center_left + half_width)
    record.theta_left = polarization(state, grid, record.window_left)
    if track.center_right is not None:
        record.window_right = (track.center_right - half_width, track.center_right + half_width)
        record.theta_right = polarization(state, grid, record.window_right)
    return record


def _centroid(x: np.ndarray, rho: np.ndarray, lo: float, hi: float) -> float:
    mask = (x >= lo) & (x <= hi)
    weight = float(trapezoid(rho[mask], x[mask])) if np.count_nonzero(mask) > 1 else 0.0
    if weight < TRACK_MASS_FLOOR:
        raise TrackLost(f"Density mass {weight:.2e} inside window [{lo:.3f}, {hi:.3f}]")
    return float(trapezoid(x[mask] * rho[mask], x[mask])) / weight


def _trailing_speed(history: Sequence[TrackRecord], slot: int, time: float,
                    center: float, window: float) -> float:
    reference = None
    for record in reversed(history):
        if record.merged or time - record.time > window:
            break
        reference = record
    if reference is None or reference.time >= time:
        return math.nan
    return (center - reference.centers[slot]) / (time - reference.time)


def track_centers(state: FieldState, grid: Grid, previous_tracks: Sequence[TrackRecord],
                  seeds: Optional[Sequence[float]] = None,
                  half_width: float = DEFAULT_TRACK_HALF_WIDTH,
                  speed_window: float = DEFAULT_SPEED_WINDOW) -> TrackRecord:
    """Locate quasi-particle centers as windowed density centroids.

    Windows of half-width ``half_width`` are centered at the previous centers,
    or at ballistic predictions from the last separated record while two
    windows overlap. Overlapping windows yield one joint centroid.

    Args:
        state: Current fields.
        grid: Mesh.
        previous_tracks: Earlier records, oldest first; may be empty.
        seeds: Initial centers, required when ``previous_tracks`` is empty.
        half_width: Window half-width.
        speed_window: Trailing time span for finite-difference speeds.

    Raises:
        TrackLost: If a window holds less than 1e-6 of density mass.
        ValueError: If neither history nor seeds are given.
    """
    if previous_tracks:
        last = previous_tracks[-1]
        free = next((r for r in reversed(previous_tracks) if not r.merged), None)
        if last.merged and free is not None:
            elapsed = state.time - free.time
            predicted = [c + (0.0 if math.isnan(v) else v) * elapsed for c, v in zip(free.centers, free.speeds)]
            frozen = free.speeds
        else:
            predicted, frozen = last.centers, last.speeds
    elif seeds:
        predicted, frozen = sorted(float(s) for s in seeds), [math.nan] * len(seeds)
    else:
        raise ValueError("track_centers needs seeds or previous tracks")

    x, rho = grid.x, state.density
    if len(predicted) == 2 and abs(predicted[1] - predicted[0]) < 2.0 * half_width:
        lo = min(predicted) - half_width
        hi = max(predicted) + half_width
        joint = _centroid(x, rho, lo, hi)
        return TrackRecord(time=state.time, center_left=joint, center_right=joint,
                           speed_left=frozen[0], speed_right=frozen[1], merged=True)

    centers = [_centroid(x, rho, c - half_width, c + half_width) for c in predicted]
    speeds = [_trailing_speed(previous_tracks, i, state.time, c, speed_window) for i, c in enumerate(centers)]
    return TrackRecord(
        time=state.time,
        center_left=centers[0],
        center_right=centers[1] if len(centers) > 1 else None,
        speed_left=speeds[0],
        speed_right=speeds[1] if len(speeds) > 1 else None,
    )


def fitted_speeds(tracks: Sequence[TrackRecord]) -> Tuple[List[float], List[float]]:
    """Least-squares speeds before the first and after the last merged record.

    Returns (pre, post) lists with one entry per tracked center; a segment with
    fewer than two records gives NaN.
    """
    if not tracks:
        return [], []
    count = len(tracks[0].centers)
    merged = [i for i, r in enumerate(tracks) if r.merged]
    if merged:
        pre, post = tracks[: merged[0]], tracks[merged[-1] + 1:]
    else:
        pre, post = tracks, []

    def fit(segment: Sequence[TrackRecord]) -> List[float]:
        if len(segment) < 2:
            return [math.nan] * count
        t = np.array([r.time for r in segment])
        return [float(np.polyfit(t, np.array([r.centers[k] for r in segment]), 1)[0]) for k in range(count)]

    return fit(pre), fit(post)


def breathing_period(times: ArrayLike, series: ArrayLike) -> float:
    """Oscillation period of a component-mass series from zero crossings of series - mean.

    Raises:
        NoOscillation: If the amplitude is below 1e-6 of the mean or fewer than
            three crossings are found.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    mean = float(np.mean(y))
    amplitude = 0.5 * float(np.max(y) - np.min(y))
    if amplitude < 1e-6 * abs(mean):
        raise NoOscillation(f"Series amplitude {amplitude:.2e} is negligible against mean {mean:.4g}")
    y = y - mean
    idx = np.nonzero(y[:-1] * y[1:] < 0)[0]
    if len(idx) < 3:
        raise NoOscillation(f"Only {len(idx)} mean crossings; the series must span two periods")
    crossings = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    # An even number of half-period intervals cancels the offset bias of the mean.
    k = (len(crossings) - 1) // 2 * 2
    period = 2.0 * float(crossings[k] - crossings[0]) / k
    logger.info(f"Breathing period {period:.6g} from {len(crossings)} crossings")
    return period


def net_polarization(times: ArrayLike, theta_total: ArrayLike, period: float) -> Tuple[np.ndarray, np.ndarray]:
    """Moving average of the total polarization over one breathing period.

    Returns:
        (times at the end of each averaging window, averaged angles). Both are
        empty when the series is shorter than one period.
    """
    t = np.asarray(times, dtype=float)
    theta = np.asarray(theta_total, dtype=float)
    if len(t) < 2:
        return np.array([]), np.array([])
    dt = float(np.median(np.diff(t)))
    n = int(round(period / dt))
    if n < 1 or n > len(theta):
        return np.array([]), np.array([])
    averaged = np.convolve(theta, np.ones(n) / n, mode="valid")
    return t[n - 1:], averaged


def fit_energy_normalization(reference: float, computed: float) -> float:
    """Constant K with K * computed = reference."""
    if computed == 0.0:
        raise ValueError("Cannot normalize against a zero energy")
    return reference / computed


def apply_energy_normalization(values: ArrayLike, constant: float) -> np.ndarray:
    return constant * np.asarray(values, dtype=float)


def relative_drift(series: ArrayLike, floor: float = 1e-12) -> float:
    """max_t |q(t) - q(0)| / max(|q(0)|, floor)."""
    q = np.asarray(series, dtype=float)
    if q.size == 0:
        return 0.0
    return float(np.max(np.abs(q - q[0]))) / max(abs(float(q[0])), floor)
