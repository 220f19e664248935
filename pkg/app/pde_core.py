"""
PDE Core Module

This module advances the linearly coupled system

    i psi_t = beta psi_xx + alpha1 (|psi|^2 + |phi|^2) psi - Gamma phi,
    i phi_t = beta phi_xx + alpha1 (|psi|^2 + |phi|^2) phi - Gamma psi,

with the conservative Crank-Nicolson scheme in complex arithmetic. Each time
step is solved by internal iterations: the modulus products of the cubic term
are linearized around the previous iterate, which turns every iteration into
one complex banded solve. By default the coupling terms are implicit and the
unknowns are interleaved (psi_1, phi_1, psi_2, ...), giving a pentadiagonal
system; the lagged mode takes the coupling from the previous iterate and
solves two tridiagonal systems instead.

It also assembles shifted and phased solitons into initial data and provides
the exact solutions used as refinement oracles.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field
from scipy.interpolate import CubicSpline

from app.band_linalg import BandMatrix, factor, solve
from app.envelope_gen import circular_envelope, linear_envelope, nondegenerate_envelope
from app.errors import (InnerIterationDiverged, OverlapTooLarge, ShiftOutOfDomain,
                        SolverError, UnsupportedModel)
from app.models import EnvelopePair, EnvelopeParams, FieldState, Grid, ModelParams, SolitonSpec

logger = logging.getLogger(__name__)

SHIFT_TOLERANCE = 1e-6
DEFAULT_OVERLAP_TOLERANCE = 1e-6


class IterationControl(BaseModel):
    """Stopping rules and solver variant for the internal iterations."""
    update_tol: float = Field(1e-12, gt=0, description="Max-norm of successive iterate difference")
    residual_tol: float = Field(1e-12, gt=0, description="Scheme residual bound checked after convergence")
    max_iterations: int = Field(30, ge=1, description="Iteration cap per time step")
    coupling: Literal["implicit", "lagged"] = Field("implicit", description="Treatment of the Gamma and cross terms")
    predictor: Literal["extrapolate", "previous"] = Field("extrapolate", description="Starting iterate")
    check_residual: bool = Field(False, description="Verify the scheme residual after each step")


@dataclass
class IterationReport:
    iterations: int
    update_norm: float
    residual: Optional[float] = None


def _shifted_samples(envelope: EnvelopePair, values: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Envelope values at xi; exact samples when xi falls on envelope abscissae."""
    h = envelope.h
    position = (xi - envelope.x[0]) / h
    nearest = np.rint(position)
    if np.all(np.abs(position - nearest) < 1e-9):
        index = nearest.astype(np.intp)
        inside = (index >= 0) & (index < len(values))
        out = np.zeros(xi.shape, dtype=float)
        out[inside] = values[index[inside]]
        return out
    spline = CubicSpline(envelope.x, values)
    out = np.zeros(xi.shape, dtype=float)
    inside = (xi >= envelope.x[0]) & (xi <= envelope.x[-1])
    out[inside] = spline(xi[inside])
    return out


def assemble_soliton(envelope: EnvelopePair, spec: SolitonSpec, grid: Grid) -> FieldState:
    """Place one soliton on the grid at t = 0.

    psi_i = A_psi(x_i - X) exp(i[-(c/2)(x_i - X) + delta_psi]) and likewise for phi.
    Boundary nodes are set to zero.

    Raises:
        ShiftOutOfDomain: If the shifted envelope exceeds 1e-6 at a grid end.
    """
    x = grid.x
    xi = x - spec.X
    a_psi = _shifted_samples(envelope, envelope.a_psi, xi)
    a_phi = _shifted_samples(envelope, envelope.a_phi, xi)
    edge = max(abs(a_psi[0]), abs(a_psi[-1]), abs(a_phi[0]), abs(a_phi[-1]))
    if edge > SHIFT_TOLERANCE:
        raise ShiftOutOfDomain(
            f"Soliton at X={spec.X} reaches {edge:.2e} at the grid boundary [{-grid.L1}, {grid.L2}]"
        )
    carrier = -0.5 * spec.c * xi
    psi = a_psi * np.exp(1j * (carrier + spec.delta_psi))
    phi = a_phi * np.exp(1j * (carrier + spec.delta_phi))
    for field in (psi, phi):
        field[0] = field[-1] = 0.0
    return FieldState(0.0, psi, phi)


def superpose(states: Sequence[FieldState], overlap_tol: float = DEFAULT_OVERLAP_TOLERANCE) -> FieldState:
    """Pointwise sum of single-soliton states.

    The overlap of two states is max_x min(|chi_a|, |chi_b|) with |chi| the
    two-component modulus.

    Raises:
        OverlapTooLarge: If any pair overlaps more than ``overlap_tol``.
        ValueError: If ``states`` is empty or the arrays disagree in length.
    """
    if not states:
        raise ValueError("superpose needs at least one state")
    first = states[0]
    for other in states[1:]:
        if other.psi.shape != first.psi.shape:
            raise ValueError("States live on different grids")
    moduli = [np.sqrt(s.density) for s in states]
    for a in range(len(states)):
        for b in range(a + 1, len(states)):
            overlap = float(np.max(np.minimum(moduli[a], moduli[b])))
            if overlap > overlap_tol:
                raise OverlapTooLarge(
                    f"Solitons {a} and {b} overlap by {overlap:.2e} (tolerance {overlap_tol:.1e})"
                )
    psi = np.sum([s.psi for s in states], axis=0)
    phi = np.sum([s.phi for s in states], axis=0)
    return FieldState(first.time, psi, phi)


def _second_difference(values: np.ndarray) -> np.ndarray:
    d = np.zeros_like(values)
    d[1:-1] = values[:-2] - 2.0 * values[1:-1] + values[2:]
    return d


def _predict(state: FieldState, history: Sequence[FieldState], mode: str) -> FieldState:
    if mode == "previous" or len(history) < 2:
        return state.copy()
    older, old = history[-2], history[-1]
    # Quadratic extrapolation through the last three levels.
    psi = 3.0 * state.psi - 3.0 * old.psi + older.psi
    phi = 3.0 * state.phi - 3.0 * old.phi + older.phi
    return FieldState(state.time, psi, phi)


def _implicit_matrix(diag_psi, diag_phi, off, cross_psi, cross_phi, m: int) -> BandMatrix:
    """Interleaved pentadiagonal matrix; row 2i is psi_i, row 2i+1 is phi_i."""
    n = 2 * m
    matrix = BandMatrix.zeros(n, 2, 2)
    main = matrix.diagonal(0)
    main[0::2] = diag_psi
    main[1::2] = diag_phi
    # A[2i, 2i+1]: psi_i equation, phi_i unknown.
    matrix.diagonal(1)[0::2] = cross_psi
    # A[2i+1, 2i]: phi_i equation, psi_i unknown.
    matrix.diagonal(-1)[0::2] = cross_phi
    matrix.set_diagonal(2, off)
    matrix.set_diagonal(-2, off)
    for row in (0, 1, n - 2, n - 1):
        matrix.set_identity_row(row)
    return matrix


def _tridiagonal_matrix(diag, off, m: int) -> BandMatrix:
    matrix = BandMatrix.zeros(m, 1, 1)
    matrix.set_diagonal(0, diag)
    matrix.set_diagonal(1, off)
    matrix.set_diagonal(-1, off)
    matrix.set_identity_row(0)
    matrix.set_identity_row(m - 1)
    return matrix


def step(state: FieldState, params: ModelParams, grid: Grid,
         ctrl: Optional[IterationControl] = None,
         history: Sequence[FieldState] = ()) -> Tuple[FieldState, IterationReport]:
    """Advance one time step of the conservative scheme.

    Args:
        state: Fields at time level n.
        params: Model coefficients.
        grid: Mesh and time step.
        ctrl: Iteration control; defaults to :class:`IterationControl`.
        history: Earlier levels (oldest first) used by the extrapolating predictor.

    Returns:
        The state at level n+1 and the iteration report.

    Raises:
        InnerIterationDiverged: If the iteration cap is hit or the iterate blows up.
    """
    ctrl = ctrl or IterationControl()
    m, dt, h = grid.m, grid.dtau, grid.h
    beta, alpha, gamma = params.beta, params.alpha1, params.gamma
    psi_n, phi_n = state.psi, state.phi
    rho_n = np.abs(psi_n) ** 2 + np.abs(phi_n) ** 2

    lap_coeff = dt * beta / (2.0 * h ** 2)
    off = np.full(2 * m - 2 if ctrl.coupling == "implicit" else m - 1, -lap_coeff, dtype=np.complex128)
    rhs_psi_base = 1j * psi_n + lap_coeff * _second_difference(psi_n) - 0.5 * dt * gamma * phi_n
    rhs_phi_base = 1j * phi_n + lap_coeff * _second_difference(phi_n) - 0.5 * dt * gamma * psi_n

    guess = _predict(state, history, ctrl.predictor)
    psi_k, phi_k = guess.psi, guess.phi
    quarter = 0.25 * dt * alpha

    update = math.inf
    for iteration in range(1, ctrl.max_iterations + 1):
        w_psi = quarter * (psi_k + psi_n)
        w_phi = quarter * (phi_k + phi_n)
        diag_psi = 1j + 2.0 * lap_coeff - w_psi * np.conj(psi_k)
        diag_phi = 1j + 2.0 * lap_coeff - w_phi * np.conj(phi_k)
        cross_psi = -w_psi * np.conj(phi_k) + 0.5 * dt * gamma
        cross_phi = -w_phi * np.conj(psi_k) + 0.5 * dt * gamma
        rhs_psi = rhs_psi_base + w_psi * rho_n
        rhs_phi = rhs_phi_base + w_phi * rho_n

        if ctrl.coupling == "implicit":
            matrix = _implicit_matrix(diag_psi, diag_phi, off, cross_psi, cross_phi, m)
            rhs = np.empty(2 * m, dtype=np.complex128)
            rhs[0::2], rhs[1::2] = rhs_psi, rhs_phi
            rhs[[0, 1, -2, -1]] = 0.0
            solution = solve(factor(matrix), rhs)
            psi_new, phi_new = solution[0::2], solution[1::2]
        else:
            rhs_psi = rhs_psi - cross_psi * phi_k
            rhs_phi = rhs_phi - cross_phi * psi_k
            rhs_psi[[0, -1]] = 0.0
            rhs_phi[[0, -1]] = 0.0
            psi_new = solve(factor(_tridiagonal_matrix(diag_psi, off, m)), rhs_psi)
            phi_new = solve(factor(_tridiagonal_matrix(diag_phi, off, m)), rhs_phi)

        update = float(max(np.max(np.abs(psi_new - psi_k)), np.max(np.abs(phi_new - phi_k))))
        if not np.isfinite(update):
            raise InnerIterationDiverged(
                f"Internal iteration blew up at t={state.time:.6g}", iteration, update
            )
        psi_k, phi_k = psi_new, phi_new
        if update <= ctrl.update_tol:
            break
    else:
        raise InnerIterationDiverged(
            f"Internal iterations did not converge in {ctrl.max_iterations} loops at "
            f"t={state.time:.6g} (last update {update:.3e}); reduce the time step",
            ctrl.max_iterations, update,
        )

    new_state = FieldState(state.time + dt, psi_k, phi_k)
    report = IterationReport(iteration, update)
    if ctrl.check_residual:
        report.residual = scheme_residual(state, new_state, params, grid)
        if report.residual > ctrl.residual_tol:
            raise InnerIterationDiverged(
                f"Scheme residual {report.residual:.3e} exceeds {ctrl.residual_tol:.1e}",
                iteration, update,
            )
    return new_state, report


def scheme_residual(old: FieldState, new: FieldState, params: ModelParams, grid: Grid) -> float:
    """Max-norm of the time-step-scaled scheme residual over interior nodes."""
    if old.psi.shape != new.psi.shape:
        raise ValueError("States live on different grids")
    dt, h = grid.dtau, grid.h
    s = old.density + new.density
    lap = params.beta / (2.0 * h ** 2)
    worst = 0.0
    for own_old, own_new, other_old, other_new in ((old.psi, new.psi, old.phi, new.phi),
                                                   (old.phi, new.phi, old.psi, new.psi)):
        total = own_old + own_new
        rhs = (lap * _second_difference(total) + 0.25 * params.alpha1 * total * s
               - 0.5 * params.gamma * (other_old + other_new))
        residual = 1j * (own_new - own_old) - dt * rhs
        if len(residual) > 2:
            worst = max(worst, float(np.max(np.abs(residual[1:-1]))))
    return worst


def manakov_to_linear(psi_m: ArrayLike, phi_m: ArrayLike, t: float, gamma: complex) -> FieldState:
    """Map a Manakov-type pair (Psi, Phi) at time t to a solution of the coupled system.

    psi = Psi cos(Gamma t) + i Phi sin(Gamma t), phi = Phi cos(Gamma t) + i Psi sin(Gamma t).
    """
    psi_m = np.asarray(psi_m, dtype=np.complex128)
    phi_m = np.asarray(phi_m, dtype=np.complex128)
    cos, sin = np.cos(gamma * t), np.sin(gamma * t)
    return FieldState(t, psi_m * cos + 1j * phi_m * sin, phi_m * cos + 1j * psi_m * sin)


def _closed_form_envelope(spec: SolitonSpec, params: ModelParams, x: np.ndarray) -> EnvelopePair:
    env = EnvelopeParams.from_soliton(spec, params)
    if spec.linear:
        return linear_envelope(env, x)
    if spec.n_psi == spec.n_phi:
        return circular_envelope(env, x)
    return nondegenerate_envelope(env, x)


def exact_soliton(params: ModelParams, spec: SolitonSpec, grid: Grid, t: float) -> FieldState:
    """Closed-form one-soliton solution at time t.

    Each component moves rigidly with speed c, A_chi(x - X - c t) exp(i theta_chi),
    theta_chi = -(c/2)(x - X) + (n_chi + c^2/2) t + delta_chi, which solves the
    uncoupled system; the coupling is then restored by :func:`manakov_to_linear`.

    Raises:
        UnsupportedModel: If beta != 1.
        SolverError: If Im(Gamma) != 0 (the mapping is not a solution then).
    """
    if params.beta != 1.0:
        raise UnsupportedModel(f"Closed-form solitons assume beta = 1, got {params.beta}")
    if params.has_gain:
        raise SolverError("No closed-form solution for complex Gamma")
    x = grid.x
    xi = x - spec.X - spec.c * t
    pair = _closed_form_envelope(spec, params, xi)
    carrier = -0.5 * spec.c * (x - spec.X) + 0.5 * spec.c ** 2 * t
    psi_m = pair.a_psi * np.exp(1j * (carrier + spec.n_psi * t + spec.delta_psi))
    phi_m = pair.a_phi * np.exp(1j * (carrier + spec.n_phi * t + spec.delta_phi))
    return manakov_to_linear(psi_m, phi_m, t, params.gamma)


def exact_translated_soliton(params: ModelParams, spec: SolitonSpec, grid: Grid, t: float) -> FieldState:
    """Circular moving soliton for Gamma = 0."""
    uncoupled = params.model_copy(update={"gamma_re": 0.0, "gamma_im": 0.0})
    return exact_soliton(uncoupled, spec, grid, t)


def exact_breathing_soliton(params: ModelParams, n: float, grid: Grid, t: float,
                            X: float = 0.0) -> FieldState:
    """Standing linearly polarized soliton a sech(b (x - X)) e^{i n t} breathing between components."""
    spec = SolitonSpec(X=X, c=0.0, n_psi=n, n_phi=n, linear=True)
    return exact_soliton(params, spec, grid, t)


def evolve(state: FieldState, params: ModelParams, grid: Grid, t_final: float,
           ctrl: Optional[IterationControl] = None) -> Iterator[Tuple[int, FieldState, IterationReport]]:
    """Yield (step index, state, report) for every step up to ``t_final``.

    The predictor history is kept internally; the initial state is not yielded.
    """
    ctrl = ctrl or IterationControl()
    if params.has_gain:
        logger.warning(f"Complex coupling Gamma={params.gamma}: conservation laws do not hold for this run")
    n_steps = int(round((t_final - state.time) / grid.dtau))
    history: List[FieldState] = []
    current = state
    for index in range(1, n_steps + 1):
        new_state, report = step(current, params, grid, ctrl, history)
        logger.debug(f"step {index}/{n_steps} t={new_state.time:.4f} iterations={report.iterations}")
        history = (history + [current])[-2:]
        current = new_state
        yield index, current, report


def export_snapshot_csv(state: FieldState, grid: Grid, path: str) -> str:
    """Write x, Re psi, Im psi, |psi|, Re phi, Im phi, |phi| with 12 significant digits."""
    data = np.column_stack([
        grid.x,
        state.psi.real, state.psi.imag, np.abs(state.psi),
        state.phi.real, state.phi.imag, np.abs(state.phi),
    ])
    np.savetxt(path, data, delimiter=",", header="x,re_psi,im_psi,abs_psi,re_phi,im_phi,abs_phi",
               comments="", fmt="%.12g")
    return path
