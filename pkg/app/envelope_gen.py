"""
Envelope Generator Module

This module produces the real envelope pairs (A_psi, A_phi) of stationary
solitary waves, the profiles that are later shifted, phased and superposed into
initial data. Envelopes solve the conjugate system

    A_psi'' + (n_psi + c^2/4) A_psi + alpha1 (A_psi^2 + A_phi^2) A_psi = 0,
    A_phi'' + (n_phi + c^2/4) A_phi + alpha1 (A_psi^2 + A_phi^2) A_phi = 0,

with A -> 0 at infinity. Circular (equal frequencies) and linear (one
component) profiles are sech closed forms. For distinct frequencies the two
envelopes are orthogonal eigenfunctions of the same Schrodinger operator, so
the component with the larger decay rate is an even ground state and the other
one is odd; a closed form exists and seeds a Newton solve of the
central-difference system on the PDE mesh.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from app.band_linalg import BandMatrix, solve_banded
from app.errors import (FrequencyMismatch, NewtonDiverged, TrivialBranch,
                        UnboundState, UnsupportedModel)
from app.models import EnvelopePair, EnvelopeParams, Grid

logger = logging.getLogger(__name__)

DEFAULT_SPACING = 0.05
DEFAULT_HALF_WIDTH = 60.0
TRIVIAL_AMPLITUDE = 1e-3
NEWTON_MAX_ITERATIONS = 50
NEWTON_UPDATE_TOL = 1e-12
# Updates below this that stop contracting are accepted as round-off stalls.
ROUNDING_FLOOR = 1e-10


def envelope_abscissae(h: float = DEFAULT_SPACING, half_width: float = DEFAULT_HALF_WIDTH) -> np.ndarray:
    """Symmetric sample points k*h, k = -K..K, with K*h close to ``half_width``."""
    K = int(round(half_width / h))
    return h * np.arange(-K, K + 1)


def _require_unit_dispersion(params: EnvelopeParams) -> None:
    if params.beta != 1.0:
        raise UnsupportedModel(
            f"Envelope generation is derived for beta = 1; got beta = {params.beta}"
        )


def _bound_decay_rates(params: EnvelopeParams) -> Tuple[float, float]:
    kappa_psi = params.decay_rate("psi")
    kappa_phi = params.decay_rate("phi")
    if not (kappa_psi > 0 and kappa_phi > 0):
        raise UnboundState(
            f"n + c^2/4 must be negative for both components "
            f"(n_psi={params.n_psi}, n_phi={params.n_phi}, c={params.c})"
        )
    return kappa_psi, kappa_phi


def circular_envelope(params: EnvelopeParams, x: Optional[np.ndarray] = None) -> EnvelopePair:
    """Equal sech profiles A_psi = A_phi = a sech(b x), b = sqrt(-(n + c^2/4)), a = b / sqrt(alpha1).

    Args:
        params: Envelope parameters with n_psi == n_phi.
        x: Sample abscissae; defaults to :func:`envelope_abscissae`.

    Returns:
        The circularly polarized envelope pair.

    Raises:
        UnboundState: If n + c^2/4 >= 0.
        FrequencyMismatch: If the component frequencies differ.
    """
    if params.n_psi != params.n_phi:
        raise FrequencyMismatch(
            f"Circular profile needs n_psi == n_phi, got {params.n_psi} and {params.n_phi}"
        )
    b, _ = _bound_decay_rates(params)
    a = b / math.sqrt(params.alpha1)
    x = envelope_abscissae() if x is None else np.asarray(x, dtype=float)
    profile = a / np.cosh(b * x)
    return EnvelopePair(x, profile, profile.copy())


def linear_envelope(params: EnvelopeParams, x: Optional[np.ndarray] = None) -> EnvelopePair:
    """Single-component profile A_psi = sqrt(2/alpha1) b sech(b x), A_phi = 0."""
    kappa = params.decay_rate("psi")
    if not kappa > 0:
        raise UnboundState(f"n_psi + c^2/4 must be negative (n_psi={params.n_psi}, c={params.c})")
    x = envelope_abscissae() if x is None else np.asarray(x, dtype=float)
    a_psi = math.sqrt(2.0 / params.alpha1) * kappa / np.cosh(kappa * x)
    return EnvelopePair(x, a_psi, np.zeros_like(a_psi))


def nondegenerate_envelope(params: EnvelopeParams, x: Optional[np.ndarray] = None) -> EnvelopePair:
    """Closed-form even/odd envelope pair for n_psi != n_phi.

    With kappa_big > kappa_small the decay rates, s = kappa_big + kappa_small,
    d = kappa_big - kappa_small and D = cosh(s x) + (s/d) cosh(d x):

        A_even = 2 kappa_big sqrt(s/d) cosh(kappa_small x) / D
        A_odd  = 2 kappa_small sqrt(s/d) sinh(kappa_big x) / D

    both scaled by sqrt(2/alpha1). The larger-kappa component is the even one.

    Raises:
        UnboundState: If either component is unbound.
        FrequencyMismatch: If n_psi == n_phi.
    """
    if params.n_psi == params.n_phi:
        raise FrequencyMismatch("Equal frequencies have the circular closed form")
    kappa_psi, kappa_phi = _bound_decay_rates(params)
    k_big, k_small = max(kappa_psi, kappa_phi), min(kappa_psi, kappa_phi)
    s, d = k_big + k_small, k_big - k_small
    x = envelope_abscissae() if x is None else np.asarray(x, dtype=float)
    ax = np.abs(x)

    # Every hyperbolic function is divided by exp(s|x|) so no exponent is positive.
    denom = 0.5 * (1.0 + np.exp(-2.0 * s * ax)) + 0.5 * (s / d) * (np.exp((d - s) * ax) + np.exp(-(d + s) * ax))
    cosh_small = 0.5 * (np.exp((k_small - s) * ax) + np.exp(-(k_small + s) * ax))
    sinh_big = 0.5 * np.sign(x) * (np.exp((k_big - s) * ax) - np.exp(-(k_big + s) * ax))

    scale = math.sqrt(2.0 / params.alpha1) * math.sqrt(s / d)
    a_even = scale * 2.0 * k_big * cosh_small / denom
    a_odd = scale * 2.0 * k_small * sinh_big / denom
    if kappa_psi > kappa_phi:
        return EnvelopePair(x, a_even, a_odd)
    return EnvelopePair(x, a_odd, a_even)


def _half_line_system(u: np.ndarray, h: float, energies: np.ndarray, even: List[bool],
                      alpha: float) -> Tuple[np.ndarray, BandMatrix]:
    """Residual and Jacobian of the discretized conjugate system on x_k = k*h, k = 0..K-1.

    Unknowns are interleaved node by node; u[:, K] = 0 is the far Dirichlet value.
    Even components use the mirror ghost value at x = 0, odd components pin u(0) = 0.
    """
    ncomp, K = u.shape
    inv_h2 = 1.0 / h ** 2
    rho = np.sum(u ** 2, axis=0)

    left = np.empty_like(u)
    left[:, 1:] = u[:, :-1]
    right = np.zeros_like(u)
    right[:, :-1] = u[:, 1:]
    for j in range(ncomp):
        left[j, 0] = u[j, 1] if even[j] else -u[j, 1]

    F = (left - 2.0 * u + right) * inv_h2 + energies[:, None] * u + alpha * rho * u

    N = ncomp * K
    J = BandMatrix.zeros(N, ncomp, ncomp, dtype=np.float64)
    nodes = np.arange(K)
    for j in range(ncomp):
        idx = nodes * ncomp + j
        J.add_entries(idx, idx, -2.0 * inv_h2 + energies[j] + alpha * (rho + 2.0 * u[j] ** 2))
        J.add_entries(idx[1:], idx[:-1], np.full(K - 1, inv_h2))
        J.add_entries(idx[:-1], idx[1:], np.full(K - 1, inv_h2))
        if even[j]:
            J.add_entries([idx[0]], [idx[1]], [inv_h2])
        for i in range(ncomp):
            if i != j:
                J.add_entries(idx, nodes * ncomp + i, 2.0 * alpha * u[j] * u[i])
    for j in range(ncomp):
        if not even[j]:
            F[j, 0] = u[j, 0]
            J.set_identity_row(j)
    return F.T.ravel(), J


def _newton_half_line(u0: np.ndarray, h: float, energies: np.ndarray, even: List[bool],
                      alpha: float, max_iterations: int, update_tol: float) -> Tuple[np.ndarray, int, float]:
    ncomp, K = u0.shape
    u = u0.copy()
    previous = math.inf
    for iteration in range(1, max_iterations + 1):
        F, J = _half_line_system(u, h, energies, even, alpha)
        delta = solve_banded(J, F)
        u -= delta.reshape(K, ncomp).T
        norm = float(np.max(np.abs(delta)))
        logger.debug(f"Newton iteration {iteration}: update {norm:.3e}")
        if not np.isfinite(norm):
            raise NewtonDiverged("Newton update is not finite", iteration, norm)
        if norm <= update_tol:
            return u, iteration, norm
        if norm <= ROUNDING_FLOOR and norm > 0.25 * previous:
            logger.warning(f"Newton stalled at {norm:.3e}, above the {update_tol:.0e} tolerance; accepting")
            return u, iteration, norm
        previous = norm
    raise NewtonDiverged(
        f"Newton did not converge in {max_iterations} iterations (last update {previous:.3e})",
        max_iterations, previous,
    )


def _mirror(u_half: np.ndarray, even: bool) -> np.ndarray:
    extended = np.append(u_half, 0.0)
    sign = 1.0 if even else -1.0
    return np.concatenate([sign * extended[:0:-1], extended])


def _symmetrized(pair: EnvelopePair, values: np.ndarray, xk: np.ndarray, even: bool) -> np.ndarray:
    plus = np.interp(xk, pair.x, values, left=0.0, right=0.0)
    minus = np.interp(-xk, pair.x, values, left=0.0, right=0.0)
    return 0.5 * (plus + minus) if even else 0.5 * (plus - minus)


def solve_conjugate_bvp(params: EnvelopeParams, grid: Grid, guess: EnvelopePair,
                        max_iterations: int = NEWTON_MAX_ITERATIONS,
                        update_tol: float = NEWTON_UPDATE_TOL) -> EnvelopePair:
    """Solve the central-difference conjugate system by Newton's method on the PDE spacing.

    The problem is posed on [0, min(L1, L2)] with parity conditions at x = 0 and a
    homogeneous Dirichlet value at the far end, then mirrored. Components whose
    guess is identically small stay zero. With equal frequencies the two
    components share one profile and keep the polarization angle of the guess.

    Newton stops once the max-norm update is at most ``update_tol``. An update
    at most ``ROUNDING_FLOOR`` that shrank by less than a factor of four is a
    round-off stall; it is accepted with a warning, and the returned pair's
    ``last_update`` then exceeds ``update_tol``.

    Args:
        params: Envelope parameters (beta must be 1).
        grid: PDE grid; supplies spacing and half width.
        guess: Nontrivial starting profile on any abscissae.
        max_iterations: Newton iteration cap.
        update_tol: Max-norm of the final Newton update.

    Returns:
        The converged envelope pair sampled at k*h, k = -K..K, with the
        iteration count and the size of the final update.

    Raises:
        UnsupportedModel: If beta != 1.
        UnboundState: If a frequency admits no decaying solution.
        TrivialBranch: If the guess is trivial or Newton lands on a zero component.
        NewtonDiverged: If Newton does not converge.
    """
    _require_unit_dispersion(params)
    kappa_psi, kappa_phi = _bound_decay_rates(params)
    if guess.max_amplitude < TRIVIAL_AMPLITUDE:
        raise TrivialBranch("Initial guess is the trivial solution")

    h = grid.h
    K = int(round(min(grid.L1, grid.L2) / h))
    xk = h * np.arange(K)
    e_psi = params.n_psi + params.c ** 2 / 4.0
    e_phi = params.n_phi + params.c ** 2 / 4.0
    psi_active = float(np.max(np.abs(guess.a_psi))) >= TRIVIAL_AMPLITUDE
    phi_active = float(np.max(np.abs(guess.a_phi))) >= TRIVIAL_AMPLITUDE

    if psi_active and phi_active and params.n_psi != params.n_phi:
        even = [kappa_psi > kappa_phi, kappa_phi > kappa_psi]
        u0 = np.vstack([_symmetrized(guess, guess.a_psi, xk, even[0]),
                        _symmetrized(guess, guess.a_phi, xk, even[1])])
        u, iterations, norm = _newton_half_line(u0, h, np.array([e_psi, e_phi]), even,
                                                params.alpha1, max_iterations, update_tol)
        for j, name in enumerate(("A_psi", "A_phi")):
            if np.max(np.abs(u[j])) < TRIVIAL_AMPLITUDE:
                raise TrivialBranch(f"{name} collapsed to zero; the guess has the wrong parity")
        a_psi, a_phi = _mirror(u[0], even[0]), _mirror(u[1], even[1])
    else:
        if psi_active and phi_active:
            angle = guess.polarization_angle
            profile = np.sqrt(guess.a_psi ** 2 + guess.a_phi ** 2)
            energy = e_psi
            weights = (math.cos(angle), math.sin(angle))
        elif psi_active:
            profile, energy, weights = np.abs(guess.a_psi), e_psi, (1.0, 0.0)
        else:
            profile, energy, weights = np.abs(guess.a_phi), e_phi, (0.0, 1.0)
        seed = EnvelopePair(guess.x, profile, np.zeros_like(profile))
        u0 = _symmetrized(seed, profile, xk, True)[None, :]
        u, iterations, norm = _newton_half_line(u0, h, np.array([energy]), [True],
                                                params.alpha1, max_iterations, update_tol)
        full = _mirror(u[0], True)
        a_psi, a_phi = weights[0] * full, weights[1] * full

    x = h * np.arange(-K, K + 1)
    pair = EnvelopePair(x, a_psi, a_phi, iterations=iterations, last_update=norm)
    if pair.max_amplitude < TRIVIAL_AMPLITUDE:
        raise TrivialBranch(f"Newton converged to the trivial solution (max amplitude {pair.max_amplitude:.2e})")
    logger.info(
        f"Conjugate system solved in {iterations} Newton iterations "
        f"(n_psi={params.n_psi}, n_phi={params.n_phi}, c={params.c}, "
        f"theta={math.degrees(pair.polarization_angle):.4f} deg, last update {norm:.2e})"
    )
    return pair


def continuation_guess(params_from: EnvelopeParams, solution_from: EnvelopePair,
                       params_to: EnvelopeParams) -> EnvelopePair:
    """Starting guess at ``params_to`` built from a converged solution at ``params_from``.

    Uses the scaling A -> lam A(lam x) of the cubic system, with lam the ratio of
    the larger decay rates, plus the sqrt(alpha) amplitude scaling. Returns the
    input unchanged when the parameters are equal or the target is unbound.
    """
    if params_from == params_to:
        return solution_from
    k_from = max(params_from.decay_rate("psi"), params_from.decay_rate("phi"))
    k_to = max(params_to.decay_rate("psi"), params_to.decay_rate("phi"))
    if not (math.isfinite(k_from) and math.isfinite(k_to) and k_from > 0 and k_to > 0):
        return solution_from
    lam = k_to / k_from
    amplitude = lam * math.sqrt(params_from.alpha1 / params_to.alpha1)
    x = solution_from.x
    a_psi = amplitude * np.interp(lam * x, x, solution_from.a_psi, left=0.0, right=0.0)
    a_phi = amplitude * np.interp(lam * x, x, solution_from.a_phi, left=0.0, right=0.0)
    return EnvelopePair(x.copy(), a_psi, a_phi)


def conjugate_residual(params: EnvelopeParams, pair: EnvelopePair) -> float:
    """Max-norm residual of the central-difference conjugate system over interior samples."""
    h = pair.h
    rho = pair.a_psi ** 2 + pair.a_phi ** 2
    worst = 0.0
    for values, n in ((pair.a_psi, params.n_psi), (pair.a_phi, params.n_phi)):
        lap = (values[:-2] - 2.0 * values[1:-1] + values[2:]) / h ** 2
        res = lap + (n + params.c ** 2 / 4.0) * values[1:-1] + params.alpha1 * rho[1:-1] * values[1:-1]
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def generate_envelope(params: EnvelopeParams, grid: Grid, linear: bool = False) -> EnvelopePair:
    """Envelope for one soliton on abscissae aligned with the PDE spacing.

    Linear and circular polarizations use the closed forms; distinct
    frequencies are solved by Newton from the closed-form even/odd pair.
    """
    _require_unit_dispersion(params)
    x = envelope_abscissae(grid.h, min(grid.L1, grid.L2))
    if linear:
        return linear_envelope(params, x)
    if params.n_psi == params.n_phi:
        return circular_envelope(params, x)
    return solve_conjugate_bvp(params, grid, nondegenerate_envelope(params, x))


def export_envelope_csv(pair: EnvelopePair, path: str) -> str:
    """Write ``x, a_psi, a_phi`` columns with 12 significant digits."""
    data = np.column_stack([pair.x, pair.a_psi, pair.a_phi])
    np.savetxt(path, data, delimiter=",", header="x,a_psi,a_phi", comments="", fmt="%.12g")
    logger.info(f"Envelope exported to {path}")
    return path
