"""
Domain Models Module

This module defines the records shared by the generator, the time stepper,
the diagnostics and the scenario layer: physical coefficients, the spatial and
temporal grid, soliton descriptors and the array carriers for fields and
envelopes.

Parameter records are pydantic models so that configs and HTTP payloads are
validated on construction; array carriers are plain dataclasses around numpy
arrays.
"""

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class ModelParams(BaseModel):
    """Coefficients of the linearly coupled system."""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(1.0, description="Dispersion coefficient")
    alpha1: float = Field(..., gt=0, description="Self-focusing coefficient")
    gamma_re: float = Field(0.0, description="Real part of the linear coupling")
    gamma_im: float = Field(0.0, description="Imaginary part of the linear coupling (gain/dissipation)")

    @field_validator("beta")
    @classmethod
    def _beta_nonzero(cls, value: float) -> float:
        if value == 0.0:
            raise ValueError("beta must be nonzero")
        return value

    @property
    def gamma(self) -> complex:
        return complex(self.gamma_re, self.gamma_im)

    @property
    def has_gain(self) -> bool:
        """True when Im(gamma) != 0 and the conservation laws no longer hold."""
        return self.gamma_im != 0.0


class Grid(BaseModel):
    """Uniform mesh on [-L1, L2] with ``m`` nodes x_i = -L1 + i*h, i = 1..m."""
    model_config = ConfigDict(frozen=True)

    L1: float = Field(..., gt=0, description="Left interval bound (x >= -L1)")
    L2: float = Field(..., gt=0, description="Right interval bound (x <= L2)")
    m: int = Field(..., ge=16, description="Node count")
    dtau: float = Field(..., gt=0, description="Time step")

    @classmethod
    def from_spacing(cls, L1: float, L2: float, h: float, dtau: float) -> "Grid":
        """Build a grid from a target spacing; ``m`` is rounded to the nearest integer."""
        return cls(L1=L1, L2=L2, m=int(round((L1 + L2) / h)), dtau=dtau)

    @property
    def h(self) -> float:
        return (self.L1 + self.L2) / self.m

    @property
    def x(self) -> np.ndarray:
        return -self.L1 + self.h * np.arange(1, self.m + 1)

    def refined(self, factor: int = 2) -> "Grid":
        """Return the grid with spacing and time step divided by ``factor``."""
        return Grid(L1=self.L1, L2=self.L2, m=self.m * factor, dtau=self.dtau / factor)


class SolitonSpec(BaseModel):
    """One quasi-particle of the initial superposition.

    A single phase speed ``c`` is shared by both components. Phases are in radians.
    """
    X: float = Field(..., description="Initial center position")
    c: float = Field(0.0, description="Envelope phase speed")
    n_psi: float = Field(..., description="Carrier frequency of the psi component")
    n_phi: float = Field(..., description="Carrier frequency of the phi component")
    delta_psi: float = Field(0.0, description="Phase of the psi component (radians)")
    delta_phi: float = Field(0.0, description="Phase of the phi component (radians)")
    linear: bool = Field(False, description="Linear polarization: the phi envelope is zero")


class EnvelopeParams(BaseModel):
    """Frequencies and coefficients entering the conjugate envelope system."""
    model_config = ConfigDict(frozen=True)

    n_psi: float
    n_phi: float
    c: float = 0.0
    alpha1: float = Field(..., gt=0)
    beta: float = 1.0

    @classmethod
    def from_soliton(cls, spec: SolitonSpec, params: ModelParams) -> "EnvelopeParams":
        return cls(n_psi=spec.n_psi, n_phi=spec.n_phi, c=spec.c,
                   alpha1=params.alpha1, beta=params.beta)

    def decay_rate(self, component: Literal["psi", "phi"]) -> float:
        """Return kappa with kappa^2 = -(n + c^2/4), or NaN when the state is unbound."""
        n = self.n_psi if component == "psi" else self.n_phi
        k2 = -(n + self.c ** 2 / 4.0)
        return math.sqrt(k2) if k2 > 0 else float("nan")


@dataclass
class FieldState:
    """The two complex fields at one time level."""
    time: float
    psi: np.ndarray
    phi: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "FieldState":
        return cls(time, np.zeros(grid.m, dtype=np.complex128), np.zeros(grid.m, dtype=np.complex128))

    def copy(self) -> "FieldState":
        return FieldState(self.time, self.psi.copy(), self.phi.copy())

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2 + np.abs(self.phi) ** 2


@dataclass
class EnvelopePair:
    """Real envelope samples on abscissae centered at zero."""
    x: np.ndarray
    a_psi: np.ndarray
    a_phi: np.ndarray
    iterations: Optional[int] = None
    last_update: Optional[float] = None

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def polarization_angle(self) -> float:
        """arctan(max|A_phi| / max|A_psi|) in radians."""
        return math.atan2(float(np.max(np.abs(self.a_phi))), float(np.max(np.abs(self.a_psi))))

    @property
    def max_amplitude(self) -> float:
        return float(max(np.max(np.abs(self.a_psi)), np.max(np.abs(self.a_phi))))
