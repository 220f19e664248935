"""
Linearly coupled NLS solver package.

Conservative Crank-Nicolson time stepping for two linearly coupled nonlinear
Schrodinger fields, soliton initial-data generation and quasi-particle
collision diagnostics.
"""

__version__ = "1.0.0"
