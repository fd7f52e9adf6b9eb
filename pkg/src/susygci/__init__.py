"""Exact and numerical verification tools for the Gaussian correlation inequality.

Layers: Grassmann algebra (:mod:`exterior`), superspace calculus
(:mod:`supercalc`), covariance interpolation and principal-minor derivatives
(:mod:`covariance`), cube probabilities (:mod:`probability`) and the
verification harness (:mod:`harness`, :mod:`cli`).
"""

from .covariance import CovarianceInterpolation, SubsetIndex, a_J_analytic, a_J_fermionic, interpolate
from .errors import ConfigError, DegenerateBoundaryError, NotPositiveDefiniteError, NumericError, UsageError
from .exterior import GrassmannAlgebra, berezin_integrate, ext_exp, ext_mul, fermi_derive, gaussian_fermionic_integral
from .probability import cube_probability, decomposition_check, gamma_gci_check, gci_check, tau_derivative

__version__ = "0.1.0"
