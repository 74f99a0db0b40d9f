"""Numerics for Hardy-Sobolev problems with boundary singularities on axisymmetric domains."""
from .spectral import (ParameterError, alpha_exponents, critical_exponent, hardy_to_ckn, ckn_to_hardy,
                       kelvin_transform, sobolev_constant)
from .domain import DomainError, load_domain, make_domain, save_domain
from .mesh import MeshOptions, generate_mesh
from .solvers import (SolverOptions, existence_gap, first_eigenvalue, halfspace_reference,
                      hardy_constant, hardy_ladder, minimize_quotient)
from .asymptotics import boundary_mass, interior_mass, profile_fit
from .testfn import angular_constant, blowup_scan, expansion_audit, gammaH_family_scan, rho_eps_quotient

__version__ = "0.1.0"

__all__ = [
    "ParameterError", "DomainError", "MeshOptions", "SolverOptions",
    "alpha_exponents", "critical_exponent", "hardy_to_ckn", "ckn_to_hardy", "kelvin_transform",
    "sobolev_constant", "load_domain", "make_domain", "save_domain", "generate_mesh",
    "existence_gap", "first_eigenvalue", "halfspace_reference", "hardy_constant", "hardy_ladder",
    "minimize_quotient", "boundary_mass", "interior_mass", "profile_fit", "angular_constant",
    "blowup_scan", "expansion_audit", "gammaH_family_scan", "rho_eps_quotient",
]
