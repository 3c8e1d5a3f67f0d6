"""Numerical tolerances shared by every constructor and check in the package."""

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-9
EFFECT_TOL = 1e-9
POVM_COMPLETENESS_TOL = 1e-9
PURE_NORM_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10
TRACE_PRESERVING_TOL = 1e-9
CLAMP_TOL = 1e-9
NORMALIZATION_TOL = 1e-10
BASIS_TOL = 1e-10
EMBED_IMAG_TOL = 1e-12
WEIGHTS_TOL = 1e-12
STOCHASTIC_TOL = 1e-12
DISTINGUISH_OVERLAP_TOL = 1e-10
DISTINGUISH_SUPPORT_TOL = 1e-8
SUPPORT_EIGENVALUE_TOL = 1e-9
WITNESS_TOL = 1e-9


def as_dict():
    """Return every tolerance by name, for report provenance."""
    return {k.lower(): v for k, v in globals().items() if k.endswith("_TOL")}
