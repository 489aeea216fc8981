"""Numerical tolerances shared across the package."""

#: exact algebraic identities (column sums, D D^-1 = I, ...)
EXACT_TOL = 1e-12
#: limits of iterative procedures (A phi = phi, residuals at convergence)
ITER_TOL = 1e-10
#: column-sum tolerance when loading a user-supplied matrix
LOAD_TOL = 1e-9
#: smallest admissible push-sum weight before a run is declared broken
WEIGHT_FLOOR = 1e-14
#: eigenvalues below this fraction of the largest are treated as zero
EIG_ZERO_REL = 1e-10
#: default horizon for the xi diagnostic
XI_T_MAX = 200
