"""Dense complex linear algebra at small sizes.

Everything the rest of the package needs from linear algebra lives here:
products, partial-pivot LU determinant/solve, the matrix exponential, and
the (anti)commutator brackets. Matrices are plain numpy complex arrays,
row-major, typically no larger than 12x12. The routines are hand-rolled
(numpy is used as the array engine only, never numpy.linalg) so that the
determinant and solve semantics -- pivot thresholds, singularity flags,
bit-level determinism across batch shapes -- are fully owned by this
module.

Batched variants carry a leading batch axis and vectorize the pivot loop
over the batch; each matrix in a batch is factored independently, so
results are identical regardless of how a workload is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

# Pivot smaller than this times the matrix's max |entry| counts as zero.
PIVOT_RTOL = 1e-13

# exp(x) overflows double just above this.
_EXP_OVERFLOW = 709.0

# Diagonal Pade-(6,6) coefficients for expm: sum c_k A^k in numerator,
# same with alternating signs in denominator.
_PADE6 = np.array(
    [1.0, 1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280]
)


class SingularMatrixError(ValueError):
    """Solve requested on a numerically singular matrix."""

    def __init__(self, pivot_magnitude: float):
        self.pivot_magnitude = float(pivot_magnitude)
        super().__init__(
            f"matrix is numerically singular (pivot magnitude "
            f"{self.pivot_magnitude:.3e} below threshold)"
        )


class ExpOverflowError(OverflowError):
    """expm argument has real parts beyond double-precision range."""

    def __init__(self, scale: float):
        self.scale = float(scale)
        super().__init__(
            f"matrix exponential overflows: eigenvalue real-part scale "
            f"~{self.scale:.3e} exceeds {_EXP_OVERFLOW:.0f}"
        )


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of rank {a.ndim}")
    return a


def _require_square(a: np.ndarray) -> np.ndarray:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def mat_mul(a, b) -> np.ndarray:
    """Matrix product with explicit dimension checking."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ "
            f"({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def commutator(t, s) -> np.ndarray:
    """[T, S] = TS - ST."""
    t, s = _require_square(_as_matrix(t)), _require_square(_as_matrix(s))
    if t.shape != s.shape:
        raise ValueError(f"size mismatch: {t.shape} vs {s.shape}")
    return t @ s - s @ t


def anticommutator(t, s) -> np.ndarray:
    """{T, S} = TS + ST."""
    t, s = _require_square(_as_matrix(t)), _require_square(_as_matrix(s))
    if t.shape != s.shape:
        raise ValueError(f"size mismatch: {t.shape} vs {s.shape}")
    return t @ s + s @ t


# ----------------------------------------------------------------------
# Batched partial-pivot LU
# ----------------------------------------------------------------------

@dataclass
class _BatchLU:
    """LU factors of a batch of square matrices.

    lu:        (B, n, n) combined L\\U storage (unit lower diagonal implied)
    perm:      (B, n) row permutation applied to the input
    parity:    (B,) +-1 sign of the permutation
    min_pivot: (B,) smallest |pivot| seen during elimination
    singular:  (B,) bool, True when some pivot fell below threshold
    """

    lu: np.ndarray
    perm: np.ndarray
    parity: np.ndarray
    min_pivot: np.ndarray
    singular: np.ndarray


def _lu_factor_batched(mats: np.ndarray) -> _BatchLU:
    """Partial-pivot LU of a (B, n, n) batch.

    Never raises on singular input: elimination continues with a unit
    placeholder pivot so downstream code can decide (determinants get a
    zero-magnitude value, solves refuse).
    """
    a = np.array(mats, dtype=complex)  # copy; factored in place
    bsz, n, n2 = a.shape
    if n != n2:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    # Scale-invariant threshold per matrix: relative to max |entry|.
    scale = np.abs(a).reshape(bsz, -1).max(axis=1)
    thresh = PIVOT_RTOL * np.where(scale > 0, scale, 1.0)

    perm = np.tile(np.arange(n), (bsz, 1))
    parity = np.ones(bsz)
    min_pivot = np.full(bsz, np.inf)
    singular = np.zeros(bsz, dtype=bool)
    rows = np.arange(bsz)

    for k in range(n):
        # Pick the largest magnitude in column k at/below the diagonal.
        piv = np.argmax(np.abs(a[:, k:, k]), axis=1) + k
        swap = piv != k
        if swap.any():
            sw = rows[swap]
            a[sw[:, None], [[k]], :], a[sw[:, None], piv[swap, None], :] = (
                a[sw[:, None], piv[swap, None], :].copy(),
                a[sw[:, None], [[k]], :].copy(),
            )
            perm[sw, k], perm[sw, piv[swap]] = (
                perm[sw, piv[swap]],
                perm[sw, k],
            )
            parity[sw] = -parity[sw]
        pk = a[:, k, k]
        apk = np.abs(pk)
        min_pivot = np.minimum(min_pivot, apk)
        bad = apk < thresh
        singular |= bad
        safe = np.where(bad, 1.0, pk)  # placeholder; flagged above
        if k < n - 1:
            mult = a[:, k + 1:, k] / safe[:, None]
            a[:, k + 1:, k] = mult
            a[:, k + 1:, k + 1:] -= mult[:, :, None] * a[:, None, k, k + 1:]
    return _BatchLU(a, perm, parity, min_pivot, singular)


def _det_scaled_batched(f: _BatchLU) -> Tuple[np.ndarray, np.ndarray]:
    """Determinants as (mantissa, exponent): det = mantissa * 2**exponent.

    Mantissas are kept near unit magnitude so products of large pivots
    cannot overflow; singular matrices get an exact 0 mantissa.
    """
    bsz, n, _ = f.lu.shape
    mant = f.parity.astype(complex)
    expo = np.zeros(bsz, dtype=np.int64)
    for k in range(n):
        mant = mant * f.lu[:, k, k]
        m = np.abs(mant)
        nz = m > 0
        e = np.zeros(bsz, dtype=np.int64)
        e[nz] = np.frexp(m[nz])[1]
        mant = mant * np.exp2(-e.astype(float))
        expo += e
    mant = np.where(f.singular, 0.0, mant)
    return mant, expo


def _logabsdet_batched(f: _BatchLU) -> np.ndarray:
    """log|det| per matrix; -inf for singular."""
    mant, expo = _det_scaled_batched(f)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(mant)) + expo * np.log(2.0)


def _lu_solve_batched(f: _BatchLU, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs from factors; rhs is (B, n, m). Caller must have
    checked f.singular."""
    bsz, n, _ = f.lu.shape
    x = np.take_along_axis(
        np.asarray(rhs, dtype=complex), f.perm[:, :, None], axis=1
    ).copy()
    for k in range(1, n):  # forward, unit-lower
        x[:, k, :] -= np.einsum("bj,bjm->bm", f.lu[:, k, :k], x[:, :k, :])
    for k in range(n - 1, -1, -1):  # backward
        if k < n - 1:
            x[:, k, :] -= np.einsum(
                "bj,bjm->bm", f.lu[:, k, k + 1:], x[:, k + 1:, :]
            )
        x[:, k, :] /= f.lu[:, k, k, None]
    return x


@dataclass
class DetSolveResult:
    """Outcome of lu_det_solve: determinant, optional solution, and a
    singularity flag. det of a singular matrix is a 0-magnitude value."""

    det: complex
    solution: Optional[np.ndarray]
    singular: bool


def lu_det_solve(a, rhs=None) -> DetSolveResult:
    """Determinant (and optional solve) via partial-pivot LU.

    The determinant of a numerically singular matrix is returned as a
    zero-magnitude value with result.singular set, not raised. A solve
    against a singular matrix raises SingularMatrixError carrying the
    offending pivot magnitude. The determinant value itself may overflow
    double range for matrices with extreme entries; callers needing
    magnitudes only should work with the internal scaled representation.
    """
    a = _require_square(_as_matrix(a))
    f = _lu_factor_batched(a[None])
    mant, expo = _det_scaled_batched(f)
    det = complex(mant[0] * np.exp2(float(expo[0]))) if mant[0] != 0 else 0j
    singular = bool(f.singular[0])
    solution = None
    if rhs is not None:
        r = np.asarray(rhs, dtype=complex)
        vec = r.ndim == 1
        if vec:
            r = r[:, None]
        if r.shape[0] != a.shape[0]:
            raise ValueError(
                f"rhs has {r.shape[0]} rows, matrix is {a.shape[0]}x{a.shape[0]}"
            )
        if singular:
            raise SingularMatrixError(float(f.min_pivot[0]))
        solution = _lu_solve_batched(f, r[None])[0]
        if vec:
            solution = solution[:, 0]
    return DetSolveResult(det=det, solution=solution, singular=singular)


# ----------------------------------------------------------------------
# Matrix exponential
# ----------------------------------------------------------------------

def _is_exactly_diagonal(a: np.ndarray) -> bool:
    off = a[~np.eye(a.shape[0], dtype=bool)]
    return off.size == 0 or not np.any(off)


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a Pade-(6,6) core.

    Exactly diagonal input (the hot case: block-scalar-diagonal arguments
    are diagonal matrices) short-circuits to an entrywise exponential of
    the diagonal. Squaring count is chosen so the scaled norm is <= 0.5.
    Raises ExpOverflowError when real parts exceed double-precision range.
    """
    a = _require_square(_as_matrix(a))
    n = a.shape[0]
    if _is_exactly_diagonal(a):
        d = np.diag(a)
        worst = float(np.max(d.real)) if n else 0.0
        if worst > _EXP_OVERFLOW:
            raise ExpOverflowError(worst)
        return np.diag(np.exp(d))

    norm = float(np.abs(a).sum(axis=1).max())  # inf-norm
    if norm / n > _EXP_OVERFLOW:  # cheap pre-check on the scale
        raise ExpOverflowError(norm / n)
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    sa = a * (0.5 ** s)

    pows = [np.eye(n, dtype=complex), sa]
    for _ in range(2, 7):
        pows.append(pows[-1] @ sa)
    num = sum(c * p for c, p in zip(_PADE6, pows))
    den = sum(
        c * (p if k % 2 == 0 else -p)
        for k, (c, p) in enumerate(zip(_PADE6, pows))
    )
    r = lu_det_solve(den, num).solution
    for _ in range(s):
        r = r @ r
    if not np.all(np.isfinite(r)):
        raise ExpOverflowError(norm)
    return r
