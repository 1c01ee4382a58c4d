"""Spectral data: validation and assembly of the operator pair (A, B).

A scenario is a list of N "solitons", each a complex eigenvalue k_m with
Re(k_m) > 0 and a d x d complex weight matrix B_m, plus an evaluation
grid. From it we assemble, on the Nd-dimensional carrier space,

    A = blockdiag(k_1 I_d, ..., k_N I_d)
    B block (m, n) = i / (k_m + k_n) * B_n

so that AB + BA has block (m, n) = i * B_n, which factors exactly into d
dyads: AB + BA = sum_j outer(c_j, d_j) with c_j the j-th standard basis
vector of C^d stacked N times and d_j the j-th row of (iB_1 | ... | iB_N).
That rank-<=d factorization is what collapses the Nd x Nd solution kernel
down to a d x d field.

Weights may optionally be multiplied by +i before assembly (the
"imaginary weights" convention): with real caption-style entries the
scalar reduction of the solution formula is not real-valued, while
b = +i*beta yields the real profile k*sech(k x + k^3 t - ln(2k/beta)).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .linalg import SingularMatrixError, lu_det_solve, _lu_factor_batched

# Numerical-rank cutoff for the covector-independence check, relative to
# the largest covector magnitude.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Rectangular evaluation window: nx points on [x_min, x_max] times
    nt points on [t_min, t_max], endpoints included."""

    x_min: float
    x_max: float
    nx: int
    t_min: float
    t_max: float
    nt: int

    def x_values(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def t_values(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.nt)


@dataclass(frozen=True)
class SolitonEntry:
    """One discrete eigenvalue k (Re k > 0) and its d x d weight matrix."""

    k: complex
    B: np.ndarray


@dataclass(frozen=True)
class Scenario:
    d: int
    entries: Tuple[SolitonEntry, ...]
    grid: GridSpec
    label: str = ""
    imaginary_weights: bool = False
    path_hint: str = "fast"  # preferred evaluation path; CLI flag overrides
    warnings: Tuple[str, ...] = ()

    @property
    def n_solitons(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class ScenarioValidationError(ValueError):
    """Carries every violation found, not just the first."""

    def __init__(self, issues: Sequence[ValidationIssue]):
        self.issues = list(issues)
        super().__init__(
            "invalid scenario: " + "; ".join(str(i) for i in issues)
        )


@dataclass(frozen=True)
class DyadFactorization:
    """Rank-<=d factorization sum_j outer(c_j, d_j) of AB + BA.

    c_vectors:   (Nd, d) array, column j is c_j
    d_covectors: (d, Nd) array, row i is d_i
    degenerate:  True when the covectors are linearly dependent (evaluation
                 still proceeds; recorded as a warning)
    """

    c_vectors: np.ndarray
    d_covectors: np.ndarray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.d_covectors.shape[0]


@dataclass(frozen=True)
class OperatorData:
    A_diag: np.ndarray          # (Nd,) diagonal of A, block-constant
    B: np.ndarray               # (Nd, Nd)
    fact: DyadFactorization
    d: int
    N: int
    ks: Tuple[complex, ...]
    label: str = ""
    warnings: Tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.d * self.N

    def A_matrix(self) -> np.ndarray:
        return np.diag(self.A_diag)


def validate_scenario(s: Scenario) -> Scenario:
    """Check every scenario invariant, collecting all violations.

    Returns the scenario (possibly annotated with warnings) when valid;
    raises ScenarioValidationError listing every violation otherwise.
    Covector degeneracy (weight matrices whose stacked rows are linearly
    dependent) is a warning, not an error: the solution formula remains
    evaluable and such configurations are legitimately interesting.
    """
    issues: List[ValidationIssue] = []
    warnings: List[str] = list(s.warnings)

    if s.d < 1:
        issues.append(ValidationIssue("bad-dimension", f"d must be >= 1, got {s.d}"))
    if s.n_solitons < 1:
        issues.append(ValidationIssue("no-solitons", "at least one soliton entry required"))

    for m, e in enumerate(s.entries):
        k = complex(e.k)
        if not (np.isfinite(k.real) and np.isfinite(k.imag)):
            issues.append(ValidationIssue(
                "nonfinite-eigenvalue", f"entry {m}: k = {k} is not finite"))
        elif k.real <= 0:
            issues.append(ValidationIssue(
                "eigenvalue-halfplane",
                f"entry {m}: eigenvalue real part must be positive, got k = {k}"))
        Bm = np.asarray(e.B)
        if Bm.shape != (s.d, s.d):
            issues.append(ValidationIssue(
                "weight-shape",
                f"entry {m}: B must be {s.d}x{s.d}, got {Bm.shape}"))
        elif not np.all(np.isfinite(Bm)):
            issues.append(ValidationIssue(
                "nonfinite-weight", f"entry {m}: B has non-finite entries"))

    for m in range(s.n_solitons):
        for n in range(m, s.n_solitons):
            ksum = complex(s.entries[m].k) + complex(s.entries[n].k)
            if ksum == 0:
                issues.append(ValidationIssue(
                    "resonant-pair",
                    f"entries {m},{n}: k_{m} + k_{n} = 0 (division in B assembly)"))

    g = s.grid
    if g.nx < 1 or g.nt < 1:
        issues.append(ValidationIssue(
            "bad-grid", f"grid counts must be >= 1, got nx={g.nx}, nt={g.nt}"))
    if not all(np.isfinite(v) for v in (g.x_min, g.x_max, g.t_min, g.t_max)):
        issues.append(ValidationIssue("bad-grid", "grid bounds must be finite"))
    if g.x_max < g.x_min or g.t_max < g.t_min:
        issues.append(ValidationIssue(
            "bad-grid", "grid bounds must satisfy min <= max"))

    if issues:
        raise ScenarioValidationError(issues)

    # Covector independence is a property of the assembled factorization.
    fact = _assemble(s).fact
    if fact.degenerate:
        msg = ("degenerate-covectors: weight rows are linearly dependent; "
               "solution remains evaluable but the dyad basis is not unique")
        if msg not in warnings:
            warnings.append(msg)
    return replace(s, warnings=tuple(warnings))


def _effective_weights(s: Scenario) -> List[np.ndarray]:
    factor = 1j if s.imaginary_weights else 1.0
    return [factor * np.asarray(e.B, dtype=complex) for e in s.entries]


def _assemble(s: Scenario) -> OperatorData:
    d, N = s.d, s.n_solitons
    ks = [complex(e.k) for e in s.entries]
    Bs = _effective_weights(s)
    nd = N * d
    A_diag = np.concatenate([np.full(d, k) for k in ks]).astype(complex)
    B = np.zeros((nd, nd), dtype=complex)
    for m in range(N):
        for n in range(N):
            B[m * d:(m + 1) * d, n * d:(n + 1) * d] = (
                1j / (ks[m] + ks[n])
            ) * Bs[n]
    od = OperatorData(
        A_diag=A_diag, B=B, fact=_canonical_cd(d, N, ks, B), d=d, N=N,
        ks=tuple(ks), label=s.label, warnings=s.warnings,
    )
    _check_factorization(od)
    return od


def _canonical_cd(d: int, N: int, ks, B: np.ndarray) -> DyadFactorization:
    """Structural factorization: block (m, n) of AB + BA is
    (k_m + k_n) * B(m, n), which is independent of m; read the dyad rows
    off the first block row."""
    C = np.vstack([np.eye(d, dtype=complex)] * N)
    D = np.hstack(
        [(ks[0] + ks[n]) * B[0:d, n * d:(n + 1) * d] for n in range(N)]
    )
    return _factor_from_cd(C, D)


def _covector_rank(D: np.ndarray) -> int:
    """Numerical row rank of the d x Nd covector stack via pivoted LU of
    D D^H (small Gram matrix; pivot magnitudes expose dependence)."""
    gram = D @ D.conj().T
    scale = float(np.abs(gram).max()) or 1.0
    f = _lu_factor_batched(gram[None])
    diag = np.abs(np.diagonal(f.lu[0]))
    return int(np.sum(diag > RANK_RTOL * scale))


def _factor_from_cd(C: np.ndarray, D: np.ndarray) -> DyadFactorization:
    return DyadFactorization(
        c_vectors=C, d_covectors=D,
        degenerate=_covector_rank(D) < D.shape[0],
    )


def build_operator_data(s: Scenario) -> OperatorData:
    """Assemble (A, B) and the canonical dyad factorization.

    The scenario is validated first; validation issues propagate. The
    construction is purely arithmetic, so identical scenarios produce
    bit-identical operator data.
    """
    s = validate_scenario(s)
    return _assemble(s)


def canonical_factorization(od: OperatorData) -> DyadFactorization:
    """Canonical dyad factorization of AB + BA.

    Because A's diagonal is constant on each d-block, block (m, n) of
    AB + BA equals (k_m + k_n) * B(m, n) = i * B_n, independent of m; so
    the columns c_j = (e_j; ...; e_j) and rows d_i = i-th row of
    (iB_1 | ... | iB_N) reproduce AB + BA exactly. The residual is
    verified below; a violation signals an internal construction bug.
    """
    fact = _canonical_cd(od.d, od.N, od.ks, od.B)
    _check_factorization(with_factorization(od, fact))
    return fact


def _check_factorization(od: OperatorData) -> None:
    residual = factorization_residual(od)
    target = np.abs(_ab_plus_ba(od)).max()
    if residual > 1e-12 * max(target, 1e-300):
        raise AssertionError(
            f"dyad factorization residual {residual:.3e} exceeds "
            f"1e-12 * {target:.3e}; construction bug"
        )


def _ab_plus_ba(od: OperatorData) -> np.ndarray:
    A = od.A_matrix()
    return A @ od.B + od.B @ A


def factorization_residual(od: OperatorData) -> float:
    """sup-norm of AB + BA - sum_j outer(c_j, d_j)."""
    s = od.fact.c_vectors @ od.fact.d_covectors
    return float(np.abs(_ab_plus_ba(od) - s).max())


def regauge_factorization(
    fact: DyadFactorization, T: np.ndarray
) -> DyadFactorization:
    """Change dyad basis by an invertible d x d matrix T.

    c'_j = sum_m c_m T_mj and d'_i = sum_m (T^-1)_im d_m leave the dyad
    sum unchanged while conjugating the resulting field by T.
    """
    T = np.asarray(T, dtype=complex)
    d = fact.dim
    if T.shape != (d, d):
        raise ValueError(f"T must be {d}x{d}, got {T.shape}")
    res = lu_det_solve(T, fact.d_covectors)
    if res.singular:
        raise SingularMatrixError(0.0)
    return DyadFactorization(
        c_vectors=fact.c_vectors @ T,
        d_covectors=res.solution,
        degenerate=fact.degenerate,
    )


def with_factorization(od: OperatorData, fact: DyadFactorization) -> OperatorData:
    """Operator data with a replacement dyad factorization (gauge tests)."""
    return replace(od, fact=fact)


def random_scenario(
    rng: np.random.Generator,
    d_max: int = 3,
    n_max: int = 3,
    grid: Optional[GridSpec] = None,
) -> Scenario:
    """Seeded random valid scenario: d <= d_max, N <= n_max, Re k in
    [0.5, 2], complex weights with entries in the unit box."""
    d = int(rng.integers(1, d_max + 1))
    N = int(rng.integers(1, n_max + 1))
    entries = []
    for _ in range(N):
        k = complex(rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5))
        B = rng.uniform(-1, 1, (d, d)) + 1j * rng.uniform(-1, 1, (d, d))
        entries.append(SolitonEntry(k=k, B=B))
    if grid is None:
        grid = GridSpec(-8.0, 8.0, 161, -2.0, 2.0, 41)
    return Scenario(
        d=d, entries=tuple(entries), grid=grid,
        label=f"random-d{d}-N{N}",
    )
