"""Dense linear algebra on labeled tensor-product Hilbert spaces.

The simulated system is a transmon qutrit (factor 0, always 3 levels)
coupled to a handful of microwave resonators (factors 1..N, one Fock
ladder each).  Everything is stored as dense complex arrays; the largest
space in practice is 3 * 4**3 = 192 dimensional, far below the point
where sparse methods pay off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

__all__ = [
    "SpaceLayout",
    "Operator",
    "StateVector",
    "DensityMatrix",
    "system_layout",
    "destroy",
    "level_projector",
    "transition_op",
    "embed",
    "embed_matrix",
    "partial_trace",
    "expectation",
    "basis_vector",
]

QUTRIT_DIM = 3
G, E, F = 0, 1, 2  # qutrit level indices


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered tensor factors; factor order fixes the flat-index convention.

    Flat indices are row-major over the factor dims (first factor is the
    slowest-varying index), matching ``numpy.kron`` composition order.
    """

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        if not self.factor_dims or any(d < 1 for d in self.factor_dims):
            raise ValueError(f"factor dims must be positive, got {self.factor_dims}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def flat_index(self, multi: tuple[int, ...]) -> int:
        if len(multi) != self.n_factors:
            raise ValueError(f"expected {self.n_factors} indices, got {len(multi)}")
        idx = 0
        for k, d in zip(multi, self.factor_dims):
            if not 0 <= k < d:
                raise ValueError(f"index {multi} out of range for dims {self.factor_dims}")
            idx = idx * d + k
        return idx

    def multi_index(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.dim:
            raise ValueError(f"flat index {flat} out of range for dim {self.dim}")
        out = []
        for d in reversed(self.factor_dims):
            out.append(flat % d)
            flat //= d
        return tuple(reversed(out))


def system_layout(n_resonators: int, fock_cutoff: int = 3) -> SpaceLayout:
    """Layout for one qutrit (factor 0) plus ``n_resonators`` Fock ladders."""
    if n_resonators < 1:
        raise ValueError("need at least one resonator")
    if fock_cutoff < 2:
        raise ValueError("fock_cutoff must be at least 2")
    return SpaceLayout((QUTRIT_DIM,) + (fock_cutoff,) * n_resonators)


def _check_layout(layout_a: SpaceLayout, layout_b: SpaceLayout) -> None:
    if layout_a != layout_b:
        raise ValueError(f"layout mismatch: {layout_a} vs {layout_b}")


@dataclass(frozen=True)
class Operator:
    """Dense operator on the full tensor space."""

    layout: SpaceLayout
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise ValueError(f"operator shape {m.shape} does not match dim {self.layout.dim}")
        object.__setattr__(self, "entries", m)

    def dagger(self) -> "Operator":
        return Operator(self.layout, self.entries.conj().T)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))


@dataclass(frozen=True)
class StateVector:
    layout: SpaceLayout
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex)
        if v.shape != (self.layout.dim,):
            raise ValueError(f"state length {v.shape} does not match dim {self.layout.dim}")
        object.__setattr__(self, "amplitudes", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    layout: SpaceLayout
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise ValueError(f"density matrix shape {m.shape} does not match dim {self.layout.dim}")
        object.__setattr__(self, "entries", m)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def check_physical(self, trace_tol=1e-8, herm_tol=1e-9, eig_floor=-1e-7) -> None:
        """Raise PhysicalityError on trace, hermiticity or positivity violation."""
        defect = self.hermiticity_defect()
        if defect > herm_tol:
            raise PhysicalityError(f"hermiticity defect {defect:.3e} exceeds {herm_tol:.1e}")
        tr_err = abs(self.trace() - 1.0)
        if tr_err > trace_tol:
            raise PhysicalityError(f"trace deviates from 1 by {tr_err:.3e} (tol {trace_tol:.1e})")
        lam = self.min_eigenvalue()
        if lam < eig_floor:
            raise PhysicalityError(f"minimum eigenvalue {lam:.3e} below floor {eig_floor:.1e}")


class PhysicalityError(RuntimeError):
    """A density-matrix invariant (trace/hermiticity/positivity) was violated."""


# ---------------------------------------------------------------------------
# elementary factor operators

def destroy(dim: int) -> np.ndarray:
    """Annihilation operator truncated to ``dim`` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def level_projector(level: int, dim: int = QUTRIT_DIM) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[level, level] = 1.0
    return p


def transition_op(src: int, dst: int, dim: int = QUTRIT_DIM) -> np.ndarray:
    """|dst><src| on a single factor."""
    m = np.zeros((dim, dim), dtype=complex)
    m[dst, src] = 1.0
    return m


def embed_matrix(op_local: np.ndarray, factor: int, layout: SpaceLayout) -> np.ndarray:
    """I x ... x op_local x ... x I in layout order, as a plain array."""
    op_local = np.asarray(op_local, dtype=complex)
    d = layout.factor_dims[factor]
    if op_local.shape != (d, d):
        raise ValueError(
            f"local operator shape {op_local.shape} does not match factor {factor} dim {d}"
        )
    mats = [np.eye(dd, dtype=complex) for dd in layout.factor_dims]
    mats[factor] = op_local
    return reduce(np.kron, mats)


def embed(op_local: np.ndarray, factor: int, layout: SpaceLayout) -> Operator:
    return Operator(layout, embed_matrix(op_local, factor, layout))


def partial_trace(rho: DensityMatrix, keep: set[int] | tuple[int, ...]) -> DensityMatrix:
    """Trace out every factor not in ``keep``; kept factors retain their order."""
    keep_list = sorted(set(keep))
    if not keep_list:
        raise ValueError("keep set must be nonempty")
    if any(k < 0 or k >= rho.layout.n_factors for k in keep_list):
        raise ValueError(f"keep set {keep_list} out of range")
    dims = rho.layout.factor_dims
    n = len(dims)
    tensor = rho.entries.reshape(dims + dims)
    # contract row/column axes of each traced factor, from the back so axis
    # numbers stay valid
    for k in sorted(set(range(n)) - set(keep_list), reverse=True):
        tensor = np.trace(tensor, axis1=k, axis2=k + tensor.ndim // 2)
    kept_dims = tuple(dims[k] for k in keep_list)
    d_out = int(np.prod(kept_dims))
    return DensityMatrix(SpaceLayout(kept_dims), tensor.reshape(d_out, d_out))


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    """Tr(rho . op); real up to roundoff for Hermitian op."""
    _check_layout(rho.layout, op.layout)
    return complex(np.trace(rho.entries @ op.entries))


def basis_vector(layout: SpaceLayout, multi: tuple[int, ...]) -> StateVector:
    v = np.zeros(layout.dim, dtype=complex)
    v[layout.flat_index(multi)] = 1.0
    return StateVector(layout, v)
