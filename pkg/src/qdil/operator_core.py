"""Dense complex linear-algebra primitives shared by every other module.

Everything here works on plain ``numpy.ndarray`` values with ``complex``
dtype. Matrices are immutable by convention: no function mutates its
arguments, and constructed arrays are returned without aliasing inputs.

Conventions
-----------
* ``vec``/``unvec`` are row-major (C order), matching ``numpy.reshape``.
* Residuals are measured in spectral norm unless noted.
* Complex scalars serialize to JSON as two-element ``[re, im]`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "CheckReport",
    "tensor",
    "dagger",
    "hermitize",
    "spectral_norm",
    "vec",
    "unvec",
    "matrix_units",
    "basis_vector",
    "proj",
    "compress_by_state",
    "sqrt_psd",
    "psd_factorize",
    "is_hermitian",
    "is_psd",
    "is_unitary",
    "is_isometry",
    "is_projection",
    "is_pvm",
    "is_density_matrix",
    "require_state",
    "random_unitary",
    "random_hermitian",
    "random_psd",
    "random_density",
    "random_ginibre",
    "matrix_to_json",
    "matrix_from_json",
]


@dataclass(frozen=True)
class Tolerance:
    """Numerical tolerances used across the package.

    ``abs`` is an operator-norm tolerance for residuals and equality
    checks; ``psd_slack`` is an eigenvalue tolerance below which small
    negative eigenvalues of nominally PSD matrices are forgiven (and
    clamped to zero where a factorization needs them).
    """

    abs: float = 1e-9
    psd_slack: float = 1e-10

    def __post_init__(self) -> None:
        if not (self.abs > 0 and self.psd_slack > 0):
            raise ValueError("tolerances must be positive")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a structural check: a verdict plus residual norms."""

    ok: bool
    residual: float
    detail: dict

    def __bool__(self) -> bool:
        return self.ok


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def _square(a) -> np.ndarray:
    m = _as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def tensor(a, b) -> np.ndarray:
    """Kronecker product ``a ⊗ b``."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def dagger(a) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a).conj().T


def hermitize(a) -> np.ndarray:
    """Hermitian part ``(a + a*)/2``."""
    m = _square(a)
    return (m + m.conj().T) / 2


def spectral_norm(a) -> float:
    """Operator (2-)norm; 0.0 for empty matrices."""
    m = np.asarray(a)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def vec(a) -> np.ndarray:
    """Row-major vectorization."""
    return np.asarray(a, dtype=complex).reshape(-1)


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=complex).reshape(rows, cols)


def matrix_units(dim: int) -> Iterable[tuple[int, int, np.ndarray]]:
    """Yield ``(i, j, e_ij)`` over the matrix units of ``M_dim``."""
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1.0
            yield i, j, e


def basis_vector(dim: int, i: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[i] = 1.0
    return v


def proj(v) -> np.ndarray:
    """Rank-one projection ``|v><v| / <v,v>``."""
    w = np.asarray(v, dtype=complex).reshape(-1)
    n2 = float(np.vdot(w, w).real)
    if n2 <= 0:
        raise ValueError("cannot project onto the zero vector")
    return np.outer(w, w.conj()) / n2


def compress_by_state(x, sigma, dim_h: int, dim_k: int,
                      tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Partial expectation ``(id ⊗ σ) X`` of an operator on ``H ⊗ K``.

    Returns the unique ``Y`` on ``H`` with ``tr(ρ Y) = tr((ρ ⊗ σ) X)``
    for every ``ρ``. For a product ``X = A ⊗ B`` this is ``tr(σB)·A``.
    """
    xm = _square(x)
    if xm.shape[0] != dim_h * dim_k:
        raise ValueError(
            f"operator has dimension {xm.shape[0]}, expected {dim_h * dim_k}")
    require_state(sigma, tol, what="sigma")
    sm = _square(sigma)
    if sm.shape[0] != dim_k:
        raise ValueError(f"sigma has dimension {sm.shape[0]}, expected {dim_k}")
    x4 = xm.reshape(dim_h, dim_k, dim_h, dim_k)
    # Y[a,b] = sum_{k,l} sigma[k,l] X[(a,l),(b,k)]
    return np.einsum("kl,albk->ab", sm, x4)


def sqrt_psd(a, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """PSD square root of a PSD matrix.

    Eigenvalues in ``[-psd_slack, 0)`` are clamped to zero; anything more
    negative, or a non-Hermitian input, is an error.
    """
    m = _square(a)
    herm_res = spectral_norm(m - m.conj().T)
    if herm_res > tol.abs * (1 + spectral_norm(m)):
        raise ValueError(f"matrix is not Hermitian (residual {herm_res:.3e})")
    w, u = np.linalg.eigh(hermitize(m))
    if w.size and w.min() < -tol.psd_slack:
        raise ValueError(
            f"matrix has negative eigenvalue {w.min():.3e} beyond psd_slack")
    w = np.clip(w, 0.0, None)
    return (u * np.sqrt(w)) @ u.conj().T


def psd_factorize(g, block: int, tol: Tolerance = DEFAULT_TOL
                  ) -> list[np.ndarray]:
    """Factor a PSD block Gram matrix into ``Λ_i`` with ``Λ_i* Λ_j = G_ij``.

    ``g`` is an ``(n·block)``-square matrix read as ``n × n`` blocks of
    size ``block``. The factors share the minimal codomain dimension
    ``r`` = numerical rank of ``g`` (eigenvalues above
    ``tol.abs · (1 + ||g||)``); eigenvalues in ``[-psd_slack, 0)`` are
    clamped to zero first.
    """
    gm = _square(g)
    if block <= 0 or gm.shape[0] % block != 0:
        raise ValueError(f"block size {block} does not divide {gm.shape[0]}")
    herm_res = spectral_norm(gm - gm.conj().T)
    if herm_res > tol.abs * (1 + spectral_norm(gm)):
        raise ValueError(f"Gram matrix is not Hermitian (residual {herm_res:.3e})")
    w, u = np.linalg.eigh(hermitize(gm))
    scale = float(w[-1]) if w.size else 0.0
    if w.size and w.min() < -tol.psd_slack * (1 + abs(scale)):
        raise ValueError(
            f"Gram matrix has negative eigenvalue {w.min():.3e}: "
            "kernel is not positive definite")
    w = np.clip(w, 0.0, None)
    thresh = tol.abs * (1 + abs(scale))
    keep = np.nonzero(w > thresh)[0]
    # Descending eigenvalue order keeps factor rows stable under reruns.
    keep = keep[np.argsort(w[keep])[::-1]]
    f = (np.sqrt(w[keep])[:, None] * u[:, keep].conj().T)
    n = gm.shape[0] // block
    return [np.ascontiguousarray(f[:, i * block:(i + 1) * block])
            for i in range(n)]


def is_hermitian(a, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    m = _square(a)
    res = spectral_norm(m - m.conj().T)
    return CheckReport(res <= tol.abs * (1 + spectral_norm(m)), res, {})


def is_psd(a, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    m = _square(a)
    herm = is_hermitian(m, tol)
    if not herm.ok:
        return CheckReport(False, herm.residual, {"hermitian": False})
    w = np.linalg.eigvalsh(hermitize(m))
    min_eig = float(w.min()) if w.size else 0.0
    return CheckReport(min_eig >= -tol.psd_slack, max(0.0, -min_eig),
                       {"min_eigenvalue": min_eig})


def is_unitary(u, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    m = _square(u)
    eye = np.eye(m.shape[0])
    res = max(spectral_norm(m.conj().T @ m - eye),
              spectral_norm(m @ m.conj().T - eye))
    return CheckReport(res <= tol.abs, res, {})


def is_isometry(v, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    m = _as_matrix(v)
    res = spectral_norm(m.conj().T @ m - np.eye(m.shape[1]))
    return CheckReport(res <= tol.abs, res, {})


def is_projection(p, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    m = _square(p)
    res = max(spectral_norm(m @ m - m), spectral_norm(m - m.conj().T))
    return CheckReport(res <= tol.abs, res, {})


def is_pvm(family, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    """Check that a family of matrices is a projection-valued measure.

    ``family`` is a sequence or mapping of square matrices on a common
    space. Reports per-element projection residuals, mutual
    orthogonality, and the completeness residual ``||Σ E - I||``.
    """
    if isinstance(family, Mapping):
        mats = [_square(m) for m in family.values()]
    else:
        mats = [_square(m) for m in family]
    if not mats:
        raise ValueError("empty PVM family")
    dim = mats[0].shape[0]
    if any(m.shape[0] != dim for m in mats):
        raise ValueError("PVM elements live on different spaces")
    proj_res = max(max(spectral_norm(m @ m - m), spectral_norm(m - m.conj().T))
                   for m in mats)
    ortho_res = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            ortho_res = max(ortho_res, spectral_norm(mats[i] @ mats[j]))
    comp_res = spectral_norm(sum(mats) - np.eye(dim))
    res = max(proj_res, ortho_res, comp_res)
    return CheckReport(res <= tol.abs, res, {
        "projection_residual": proj_res,
        "orthogonality_residual": ortho_res,
        "completeness_residual": comp_res,
    })


def is_density_matrix(rho, tol: Tolerance = DEFAULT_TOL) -> CheckReport:
    m = _square(rho)
    psd = is_psd(m, tol)
    trace_res = abs(complex(np.trace(m)) - 1.0)
    ok = psd.ok and trace_res <= tol.abs * 10
    return CheckReport(ok, max(psd.residual, trace_res),
                       {"trace": complex(np.trace(m)).real, **psd.detail})


def require_state(rho, tol: Tolerance = DEFAULT_TOL, what: str = "rho"
                  ) -> np.ndarray:
    """Return ``rho`` as an array, raising if it is not a density matrix."""
    m = _square(rho)
    rep = is_density_matrix(m, tol)
    if not rep.ok:
        raise ValueError(f"{what} is not a density matrix "
                         f"(residual {rep.residual:.3e}, detail {rep.detail})")
    return m


def random_ginibre(rng: np.random.Generator, rows: int, cols: int | None = None
                   ) -> np.ndarray:
    cols = rows if cols is None else cols
    return (rng.standard_normal((rows, cols))
            + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-ish random unitary via QR of a Ginibre matrix."""
    q, r = np.linalg.qr(random_ginibre(rng, dim))
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    return hermitize(random_ginibre(rng, dim))


def random_psd(rng: np.random.Generator, dim: int, rank: int | None = None
               ) -> np.ndarray:
    c = random_ginibre(rng, dim, rank if rank is not None else dim)
    return c @ c.conj().T


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    p = random_psd(rng, dim)
    return p / np.trace(p).real


def matrix_to_json(a) -> list:
    """Encode a matrix as nested lists of ``[re, im]`` pairs."""
    m = _as_matrix(a)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    """Decode the :func:`matrix_to_json` encoding.

    Bare numbers are also accepted in place of ``[re, im]`` pairs so that
    hand-written real matrices stay readable.
    """
    if not isinstance(data, list) or not data:
        raise ValueError("matrix JSON must be a nonempty list of rows")
    rows = []
    width = None
    for row in data:
        if not isinstance(row, list):
            raise ValueError("matrix JSON rows must be lists")
        entries = []
        for z in row:
            if isinstance(z, (int, float)):
                entries.append(complex(z))
            elif (isinstance(z, list) and len(z) == 2
                  and all(isinstance(p, (int, float)) for p in z)):
                entries.append(complex(z[0], z[1]))
            else:
                raise ValueError(f"bad complex entry in matrix JSON: {z!r}")
        if width is None:
            width = len(entries)
        elif len(entries) != width:
            raise ValueError("ragged matrix JSON")
        rows.append(entries)
    m = np.array(rows, dtype=complex)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix JSON entries must be finite")
    return m
