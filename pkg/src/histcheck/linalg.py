"""Dense complex linear algebra for small Hilbert spaces.

Matrices are plain ``numpy`` arrays of dtype ``complex128`` and shape
``(d, d)``. The helpers here validate shape and finiteness at the module
boundary; everything downstream assumes validated input.
"""

from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-10


class DimensionError(ValueError):
    """Operands have incompatible dimensions."""


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a square, finite ``complex128`` matrix."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=np.complex128)


def mat_mul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _same_dim(a, b)
    return a @ b


def adjoint(a) -> np.ndarray:
    return np.conj(np.asarray(a, dtype=np.complex128)).T


def hs_norm(a) -> float:
    """Hilbert-Schmidt norm sqrt(Tr[A^dagger A])."""
    a = np.asarray(a, dtype=np.complex128)
    return float(np.sqrt(np.sum(a.real**2 + a.imag**2)))


def commutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _same_dim(a, b)
    return a @ b - b @ a


def is_unitary(u, tol: float = DEFAULT_TOL) -> bool:
    u = as_matrix(u)
    return hs_norm(adjoint(u) @ u - identity(u.shape[0])) <= tol


def is_projector(p, tol: float = DEFAULT_TOL) -> bool:
    p = as_matrix(p)
    return hs_norm(p - adjoint(p)) <= tol and hs_norm(p @ p - p) <= tol


def haar_random_unitary(d: int, seed=None) -> np.ndarray:
    """Sample a d x d unitary from the Haar measure.

    QR-orthonormalizes a complex Ginibre matrix, then multiplies each column
    of Q by the phase of the matching diagonal entry of R. Without the phase
    fix the result is unitary but not Haar distributed.

    ``seed`` may be anything accepted by ``numpy.random.default_rng``,
    including an existing ``Generator``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    phases = diag / np.abs(diag)
    return q * phases[np.newaxis, :]


def matrix_to_json(a) -> dict:
    a = as_matrix(a)
    return {
        "dim": int(a.shape[0]),
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in a],
    }


def matrix_from_json(obj) -> np.ndarray:
    """Parse ``{"dim": d, "entries": [[[re, im], ...], ...]}``.

    Real-valued entries (bare numbers) are accepted as a convenience.
    """
    if not isinstance(obj, dict) or "entries" not in obj:
        raise ValueError("matrix JSON must be an object with an 'entries' field")
    rows = obj["entries"]
    if not isinstance(rows, list) or not rows:
        raise ValueError("'entries' must be a non-empty list of rows")
    d = len(rows)
    if "dim" in obj and obj["dim"] != d:
        raise DimensionError(f"'dim' is {obj['dim']} but there are {d} rows")
    out = np.empty((d, d), dtype=np.complex128)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != d:
            raise DimensionError(f"row {i} does not have {d} entries")
        for j, z in enumerate(row):
            if isinstance(z, (list, tuple)):
                if len(z) != 2:
                    raise ValueError(f"entry ({i},{j}) must be [re, im]")
                out[i, j] = complex(float(z[0]), float(z[1]))
            elif isinstance(z, (int, float)) and not isinstance(z, bool):
                out[i, j] = float(z)
            else:
                raise ValueError(f"entry ({i},{j}) is not a number or [re, im] pair")
    return as_matrix(out)
