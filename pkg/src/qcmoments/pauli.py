"""Pauli-basis operator algebra for a two-level quantum subsystem.

Conventions used throughout the package:

* A Hermitian 2x2 operator ``M`` is stored as four real coordinates
  ``mu[j] = Tr(M sigma_j) / 2`` in the basis ``(sigma_0, ..., sigma_3)``
  (identity plus the three Pauli matrices), so ``M = sum_j mu[j] sigma_j``.
  Density matrices have ``mu[0] == 1/2``; pure states additionally satisfy
  ``sum_j mu[j]**2 == 1/2``.
* A symmetric two-body operator ``T`` on the product space is stored as the
  ten independent entries ``t[j, k]`` (``j <= k``) of the symmetric real
  coefficient matrix in ``T = sum_{j,k} t[j, k] sigma_j (x) sigma_k``, packed
  in the order given by :data:`TWOBODY_PAIRS`.  For a second moment built
  from pure projectors, ``t[j, k]`` is the expectation ``E[mu_j mu_k]`` over
  the underlying distribution, so ``t[0, 0] = 1/4`` and the trace-back
  relation ``2 t[0, k] = mu_k`` holds.
* Commutators use the real-coordinate convention
  ``[A, B] = -i (A B - B A)``.

All functions broadcast over leading axes; coordinate arrays have the Pauli
index last.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SIGMA",
    "TWOBODY_PAIRS",
    "to_pauli",
    "from_pauli",
    "projector_from_bloch",
    "bloch_vector",
    "commutator_coords",
    "purity",
    "structure_constants",
    "tensor_square",
    "pack_twobody",
    "unpack_twobody",
    "twobody_to_matrix",
    "twobody_from_matrix",
    "partial_trace_first",
    "twobody_trace_square",
    "von_neumann_entropy",
    "mercator_entropy",
]

_SIGMA0 = np.eye(2, dtype=complex)
_SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

#: Basis matrices, shape (4, 2, 2).
SIGMA = np.stack([_SIGMA0, _SIGMA1, _SIGMA2, _SIGMA3])

#: Packing order of the ten symmetric two-body coordinates.
TWOBODY_PAIRS = [(0, 0), (0, 1), (0, 2), (0, 3),
                 (1, 1), (1, 2), (1, 3),
                 (2, 2), (2, 3), (3, 3)]

# Levi-Civita symbol on the spatial indices, embedded in 4-index space
# (entries touching index 0 vanish).
_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _EPS3[_i, _j, _k] = 1.0
    _EPS3[_j, _i, _k] = -1.0
EPS4 = np.zeros((4, 4, 4))
EPS4[1:, 1:, 1:] = _EPS3


def to_pauli(m, tol: float = 1e-12) -> np.ndarray:
    """Coordinates of a Hermitian 2x2 matrix, ``mu[j] = Tr(M sigma_j) / 2``.

    Rejects non-Hermitian input, reporting the largest asymmetry found.
    Accepts stacked matrices of shape (..., 2, 2).
    """
    m = np.asarray(m, dtype=complex)
    asym = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))))
    if asym > tol:
        raise ValueError(f"matrix is not Hermitian: max asymmetry {asym:.3e}")
    mu = 0.5 * np.einsum("...ab,jba->...j", m, SIGMA)
    return np.real(mu)


def from_pauli(mu) -> np.ndarray:
    """Reconstruct the 2x2 matrix ``sum_j mu[j] sigma_j`` from coordinates."""
    mu = np.asarray(mu, dtype=float)
    return np.einsum("...j,jab->...ab", mu, SIGMA)


def projector_from_bloch(n, tol: float = 1e-10) -> np.ndarray:
    """Coordinates of the pure-state projector with Bloch vector ``n``.

    ``n`` must be a unit vector (shape (..., 3)); the result has
    ``mu = (1/2, n/2)`` and reconstructs to an idempotent trace-1 matrix.
    """
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n, axis=-1)
    err = np.max(np.abs(norm - 1.0))
    if err > tol:
        raise ValueError(f"Bloch vector is not unit length: |n| off by {err:.3e}")
    mu = np.empty(n.shape[:-1] + (4,))
    mu[..., 0] = 0.5
    mu[..., 1:] = 0.5 * n
    return mu


def bloch_vector(mu) -> np.ndarray:
    """Bloch vector ``Tr(M sigma_k) = 2 mu[k]`` of a one-body operator."""
    mu = np.asarray(mu, dtype=float)
    return 2.0 * mu[..., 1:]


def commutator_coords(a, b) -> np.ndarray:
    """Coordinates of ``[A, B] = -i (A B - B A)``.

    In coordinates this is ``2 (a x b)`` on the spatial components; the
    identity component is in the center of the algebra and drops out.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    out[..., 1:] = 2.0 * np.cross(a[..., 1:], b[..., 1:])
    return out


def purity(mu) -> np.ndarray | float:
    """``sum_j mu[j]**2``, equal to ``Tr(M^2) / 2`` of the reconstruction.

    Density matrices satisfy ``purity <= 1/2`` with equality iff pure.
    """
    mu = np.asarray(mu, dtype=float)
    return np.sum(mu * mu, axis=-1)


def structure_constants() -> np.ndarray:
    """Table ``c[j, k, l]`` with ``[H, rho]_j = sum_{k,l} c[j,k,l] mu_k H_l``.

    Antisymmetric in (k, l); every entry with an index 0 vanishes.
    """
    # result index j, state index k, generator index l
    return 2.0 * np.einsum("lkj->jkl", EPS4)


# ---------------------------------------------------------------------------
# symmetric two-body coordinates


def pack_twobody(t) -> np.ndarray:
    """Pack a symmetric (..., 4, 4) coefficient matrix into 10 coordinates."""
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., j, k] for j, k in TWOBODY_PAIRS], axis=-1)


def unpack_twobody(coords) -> np.ndarray:
    """Expand 10 packed coordinates into the symmetric (..., 4, 4) matrix."""
    coords = np.asarray(coords, dtype=float)
    t = np.zeros(coords.shape[:-1] + (4, 4))
    for idx, (j, k) in enumerate(TWOBODY_PAIRS):
        t[..., j, k] = coords[..., idx]
        t[..., k, j] = coords[..., idx]
    return t


def tensor_square(mu) -> np.ndarray:
    """Packed coordinates of ``M (x) M`` for a one-body operator."""
    mu = np.asarray(mu, dtype=float)
    return np.stack([mu[..., j] * mu[..., k] for j, k in TWOBODY_PAIRS], axis=-1)


def twobody_to_matrix(coords) -> np.ndarray:
    """Dense 4x4 matrix of a packed symmetric two-body operator.

    Exists for oracle tests, entropies and positivity diagnostics; the
    coordinate form is the working representation everywhere else.
    """
    t = unpack_twobody(coords)
    kron = np.einsum("jab,kcd->jkacbd", SIGMA, SIGMA).reshape(4, 4, 4, 4)
    return np.einsum("...jk,jkab->...ab", t, kron)


def twobody_from_matrix(m, tol: float = 1e-10) -> np.ndarray:
    """Packed coordinates of a Hermitian, swap-symmetric 4x4 matrix."""
    m = np.asarray(m, dtype=complex)
    asym = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))))
    if asym > tol:
        raise ValueError(f"matrix is not Hermitian: max asymmetry {asym:.3e}")
    kron = np.einsum("jab,kcd->jkacbd", SIGMA, SIGMA).reshape(4, 4, 4, 4)
    # Tr[(sigma_j x sigma_k) M] = 4 t[j, k]
    t = 0.25 * np.real(np.einsum("...ab,jkba->...jk", m, kron))
    sym_err = np.max(np.abs(t - np.swapaxes(t, -1, -2)))
    if sym_err > tol:
        raise ValueError(f"matrix is not swap-symmetric: asymmetry {sym_err:.3e}")
    return pack_twobody(t)


def partial_trace_first(coords) -> np.ndarray:
    """Trace over the first tensor factor, ``Tr_1(A x B) = Tr(A) B``.

    For packed coordinates this is ``mu_k = 2 t[0, k]``, consistent with the
    chain of traces that steps one moment order down.
    """
    coords = np.asarray(coords, dtype=float)
    return 2.0 * coords[..., :4]


def twobody_trace_square(coords) -> np.ndarray | float:
    """``Tr(T^2) = 4 sum_{j,k} t[j,k]^2`` of a packed two-body operator."""
    t = unpack_twobody(coords)
    return 4.0 * np.sum(t * t, axis=(-1, -2))


# ---------------------------------------------------------------------------
# entropies


def _checked_spectrum(m, tol: float) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    lam = np.linalg.eigvalsh(m)
    if np.min(lam) < -tol:
        raise ValueError(f"operator is not positive semidefinite: "
                         f"min eigenvalue {np.min(lam):.3e}")
    tr = np.sum(lam, axis=-1)
    if np.max(np.abs(tr - 1.0)) > tol:
        raise ValueError(f"operator is not trace normalized: Tr = {tr}")
    return np.clip(lam, 0.0, None)


def von_neumann_entropy(m, tol: float = 1e-10) -> float:
    """``-Tr(M log M)`` for a density matrix (natural log, k_B = 1).

    ``0 log 0`` counts as zero.  Rejects spectra below ``-tol`` or trace
    away from one.
    """
    lam = _checked_spectrum(m, tol)
    safe = np.where(lam > 0.0, lam, 1.0)
    return float(-np.sum(lam * np.log(safe)))


def mercator_entropy(m, order: int, tol: float = 1e-10) -> float:
    """Polynomial entropy from the series of ``log`` around the identity.

    Truncates ``-Tr(M log M) = sum_{k>=1} Tr(M (I - M)^k) / k`` at ``order``
    terms.  Order 1 equals ``1 - Tr(M^2)``; for spectra in (0, 1] the
    truncations increase monotonically toward the von Neumann entropy.
    """
    if order < 1:
        raise ValueError(f"series order must be >= 1, got {order}")
    lam = _checked_spectrum(m, tol)
    x = 1.0 - lam
    total = 0.0
    power = x.copy()
    for k in range(1, order + 1):
        total += np.sum(lam * power) / k
        power *= x
    return float(total)
