"""The moment hierarchy: time derivatives of quantum moment fields.

The transported density induces coupled equations for its quantum moments:
the k-th moment feels a commutator with the (sum-embedded) operator and a
classical-bracket term that contracts the (k+1)-th moment, so no level
closes on its own.  In packed coordinates, with ``a_j(xi)`` the first-moment
coordinates, ``B_{jk}(xi)`` the symmetric second-moment coefficients and
``H_j(xi)`` the operator coordinates:

    da_k = sum_{m,l} c^k_{ml} a_m H_l + 2 sum_j { H_j, B_{jk} }_C

with ``{f, g}_C = dR f dP g - dP f dR g`` and the structure-constant table
of :func:`qcmoments.pauli.structure_constants`.  Tracing the first slot of
the level-2 equation reproduces the level-1 equation, and the trace of the
level-1 equation closes by itself into the marginal transport equation --
both identities are exact at the stencil level and are exercised by tests.

The theta-decomposition machinery realizes a one-parameter family of
densities sharing a first moment but differing in their second moment; the
scan over it exhibits how the first-moment tangent depends on that choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PhaseGrid, partial_deriv
from .pauli import (TWOBODY_PAIRS, commutator_coords, partial_trace_first,
                    tensor_square, unpack_twobody, pack_twobody, EPS4)
from .scenario import ConditionalMixtureField, OperatorField
from .ensemble import MomentField, ThirdMomentField

__all__ = [
    "HierarchyRHS",
    "first_moment_rhs",
    "kth_moment_rhs",
    "marginal_rhs",
    "average_rate",
    "theta_decomposition",
    "theta_family_mixture",
    "fig1_scan",
]


@dataclass
class HierarchyRHS:
    """Node-wise time derivatives of moment fields."""

    grid: PhaseGrid
    d_f_c: np.ndarray                   # (n_r, n_p)
    d_first: np.ndarray | None = None   # (n_r, n_p, 4)
    d_second: np.ndarray | None = None  # (n_r, n_p, 10)


def _classical_bracket(h_r, h_p, f, grid: PhaseGrid, order: int,
                       boundary: str) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference derivatives of a field along both axes."""
    d_r = partial_deriv(f, grid.dr, axis=0, order=order, boundary=boundary)
    d_p = partial_deriv(f, grid.dp, axis=1, order=order, boundary=boundary)
    return d_r, d_p


def _check_grids(*fields):
    first = fields[0].grid
    for f in fields[1:]:
        if f.grid != first:
            raise ValueError("moment fields live on different grids")
    return first


def first_moment_rhs(first: MomentField, second: MomentField,
                     hamiltonian: OperatorField, fd_order: int = 4,
                     boundary: str = "one_sided") -> HierarchyRHS:
    """Tangent of the first moment given the second.

    Commutator term plus the partial-traced classical bracket against the
    second moment.  The fields must share a grid and the second moment must
    trace back to the first.
    """
    grid = _check_grids(first, second)
    traced = partial_trace_first(second.second)
    mismatch = np.max(np.abs(traced - first.first))
    scale = max(np.max(np.abs(first.first)), 1e-300)
    if mismatch > 1e-6 * scale:
        raise ValueError(f"second moment does not trace back to the first "
                         f"(max mismatch {mismatch:.3e})")

    R, P = grid.meshgrid()
    h = hamiltonian.value(R, P)
    dh_r = hamiltonian.d_r(R, P)
    dh_p = hamiltonian.d_p(R, P)

    a = first.first
    b = unpack_twobody(second.second)            # (n_r, n_p, 4, 4)
    db_r = partial_deriv(b, grid.dr, axis=0, order=fd_order, boundary=boundary)
    db_p = partial_deriv(b, grid.dp, axis=1, order=fd_order, boundary=boundary)

    d_first = commutator_coords(h, a)
    d_first += 2.0 * (np.einsum("rpj,rpjk->rpk", dh_r, db_p)
                      - np.einsum("rpj,rpjk->rpk", dh_p, db_r))
    return HierarchyRHS(grid=grid, d_f_c=2.0 * d_first[..., 0], d_first=d_first)


def _twobody_commutator(h: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Coordinates of ``[H x I + I x H, T]`` for symmetric T.

    Acting on either slot contracts the one-body rule through the
    Levi-Civita tensor; symmetry of T keeps the result symmetric.
    """
    first_slot = 2.0 * np.einsum("ljm,rpl,rpjk->rpmk", EPS4, h, t)
    second_slot = 2.0 * np.einsum("lkm,rpl,rpjk->rpjm", EPS4, h, t)
    return first_slot + second_slot


def kth_moment_rhs(k: int, moment_k: MomentField,
                   moment_k_plus_1: MomentField | ThirdMomentField,
                   hamiltonian: OperatorField, fd_order: int = 4,
                   boundary: str = "one_sided") -> HierarchyRHS:
    """Tangent of the k-th moment (k = 1 or 2) given the next moment up."""
    if k == 1:
        if not isinstance(moment_k_plus_1, MomentField):
            raise TypeError("level-1 equation needs a second-moment field")
        return first_moment_rhs(moment_k, moment_k_plus_1, hamiltonian,
                                fd_order=fd_order, boundary=boundary)
    if k != 2:
        raise ValueError(f"hierarchy levels 1 and 2 are implemented, got k={k}")
    if not isinstance(moment_k_plus_1, ThirdMomentField):
        raise TypeError("level-2 equation needs a third-moment field")
    grid = moment_k.grid
    if moment_k_plus_1.grid != grid:
        raise ValueError("moment fields live on different grids")

    R, P = grid.meshgrid()
    h = hamiltonian.value(R, P)
    dh_r = hamiltonian.d_r(R, P)
    dh_p = hamiltonian.d_p(R, P)

    t = unpack_twobody(moment_k.second)
    d_t = _twobody_commutator(h, t)

    s = moment_k_plus_1.coeffs                   # (n_r, n_p, 4, 4, 4)
    ds_r = partial_deriv(s, grid.dr, axis=0, order=fd_order, boundary=boundary)
    ds_p = partial_deriv(s, grid.dp, axis=1, order=fd_order, boundary=boundary)
    d_t += 2.0 * (np.einsum("rpj,rpjkl->rpkl", dh_r, ds_p)
                  - np.einsum("rpj,rpjkl->rpkl", dh_p, ds_r))

    d_second = pack_twobody(d_t)
    d_first = partial_trace_first(d_second)
    return HierarchyRHS(grid=grid, d_f_c=2.0 * d_first[..., 0],
                        d_first=d_first, d_second=d_second)


def marginal_rhs(first: MomentField, hamiltonian: OperatorField,
                 fd_order: int = 4, boundary: str = "one_sided"):
    """Tangents of the two marginals of the first moment.

    The classical marginal obeys ``dF_C = Tr({H, rho}_C)``, which needs no
    second moment; the quantum marginal integrates the commutator field.
    """
    grid = first.grid
    R, P = grid.meshgrid()
    dh_r = hamiltonian.d_r(R, P)
    dh_p = hamiltonian.d_p(R, P)
    a = first.first
    da_r = partial_deriv(a, grid.dr, axis=0, order=fd_order, boundary=boundary)
    da_p = partial_deriv(a, grid.dp, axis=1, order=fd_order, boundary=boundary)
    d_f_c = 2.0 * (np.einsum("rpj,rpj->rp", dh_r, da_p)
                   - np.einsum("rpj,rpj->rp", dh_p, da_r))
    h = hamiltonian.value(R, P)
    comm = commutator_coords(h, a)
    d_marginal = grid.integrate(comm)
    return d_f_c, d_marginal


def average_rate(observable: OperatorField, first: MomentField,
                 second: MomentField, hamiltonian: OperatorField) -> float:
    """Time derivative of the observable's statistical average.

    Evaluated in the form that needs no field derivatives: a commutator
    pairing with the first moment plus the antisymmetrized operator-gradient
    pairing with the second moment.  For the generator itself both terms
    vanish identically.
    """
    grid = _check_grids(first, second)
    R, P = grid.meshgrid()
    a_coords = observable.value(R, P)
    h = hamiltonian.value(R, P)
    comm = commutator_coords(a_coords, h)        # [A, H]
    term1 = 2.0 * np.einsum("rpj,rpj->rp", comm, first.first)
    da_r = observable.d_r(R, P)
    da_p = observable.d_p(R, P)
    dh_r = hamiltonian.d_r(R, P)
    dh_p = hamiltonian.d_p(R, P)
    t = unpack_twobody(second.second)
    term2 = 4.0 * (np.einsum("rpj,rpjk,rpk->rp", da_r, t, dh_p)
                   - np.einsum("rpj,rpjk,rpk->rp", dh_r, t, da_p))
    return float(grid.integrate(term1 + term2))


# ---------------------------------------------------------------------------
# the one-parameter family of densities sharing a first moment


def _ray_second_intersection(n1: np.ndarray, r: np.ndarray):
    """Second sphere intersection of the ray from n1 through r, and weights.

    Solves ``|n1 + t (r - n1)| = 1`` for the root ``t > 0``; the weights put
    the barycenter at r.  Broadcasts over leading axes.  The degenerate case
    ``r == n1`` gets the collinear limit (all weight on the pinned
    projector).
    """
    d = r - n1
    d2 = np.einsum("...k,...k->...", d, d)
    nd = np.einsum("...k,...k->...", n1, d)
    degenerate = d2 <= 0.0
    safe_d2 = np.where(degenerate, 1.0, d2)
    t = np.where(degenerate, 1.0, -2.0 * nd / safe_d2)
    n2 = np.where(degenerate[..., None], -n1 * np.ones_like(d),
                  n1 + t[..., None] * d)
    w1 = np.where(degenerate, 1.0, 1.0 - 1.0 / t)
    return w1, n2


def theta_decomposition(rho_cond: np.ndarray, theta: float):
    """Two-projector decomposition of a mixed state with one direction fixed.

    ``rho_cond`` holds Pauli coordinates of a strictly mixed density matrix.
    One projector is pinned at Bloch direction ``(sin theta, 0, cos theta)``;
    the second direction and both weights follow from the sphere geometry.
    Returns ``(w1, n1, w2, n2)``.  Pure states are rejected (their
    decomposition is unique, so the angle is not free), as is a ray anchor
    equal to the state's own Bloch vector.
    """
    rho_cond = np.asarray(rho_cond, dtype=float)
    if abs(rho_cond[0] - 0.5) > 1e-10:
        raise ValueError(f"not a unit-trace state: mu0 = {rho_cond[0]!r}")
    r = 2.0 * rho_cond[1:]
    radius = np.linalg.norm(r)
    if radius >= 1.0 - 1e-12:
        raise ValueError("state is pure; its projector decomposition is "
                         "unique and the angle is not free")
    n1 = np.array([np.sin(theta), 0.0, np.cos(theta)])
    if np.linalg.norm(r - n1) < 1e-14:
        raise ValueError("degenerate ray: the state sits on the chosen "
                         "projector direction")
    w1, n2 = _ray_second_intersection(n1, r)
    w1 = float(w1)
    return w1, n1, 1.0 - w1, np.asarray(n2, dtype=float)


def theta_family_mixture(density: ConditionalMixtureField,
                         theta: float) -> ConditionalMixtureField:
    """Rebuild a density as the theta-pinned two-projector family member.

    Shares the original's classical marginal and first moment for every
    angle; only the second and higher moments move.  At points where the
    conditional is pure the pinned projector carries zero weight, which is
    the continuous limit of the construction.
    """
    base_density = density.classical_density

    def mixture(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        weights, bloch = density.mixture(R, P)
        r = np.einsum("...m,...mk->...k", weights, bloch)
        n1 = np.zeros(r.shape)
        n1[..., 0] = np.sin(theta)
        n1[..., 2] = np.cos(theta)
        w1, n2 = _ray_second_intersection(n1, r)
        shape = np.broadcast(R, P).shape
        out_w = np.empty(shape + (2,))
        out_w[..., 0] = w1
        out_w[..., 1] = 1.0 - w1
        out_n = np.stack([np.broadcast_to(n1, shape + (3,)), n2], axis=-2)
        return out_w, out_n

    return ConditionalMixtureField(classical_density=base_density,
                                   mixture=mixture,
                                   sample_classical=density.sample_classical,
                                   name=f"{density.name}[theta={theta:g}]")


def fig1_scan(hamiltonian: OperatorField, density: ConditionalMixtureField,
              r_values: np.ndarray, theta_values: np.ndarray,
              p_fixed: float = 0.0, fd_step: float = 1e-3,
              fd_order: int = 4) -> np.ndarray:
    """First-moment tangent components over a (R, theta) scan.

    For every angle the density is replaced by the theta-family member with
    the same first moment; the level-1 tangent is evaluated on a local
    five-point stencil patch around ``(R, p_fixed)``.  Returns a table of
    rows ``(R, theta, dmu1, dmu3)`` ordered with R fastest.
    """
    r_values = np.asarray(r_values, dtype=float)
    theta_values = np.asarray(theta_values, dtype=float)
    if r_values.size == 0 or theta_values.size == 0:
        raise ValueError("scan ranges must be nonempty")
    offsets = np.arange(-2, 3) * fd_step

    # patch coordinates: (theta, R, stencil_r, stencil_p)
    Rg = r_values[None, :, None, None] + offsets[None, None, :, None]
    Pg = p_fixed + offsets[None, None, None, :] + 0.0 * Rg

    rows = []
    for theta in theta_values:
        member = theta_family_mixture(density, float(theta))
        a = member.first_moment_coords(Rg[0], Pg[0])
        b = unpack_twobody(member.second_moment_coords(Rg[0], Pg[0]))
        h = hamiltonian.value(Rg[0], Pg[0])
        dh_r = hamiltonian.d_r(Rg[0], Pg[0])
        dh_p = hamiltonian.d_p(Rg[0], Pg[0])
        db_r = partial_deriv(b, fd_step, axis=1, order=fd_order,
                             boundary="one_sided")
        db_p = partial_deriv(b, fd_step, axis=2, order=fd_order,
                             boundary="one_sided")
        d_first = commutator_coords(h, a)
        d_first += 2.0 * (np.einsum("...j,...jk->...k", dh_r, db_p)
                          - np.einsum("...j,...jk->...k", dh_p, db_r))
        center = d_first[:, 2, 2, :]             # (n_R, 4) at the patch center
        for i, r_val in enumerate(r_values):
            rows.append((r_val, float(theta), center[i, 1], center[i, 3]))
    return np.array(rows)
