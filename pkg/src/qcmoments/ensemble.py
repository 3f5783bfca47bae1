"""Statistical layer: sampled hybrid densities and moment-field estimation.

An :class:`Ensemble` is a weighted cloud of microstates approximating a
hybrid density.  Transporting the members along the microstate flow with
frozen weights solves the Liouville equation by characteristics and serves
as the brute-force oracle for everything else.

Moment fields on a phase-space grid are estimated by Gaussian-kernel
regression: the node value of the k-th moment is
``sum_i w_i K(xi - xi_i) (psi_i)^(x k)``.  The same kernel weights are used
for all orders, so the trace chain between orders holds exactly and the
estimated conditional states are convex combinations of projectors (hence
positive semidefinite).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import PhaseGrid
from .scenario import ConditionalMixtureField, OperatorField
from .ehrenfest import hybrid_energy, integrate_states
from .pauli import partial_trace_first, tensor_square, unpack_twobody

__all__ = [
    "Ensemble",
    "MomentField",
    "ThirdMomentField",
    "sample_initial",
    "propagate",
    "silverman_bandwidth",
    "estimate_moment_field",
    "estimate_dot_field",
    "exact_moment_field",
    "exact_third_moment",
    "average_observable",
    "average_product",
    "factorize",
    "hybrid_entropy",
    "UNDEFINED_CONDITIONAL_THRESHOLD",
]

#: Below this marginal density the conditional state is treated as undefined.
UNDEFINED_CONDITIONAL_THRESHOLD = 1e-12

_CHUNK = 2048


@dataclass
class Ensemble:
    """Weighted microstates (weights sum to one) with provenance metadata."""

    weights: np.ndarray       # (N,)
    r: np.ndarray             # (N,)
    p: np.ndarray             # (N,)
    n: np.ndarray             # (N, 3) Bloch vectors
    time: float = 0.0
    rng_seed: int | None = None
    origin: str = "unknown"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.size < 1:
            raise ValueError("ensemble needs at least one member")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to one, got {total!r}")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def size(self) -> int:
        return self.weights.size

    def member_mu(self) -> np.ndarray:
        """Pauli coordinates (N, 4) of the members' pure projectors."""
        mu = np.empty((self.size, 4))
        mu[:, 0] = 0.5
        mu[:, 1:] = 0.5 * self.n
        return mu

    def energies(self, hamiltonian: OperatorField) -> np.ndarray:
        return np.asarray(hybrid_energy(self.r, self.p, self.n, hamiltonian))


@dataclass
class MomentField:
    """Quantum moments of orders <= 2 sampled on a phase-space grid.

    ``f_c`` is the classical marginal; ``first`` holds the Pauli coordinates
    of the unnormalized first moment (so ``f_c == 2 * first[..., 0]``);
    ``second`` holds the packed symmetric two-body coordinates when present.
    """

    grid: PhaseGrid
    order: int
    f_c: np.ndarray                    # (n_r, n_p)
    first: np.ndarray | None = None    # (n_r, n_p, 4)
    second: np.ndarray | None = None   # (n_r, n_p, 10)

    def __post_init__(self):
        if self.order >= 1 and self.first is None:
            raise ValueError("order >= 1 requires first-moment data")
        if self.order >= 2 and self.second is None:
            raise ValueError("order >= 2 requires second-moment data")


@dataclass
class ThirdMomentField:
    """Third quantum moment as a full symmetric coefficient array.

    Only the contraction against one operator slot is ever needed, so the
    unpacked (n_r, n_p, 4, 4, 4) array is kept as is.
    """

    grid: PhaseGrid
    coeffs: np.ndarray


def sample_initial(density: ConditionalMixtureField, n_samples: int,
                   seed: int) -> Ensemble:
    """Equal-weight Monte Carlo draw from a conditional-mixture density.

    Classical points come from the density's own sampler; the quantum state
    picks a mixture component at the drawn point.  Deterministic for a given
    seed.
    """
    if n_samples < 1:
        raise ValueError(f"need at least one sample, got {n_samples}")
    rng = np.random.default_rng(seed)
    r, p = density.sample_classical(rng, n_samples)
    weights, bloch = density.mixture(r, p)
    if np.max(np.abs(weights.sum(axis=-1) - 1.0)) > 1e-9:
        raise ValueError("mixture weights do not sum to one; "
                         "density is not normalizable as given")
    cdf = np.cumsum(weights, axis=-1)
    u = rng.random(n_samples)
    component = np.sum(u[:, None] > cdf, axis=-1)
    n = np.take_along_axis(bloch, component[:, None, None], axis=1)[:, 0, :]
    return Ensemble(weights=np.full(n_samples, 1.0 / n_samples),
                    r=np.asarray(r, dtype=float), p=np.asarray(p, dtype=float),
                    n=n, time=0.0, rng_seed=seed, origin=density.name)


def propagate(ens: Ensemble, hamiltonian: OperatorField, t: float,
              dt: float) -> Ensemble:
    """Transport every member along the microstate flow for time ``t``.

    Weights are untouched (Liouville transport along characteristics);
    negative ``t`` integrates backwards.
    """
    r, p, n, _, aborted = integrate_states(ens.r, ens.p, ens.n, hamiltonian,
                                           t, dt)
    if aborted:
        raise FloatingPointError("ensemble propagation hit a non-finite state")
    return replace(ens, r=r, p=p, n=n, time=ens.time + t)


def silverman_bandwidth(ens: Ensemble) -> float:
    """Rule-of-thumb kernel width from the classical sample spread."""
    sigma = np.sqrt(0.5 * (np.var(ens.r) + np.var(ens.p)))
    return float(sigma * ens.size ** (-1.0 / 6.0))


def _member_channels(ens: Ensemble, k: int) -> np.ndarray:
    """Per-member moment payload of shape (N, channels) for order k."""
    if k == 0:
        return np.ones((ens.size, 1))
    mu = ens.member_mu()
    if k == 1:
        return mu
    if k == 2:
        return tensor_square(mu)
    if k == 3:
        cube = np.einsum("mj,mk,ml->mjkl", mu, mu, mu)
        return cube.reshape(ens.size, 64)
    raise ValueError(f"moment order must be 0..3, got {k}")


def _kernel_matrix(ens_r, ens_p, grid: PhaseGrid, bandwidth: float,
                   sl: slice) -> np.ndarray:
    rg = grid.r_centers
    pg = grid.p_centers
    dr2 = (rg[:, None] - ens_r[None, sl]) ** 2     # (n_r, chunk)
    dp2 = (pg[:, None] - ens_p[None, sl]) ** 2     # (n_p, chunk)
    inv = -0.5 / bandwidth**2
    kr = np.exp(inv * dr2)
    kp = np.exp(inv * dp2)
    norm = 1.0 / (2.0 * np.pi * bandwidth**2)
    # (n_r, n_p, chunk) separable product
    return norm * kr[:, None, :] * kp[None, :, :]


def estimate_moment_field(ens: Ensemble, grid: PhaseGrid, k: int,
                          bandwidth: float | None = None) -> MomentField:
    """Gaussian-kernel regression of the k-th moment field (k = 0, 1, 2).

    Every order reuses the same kernel weights, so partial traces of the
    estimate reproduce the lower-order estimates exactly.
    """
    if ens.size < 1:
        raise ValueError("cannot estimate fields from an empty ensemble")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(ens)
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    # the zeroth and first payloads are always carried; they are cheap and
    # keep the trace-chain identities visible at every order
    payload = [_member_channels(ens, 0), _member_channels(ens, 1)]
    if k >= 2:
        payload.append(_member_channels(ens, 2))
    payload = np.concatenate(payload, axis=1)
    weighted = ens.weights[:, None] * payload
    acc = np.zeros((grid.n_r, grid.n_p, payload.shape[1]))
    for start in range(0, ens.size, _CHUNK):
        sl = slice(start, min(start + _CHUNK, ens.size))
        kern = _kernel_matrix(ens.r, ens.p, grid, bandwidth, sl)
        acc += np.einsum("rpm,mc->rpc", kern, weighted[sl])
    f_c = acc[..., 0]
    first = acc[..., 1:5]
    second = acc[..., 5:15] if k >= 2 else None
    return MomentField(grid=grid, order=k, f_c=f_c, first=first, second=second)


def estimate_dot_field(ens_plus: Ensemble, ens_minus: Ensemble,
                       grid: PhaseGrid, bandwidth: float,
                       delta: float, k: int = 1):
    """Central-difference time derivative of a moment field, with errors.

    Both ensembles must hold the same members at times ``t +- delta``; the
    per-member difference quotient then estimates the field's time
    derivative, and its member-to-member spread gives a standard-error
    field.  Returns ``(dot, se)`` where ``dot`` packs
    ``[dF_C, d(first) x4]`` plus ten ``d(second)`` channels when ``k >= 2``.
    """
    if ens_plus.size != ens_minus.size:
        raise ValueError("central-difference ensembles must pair up members")
    n = ens_plus.size
    pay_p = [_member_channels(ens_plus, 0), _member_channels(ens_plus, 1)]
    pay_m = [_member_channels(ens_minus, 0), _member_channels(ens_minus, 1)]
    if k >= 2:
        pay_p.append(_member_channels(ens_plus, 2))
        pay_m.append(_member_channels(ens_minus, 2))
    pay_p = np.concatenate(pay_p, axis=1)
    pay_m = np.concatenate(pay_m, axis=1)
    mean = np.zeros((grid.n_r, grid.n_p, pay_p.shape[1]))
    sq = np.zeros_like(mean)
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(start + _CHUNK, n))
        kp = _kernel_matrix(ens_plus.r, ens_plus.p, grid, bandwidth, sl)
        km = _kernel_matrix(ens_minus.r, ens_minus.p, grid, bandwidth, sl)
        d = (np.einsum("rpm,mc->rpmc", kp, pay_p[sl])
             - np.einsum("rpm,mc->rpmc", km, pay_m[sl])) / (2.0 * delta)
        mean += d.sum(axis=2)
        sq += (d * d).sum(axis=2)
    mean /= n
    var = np.maximum(sq / n - mean**2, 0.0)
    se = np.sqrt(var / n)
    return mean, se


def exact_moment_field(density: ConditionalMixtureField, grid: PhaseGrid,
                       k: int) -> MomentField:
    """Closed-form moment field of a conditional-mixture density."""
    R, P = grid.meshgrid()
    f_c = density.classical_density(R, P)
    first = density.first_moment_coords(R, P) if k >= 1 else None
    second = density.second_moment_coords(R, P) if k >= 2 else None
    if first is None:
        first = np.zeros(f_c.shape + (4,))
        first[..., 0] = 0.5 * f_c
    return MomentField(grid=grid, order=k, f_c=f_c, first=first, second=second)


def exact_third_moment(density: ConditionalMixtureField,
                       grid: PhaseGrid) -> ThirdMomentField:
    R, P = grid.meshgrid()
    return ThirdMomentField(grid=grid, coeffs=density.third_moment_coords(R, P))


# ---------------------------------------------------------------------------
# averages, factorization, entropy


def average_observable(observable: OperatorField,
                       source: Ensemble | MomentField) -> float:
    """Statistical average of a hybrid observable.

    Ensemble form: ``sum_i w_i Tr(rho_i A(xi_i))``.  Field form: midpoint
    quadrature of ``Tr(rho(xi) A(xi)) = 2 sum_j a_j A_j``.
    """
    if isinstance(source, Ensemble):
        a = observable.value(source.r, source.p)
        f = 2.0 * np.einsum("mj,mj->m", source.member_mu(), a)
        return float(np.sum(source.weights * f))
    R, P = source.grid.meshgrid()
    a = observable.value(R, P)
    density = 2.0 * np.einsum("rpj,rpj->rp", source.first, a)
    return float(source.grid.integrate(density))


def average_product(obs_a: OperatorField, obs_b: OperatorField,
                    source: Ensemble | MomentField) -> float:
    """Average of the pointwise product of two hybrid observables.

    Needs the second moment in field form:
    ``Tr(rho2 (A x B)) = 4 a^T t b`` per node.
    """
    if isinstance(source, Ensemble):
        mu = source.member_mu()
        fa = 2.0 * np.einsum("mj,mj->m", mu, obs_a.value(source.r, source.p))
        fb = 2.0 * np.einsum("mj,mj->m", mu, obs_b.value(source.r, source.p))
        return float(np.sum(source.weights * fa * fb))
    if source.second is None:
        raise ValueError("field source carries no second moment; "
                         "estimate with k=2 to average products")
    R, P = source.grid.meshgrid()
    a = obs_a.value(R, P)
    b = obs_b.value(R, P)
    t = unpack_twobody(source.second)
    density = 4.0 * np.einsum("rpj,rpjk,rpk->rp", a, t, b)
    return float(source.grid.integrate(density))


def factorize(field_: MomentField,
              threshold: float = UNDEFINED_CONDITIONAL_THRESHOLD):
    """Split the first moment into marginal and unit-trace conditional parts.

    Returns ``(f_c, cond, defined)``: where the marginal exceeds the
    threshold, ``cond`` holds Pauli coordinates with ``cond[..., 0] = 1/2``;
    elsewhere the node is flagged undefined and ``cond`` zeroed.
    """
    f_c = field_.f_c
    defined = f_c > threshold
    denom = np.where(defined, f_c, 1.0)
    cond = np.where(defined[..., None], field_.first / denom[..., None], 0.0)
    return f_c, cond, defined


def _conditional_eigvals_first(cond: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    radius = np.linalg.norm(cond[..., 1:], axis=-1)
    return 0.5 + radius, 0.5 - radius


def hybrid_entropy(field_: MomentField, order: int | None = None,
                   threshold: float = UNDEFINED_CONDITIONAL_THRESHOLD) -> float:
    """Entropy of the hybrid state carried by a moment field.

    Equals the Shannon entropy of the classical marginal plus the
    marginal-weighted von Neumann entropy of the conditional states
    (natural log, k_B = 1).  Indefinite node operators are rejected with
    the offending node named.
    """
    if order is None:
        order = field_.order
    f_c = field_.f_c
    defined = f_c > threshold
    safe_fc = np.where(defined, f_c, 1.0)
    classical = -np.where(defined, f_c * np.log(safe_fc), 0.0)
    total = field_.grid.integrate(classical)
    if order == 0:
        return float(total)

    if order == 1:
        _, cond, defined = factorize(field_, threshold)
        lam_hi, lam_lo = _conditional_eigvals_first(cond)
        bad = defined & (lam_lo < -1e-10)
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise ValueError(
                f"indefinite conditional state at node (i={idx[0]}, j={idx[1]}), "
                f"min eigenvalue {lam_lo[tuple(idx)]:.3e}")
        lam = np.stack([lam_hi, lam_lo], axis=-1)
    elif order == 2:
        if field_.second is None:
            raise ValueError("field carries no second moment")
        from .pauli import twobody_to_matrix  # local import avoids cycle noise
        denom = np.where(defined, f_c, 1.0)
        cond2 = field_.second / denom[..., None]
        mats = twobody_to_matrix(cond2[defined])
        lam_def = np.linalg.eigvalsh(mats)
        if lam_def.size and np.min(lam_def) < -1e-10:
            flat = np.argwhere(defined)
            worst = np.argmin(np.min(lam_def, axis=-1))
            idx = flat[worst]
            raise ValueError(
                f"indefinite conditional state at node (i={idx[0]}, j={idx[1]}), "
                f"min eigenvalue {np.min(lam_def):.3e}")
        lam = np.zeros(f_c.shape + (4,))
        lam[defined] = lam_def
    else:
        raise ValueError(f"entropy implemented for orders 0..2, got {order}")

    lam = np.clip(lam, 0.0, None)
    safe = np.where(lam > 0.0, lam, 1.0)
    vn = -np.sum(lam * np.log(safe), axis=-1)
    quantum = np.where(defined, f_c * vn, 0.0)
    return float(total + field_.grid.integrate(quantum))


def trace_chain_residuals(field_: MomentField) -> dict[str, float]:
    """Max-norm residuals of the exact trace identities between orders."""
    out = {"trace_first_vs_fc": float(np.max(np.abs(2.0 * field_.first[..., 0]
                                                    - field_.f_c)))}
    if field_.second is not None:
        traced = partial_trace_first(field_.second)
        out["trace_second_vs_first"] = float(np.max(np.abs(traced - field_.first)))
    return out
