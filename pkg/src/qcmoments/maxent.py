"""Entropy-maximizing closure of the moment hierarchy at level one.

Given a conditional state with coordinates ``mu`` (``mu[0] = 1/2``), the
closure picks a symmetric two-body state that traces back to it and
maximizes an entropy.  The closed form maximizes the quadratic (order-one
series) entropy ignoring the covariance admissibility constraints:

    t[0, k] = mu_k / 2,   t[j, k] = 0 (j != k),
    t[k, k] = mu_k^2 + (1/2 - sum_j mu_j^2) / 3,

which distributes the total conditional variance isotropically.  The
numeric path maximizes a chosen entropy over the six free coordinates under
the full admissibility set (trace-back is built in; variance positivity,
the covariance bound, the two-body purity bound and positive
semidefiniteness are enforced), by projected gradient ascent started from
the projected closed form, with step halving on infeasibility and an
augmented-Lagrangian penalty for the spectral constraint.

Note the closed form is only an approximation: on part of the state space
(large Bloch radius away from the coordinate axes) it violates the
covariance bound and loses positive semidefiniteness.  ``check_constraints``
reports this instead of hiding it, and the numeric optimizer stays feasible
there by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import partial_deriv
from .pauli import (SIGMA, TWOBODY_PAIRS, commutator_coords, purity,
                    twobody_to_matrix, unpack_twobody)
from .scenario import OperatorField
from .ensemble import (MomentField, UNDEFINED_CONDITIONAL_THRESHOLD, factorize)
from .hierarchy import HierarchyRHS

__all__ = [
    "ConstraintReport",
    "ClosureResult",
    "check_constraints",
    "closure_closed_form",
    "closure_numeric",
    "closed_form_second_conditional",
    "effective_first_moment_rhs",
]

# packed positions of the six free conditional coordinates (j, k >= 1)
_FREE = [TWOBODY_PAIRS.index(p) for p in
         [(1, 1), (2, 2), (3, 3), (1, 2), (1, 3), (2, 3)]]
_DIAG = [TWOBODY_PAIRS.index(p) for p in [(1, 1), (2, 2), (3, 3)]]
_OFF = [TWOBODY_PAIRS.index(p) for p in [(1, 2), (1, 3), (2, 3)]]
_OFF_PAIRS = [(1, 2), (1, 3), (2, 3)]

#: Diagonal-sum value implied by pure-state support under this coordinate
#: convention (the constraint list circulates an alternative value of 1/2,
#: which is inconsistent with unit trace; both are reported).
DIAG_SUM_ADOPTED = 0.25
DIAG_SUM_STATED = 0.5


@dataclass
class ConstraintReport:
    """Signed residuals of the admissibility conditions for a moment pair.

    Equalities are residuals (want 0); slack entries are inequality margins
    (want >= 0).  ``diag_sum_stated`` is diagnostic only and excluded from
    feasibility.
    """

    traceback: np.ndarray          # 2 t[0,k] - mu_k, k = 1..3
    norm_first: float              # mu_0 - 1/2
    norm_second: float             # t[0,0] - 1/4
    purity_first_slack: float      # 1/2 - sum mu_j^2
    twobody_purity_slack: float    # 3/8 - (sum mu_0k^2 + sum_{i<=j} mu_ij^2)
    variance_slack: np.ndarray     # mu_kk - mu_k^2, k = 1..3
    diag_sum_adopted: float        # sum mu_kk - 1/4
    diag_sum_stated: float         # sum mu_kk - 1/2 (diagnostic only)
    covariance_slack: np.ndarray   # sqrt(v_i v_j) - |mu_ij - mu_i mu_j|
    min_eigenvalue: float          # of the reconstructed 4x4 (diagnostic)

    def feasible(self, tol: float = 1e-9) -> bool:
        eq = max(np.max(np.abs(self.traceback)), abs(self.norm_first),
                 abs(self.norm_second), abs(self.diag_sum_adopted))
        slack = min(self.purity_first_slack, self.twobody_purity_slack,
                    float(np.min(self.variance_slack)),
                    float(np.min(self.covariance_slack)))
        return eq <= tol and slack >= -tol

    def as_dict(self) -> dict[str, float]:
        out = {f"traceback_{k}": float(v) for k, v in zip("123", self.traceback)}
        out.update({
            "norm_first": self.norm_first,
            "norm_second": self.norm_second,
            "purity_first_slack": self.purity_first_slack,
            "twobody_purity_slack": self.twobody_purity_slack,
            "diag_sum_adopted": self.diag_sum_adopted,
            "diag_sum_stated": self.diag_sum_stated,
            "min_eigenvalue": self.min_eigenvalue,
        })
        out.update({f"variance_slack_{k}": float(v)
                    for k, v in zip("123", self.variance_slack)})
        out.update({f"covariance_slack_{i}{j}": float(v)
                    for (i, j), v in zip(_OFF_PAIRS, self.covariance_slack)})
        return out


@dataclass
class ClosureResult:
    """Closure output: conditional second moment plus bookkeeping."""

    second: np.ndarray             # packed conditional coordinates (10,)
    entropy_value: float
    method: str
    report: ConstraintReport
    converged: bool = True
    iterations: int = 0
    messages: list = field(default_factory=list)


def check_constraints(first: np.ndarray, second: np.ndarray) -> ConstraintReport:
    """Signed residual report for a conditional (first, second) moment pair."""
    mu = np.asarray(first, dtype=float)
    c = np.asarray(second, dtype=float)
    t = unpack_twobody(c)
    traceback = 2.0 * t[0, 1:] - mu[1:]
    variance = np.array([t[k, k] - mu[k] ** 2 for k in (1, 2, 3)])
    cov = []
    for i, j in _OFF_PAIRS:
        vi = t[i, i] - mu[i] ** 2
        vj = t[j, j] - mu[j] ** 2
        bound = np.sqrt(max(vi, 0.0) * max(vj, 0.0))
        cov.append(bound - abs(t[i, j] - mu[i] * mu[j]))
    diag = t[1, 1] + t[2, 2] + t[3, 3]
    sum_sq = float(np.sum(c[1:4] ** 2) + np.sum(c[4:] ** 2))
    lam = np.linalg.eigvalsh(twobody_to_matrix(c))
    return ConstraintReport(
        traceback=traceback,
        norm_first=float(mu[0] - 0.5),
        norm_second=float(t[0, 0] - 0.25),
        purity_first_slack=float(0.5 - purity(mu)),
        twobody_purity_slack=float(3.0 / 8.0 - sum_sq),
        variance_slack=variance,
        diag_sum_adopted=float(diag - DIAG_SUM_ADOPTED),
        diag_sum_stated=float(diag - DIAG_SUM_STATED),
        covariance_slack=np.array(cov),
        min_eigenvalue=float(np.min(lam)),
    )


def closed_form_second_conditional(mu) -> np.ndarray:
    """Vectorized closed-form closure; ``mu`` has shape (..., 4).

    Returns packed conditional coordinates of shape (..., 10).
    """
    mu = np.asarray(mu, dtype=float)
    spread = (0.5 - np.sum(mu * mu, axis=-1)) / 3.0
    out = np.zeros(mu.shape[:-1] + (10,))
    out[..., 0] = 0.25
    out[..., 1:4] = 0.5 * mu[..., 1:]
    for k, idx in zip((1, 2, 3), _DIAG):
        out[..., idx] = mu[..., k] ** 2 + spread
    return out


def _linear_entropy(coords: np.ndarray) -> float:
    t = unpack_twobody(coords)
    return float(1.0 - 4.0 * np.sum(t * t))


def closure_closed_form(first: np.ndarray) -> ClosureResult:
    """Closed-form closure of a valid conditional first moment.

    Rejects inputs that are not unit-trace states or exceed the pure-state
    purity.  The reported entropy is the order-one series value
    ``1 - Tr(T^2)``.
    """
    mu = np.asarray(first, dtype=float)
    if abs(mu[0] - 0.5) > 1e-10:
        raise ValueError(f"not a unit-trace conditional state: mu0 = {mu[0]!r}")
    p = purity(mu)
    if p > 0.5 + 1e-10:
        raise ValueError(f"purity {p:.12f} exceeds the pure-state bound 1/2")
    coords = closed_form_second_conditional(mu)
    return ClosureResult(second=coords, entropy_value=_linear_entropy(coords),
                         method="closed-form",
                         report=check_constraints(mu, coords))


# ---------------------------------------------------------------------------
# numeric closure


def _assemble(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    coords = np.zeros(10)
    coords[0] = 0.25
    coords[1:4] = 0.5 * mu[1:]
    coords[_FREE] = x
    return coords


_BASIS_MATS = None


def _free_basis_matrices() -> np.ndarray:
    """d(matrix)/d(free coordinate) for the six free coordinates."""
    global _BASIS_MATS
    if _BASIS_MATS is None:
        mats = []
        for idx in _FREE:
            j, k = TWOBODY_PAIRS[idx]
            m = np.kron(SIGMA[j], SIGMA[k])
            if j != k:
                m = m + np.kron(SIGMA[k], SIGMA[j])
            mats.append(m)
        _BASIS_MATS = np.stack(mats)
    return _BASIS_MATS


def _entropy_and_gradient(mu: np.ndarray, x: np.ndarray, kind,
                          psd_weight: float, multipliers: np.ndarray):
    """Objective (entropy minus spectral penalty) and its free-coord gradient."""
    coords = _assemble(mu, x)
    mat = twobody_to_matrix(coords)
    lam, vec = np.linalg.eigh(mat)
    if kind == "exact":
        live = lam > 1e-12
        safe = np.where(live, lam, 1.0)
        value = float(-np.sum(np.where(live, lam * np.log(safe), 0.0)))
        slope = np.where(live, -np.log(safe) - 1.0, 0.0)
    else:
        order = int(kind)
        xs = 1.0 - lam
        value = 0.0
        slope = np.zeros(4)
        power_prev = np.ones(4)                  # (1 - lam)^(k-1)
        for k in range(1, order + 1):
            power = power_prev * xs
            value += float(np.sum(lam * power)) / k
            # d/dlam of lam (1-lam)^k
            slope += (power - k * lam * power_prev) / k
            power_prev = power

    neg = np.minimum(lam, 0.0)
    value -= float(np.sum(multipliers * (-neg)) + 0.5 * psd_weight * np.sum(neg**2))
    slope += np.where(lam < 0.0, multipliers + psd_weight * (-neg), 0.0)

    basis = _free_basis_matrices()
    # d lam_i / d x_m = <v_i| G_m |v_i>
    dldx = np.real(np.einsum("ai,mab,bi->im", np.conj(vec), basis, vec))
    grad = dldx.T @ slope
    return value, grad, lam


def _project_free(mu: np.ndarray, x: np.ndarray, sweeps: int = 60) -> np.ndarray:
    """Project free coordinates onto the non-spectral admissible set.

    Alternates the affine diagonal-sum projection with variance and
    covariance clipping; the set is convex, so the sweep converges.
    """
    x = x.copy()
    mu_sq = mu[1:] ** 2
    for _ in range(sweeps):
        x[:3] += (DIAG_SUM_ADOPTED - x[:3].sum()) / 3.0
        x[:3] = np.maximum(x[:3], mu_sq)
        changed = abs(x[:3].sum() - DIAG_SUM_ADOPTED) > 1e-15
        v = x[:3] - mu_sq
        for m, (i, j) in enumerate(_OFF_PAIRS):
            center = mu[i] * mu[j]
            half = np.sqrt(v[i - 1] * v[j - 1])
            x[3 + m] = np.clip(x[3 + m], center - half, center + half)
        if not changed:
            break
    return x


def _box_feasible(mu: np.ndarray, x: np.ndarray, tol: float) -> bool:
    """Non-spectral admissibility only; the spectral part is the penalty's job."""
    mu_sq = mu[1:] ** 2
    if abs(x[:3].sum() - DIAG_SUM_ADOPTED) > tol:
        return False
    v = x[:3] - mu_sq
    if np.min(v) < -tol:
        return False
    v = np.maximum(v, 0.0)
    for m, (i, j) in enumerate(_OFF_PAIRS):
        if (abs(x[3 + m] - mu[i] * mu[j])
                > np.sqrt(v[i - 1] * v[j - 1]) + tol):
            return False
    sum_sq = np.sum((0.5 * mu[1:]) ** 2) + np.sum(x[:3] ** 2) + 2.0 * np.sum(x[3:] ** 2)
    # packed-coordinate purity bound; off-diagonal coordinates appear once
    # in the packed vector but the report sums them once as well
    sum_sq = np.sum((0.5 * mu[1:]) ** 2) + np.sum(x * x)
    return sum_sq <= 3.0 / 8.0 + tol


def _min_eigenvalue(mu: np.ndarray, x: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(twobody_to_matrix(_assemble(mu, x)))))


def closure_numeric(first: np.ndarray, entropy_order: int | str = "exact",
                    tol: float = 1e-8, max_iter: int = 10_000) -> ClosureResult:
    """Numeric entropy maximization over the free two-body coordinates.

    ``entropy_order`` is a series order (int >= 1) or ``"exact"`` for the
    eigendecomposition entropy.  Ascent starts from the projected closed
    form and never accepts a decreasing step, so the result dominates the
    closed form whenever the latter is admissible.
    """
    mu = np.asarray(first, dtype=float)
    if abs(mu[0] - 0.5) > 1e-10:
        raise ValueError(f"not a unit-trace conditional state: mu0 = {mu[0]!r}")
    p = purity(mu)
    if p > 0.5 + 1e-10:
        raise ValueError(f"purity {p:.12f} exceeds the pure-state bound 1/2")
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if entropy_order != "exact" and int(entropy_order) < 1:
        raise ValueError(f"series order must be >= 1, got {entropy_order}")
    kind = "exact" if entropy_order == "exact" else int(entropy_order)
    label = "numeric(exact)" if kind == "exact" else f"numeric(order={kind})"

    if p >= 0.5 - 1e-12:
        # pure input: zero variance collapses the admissible set to the
        # tensor square of the state itself
        coords = np.zeros(10)
        coords[0] = 0.25
        coords[1:4] = 0.5 * mu[1:]
        for idx in _FREE:
            j, k = TWOBODY_PAIRS[idx]
            coords[idx] = mu[j] * mu[k]
        result = ClosureResult(second=coords, entropy_value=0.0, method=label,
                               report=check_constraints(mu, coords))
        result.messages.append("pure input: admissible set is a single point")
        return result

    x = _project_free(mu, closed_form_second_conditional(mu)[_FREE])
    multipliers = np.zeros(4)
    psd_weight = 100.0
    # the quadratic objective has curvature 16 on the paired coordinates,
    # so steps above 1/8 oscillate; stay below that
    alpha_max = 0.1
    alpha = 0.05
    value, grad, lam = _entropy_and_gradient(mu, x, kind, psd_weight, multipliers)
    converged = False
    iterations = 0
    stalled = 0
    messages = []
    for iterations in range(1, max_iter + 1):
        grad_t = grad.copy()
        grad_t[:3] -= grad_t[:3].mean()          # stay on the diagonal-sum plane
        gnorm = float(np.linalg.norm(grad_t))
        if gnorm < tol and _feasible(mu, x, 10.0 * tol):
            converged = True
            break
        step = alpha
        accepted = False
        while step > 1e-16:
            trial = _project_free(mu, x + step * grad_t)
            if not _feasible(mu, trial, 1e-7):
                step *= 0.5
                continue
            t_value, t_grad, t_lam = _entropy_and_gradient(
                mu, trial, kind, psd_weight, multipliers)
            if t_value < value - 1e-15:
                step *= 0.5
                continue
            stalled = stalled + 1 if t_value - value < 1e-14 else 0
            x, value, grad, lam = trial, t_value, t_grad, t_lam
            alpha = min(step * 1.3, alpha_max)
            accepted = True
            break
        if not accepted or stalled >= 30:
            # pinned by the active constraint set (or converged to roundoff)
            grad_t = grad.copy()
            grad_t[:3] -= grad_t[:3].mean()
            converged = (float(np.linalg.norm(grad_t)) < tol
                         and _feasible(mu, x, 10.0 * tol))
            if not converged:
                messages.append("progress stalled against the active "
                                "constraint set; best iterate returned")
            break
        if iterations % 200 == 0:
            multipliers += psd_weight * np.maximum(-lam, 0.0)

    coords = _assemble(mu, x)
    if kind == "exact":
        lam_final = np.clip(np.linalg.eigvalsh(twobody_to_matrix(coords)), 0.0, None)
        safe = np.where(lam_final > 0.0, lam_final, 1.0)
        entropy_value = float(-np.sum(lam_final * np.log(safe)))
    else:
        lam_final = np.clip(np.linalg.eigvalsh(twobody_to_matrix(coords)), 0.0, None)
        xs = 1.0 - lam_final
        entropy_value = float(sum(np.sum(lam_final * xs**k) / k
                                  for k in range(1, kind + 1)))
    result = ClosureResult(second=coords, entropy_value=entropy_value,
                           method=label, report=check_constraints(mu, coords),
                           converged=converged, iterations=iterations,
                           messages=messages)
    if not converged:
        result.messages.append(
            f"not converged after {iterations} iterations; best iterate returned")
    return result


# ---------------------------------------------------------------------------
# the closed effective equation


def effective_first_moment_rhs(first: MomentField, hamiltonian: OperatorField,
                               closure: str = "closed_form",
                               fd_order: int = 2, boundary: str = "clamp",
                               threshold: float = UNDEFINED_CONDITIONAL_THRESHOLD,
                               entropy_order: int | str = "exact",
                               tol: float = 1e-8):
    """Closed tangent of the first moment: closure supplies the second.

    At every node with a defined conditional the closure produces the
    conditional second moment, which is rescaled by the marginal and fed to
    the exact level-one equation.  Undefined nodes get zero tangent and are
    flagged; their second-moment coordinates extend continuously by zero.
    Returns ``(HierarchyRHS, defined_mask)``.
    """
    grid = first.grid
    f_c, cond, defined = factorize(first, threshold)
    if closure == "closed_form":
        cond2 = closed_form_second_conditional(cond)
    elif closure == "numeric":
        cond2 = np.zeros(cond.shape[:-1] + (10,))
        for idx in np.argwhere(defined):
            res = closure_numeric(cond[tuple(idx)], entropy_order=entropy_order,
                                  tol=tol)
            cond2[tuple(idx)] = res.second
    else:
        raise ValueError(f"unknown closure method {closure!r}")
    second = np.where(defined[..., None], f_c[..., None] * cond2, 0.0)

    R, P = grid.meshgrid()
    h = hamiltonian.value(R, P)
    dh_r = hamiltonian.d_r(R, P)
    dh_p = hamiltonian.d_p(R, P)
    b = unpack_twobody(second)
    db_r = partial_deriv(b, grid.dr, axis=0, order=fd_order, boundary=boundary)
    db_p = partial_deriv(b, grid.dp, axis=1, order=fd_order, boundary=boundary)
    d_first = commutator_coords(h, first.first)
    d_first += 2.0 * (np.einsum("rpj,rpjk->rpk", dh_r, db_p)
                      - np.einsum("rpj,rpjk->rpk", dh_p, db_r))
    d_first = np.where(defined[..., None], d_first, 0.0)
    rhs = HierarchyRHS(grid=grid, d_f_c=2.0 * d_first[..., 0], d_first=d_first)
    return rhs, defined


def closure_second_field(first: MomentField,
                         threshold: float = UNDEFINED_CONDITIONAL_THRESHOLD) -> MomentField:
    """Closed-form second-moment field paired with a first-moment field."""
    f_c, cond, defined = factorize(first, threshold)
    cond2 = closed_form_second_conditional(cond)
    second = np.where(defined[..., None], f_c[..., None] * cond2, 0.0)
    return MomentField(grid=first.grid, order=2, f_c=first.f_c,
                       first=first.first, second=second)
