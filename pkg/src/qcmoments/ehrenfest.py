"""Microstate dynamics on the product of phase space and the Bloch sphere.

A microstate is a classical point (R, P) plus a pure two-level state given
by its Bloch vector n.  The generator is the scalar function
``f_H = Tr(rho_psi H(xi)) = H_0 + h . n`` (identity coordinate included), so

* ``dR/dt = dP f_H``, ``dP/dt = -dR f_H``  (canonical pair),
* ``dn/dt = 2 h x n``                      (precession about the local gap),

with hbar = 1.  Integration is classic fixed-step RK4; the Bloch norm is
renormalized after every step and the pre-renormalization drift recorded,
since the exact flow preserves purity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import OperatorField

__all__ = ["Microstate", "microstate_rhs", "hybrid_energy",
           "integrate_trajectory", "integrate_states", "BatchTrajectory"]


@dataclass(frozen=True)
class Microstate:
    """Classical point plus pure Bloch state at a given time."""

    r: float
    p: float
    n: np.ndarray  # Bloch vector, shape (3,)
    t: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        object.__setattr__(self, "n", n)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError(f"Bloch vector must be unit length, |n| = "
                             f"{np.linalg.norm(n):.12f}")


def hybrid_energy(r, p, n, hamiltonian: OperatorField) -> np.ndarray | float:
    """``f_H = H_0 + h . n`` evaluated at (possibly batched) microstates."""
    h = hamiltonian.value(r, p)
    return h[..., 0] + np.einsum("...k,...k->...", h[..., 1:], np.asarray(n, float))


def microstate_rhs(r, p, n, hamiltonian: OperatorField):
    """Time derivatives (dR, dP, dn) of a batch of microstates."""
    n = np.asarray(n, dtype=float)
    h = hamiltonian.value(r, p)
    dh_r = hamiltonian.d_r(r, p)
    dh_p = hamiltonian.d_p(r, p)
    dr = dh_p[..., 0] + np.einsum("...k,...k->...", dh_p[..., 1:], n)
    dp = -(dh_r[..., 0] + np.einsum("...k,...k->...", dh_r[..., 1:], n))
    dn = 2.0 * np.cross(h[..., 1:], n)
    return dr, dp, dn


def _rk4_step(r, p, n, hamiltonian, dt):
    k1 = microstate_rhs(r, p, n, hamiltonian)
    k2 = microstate_rhs(r + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1],
                        n + 0.5 * dt * k1[2], hamiltonian)
    k3 = microstate_rhs(r + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1],
                        n + 0.5 * dt * k2[2], hamiltonian)
    k4 = microstate_rhs(r + dt * k3[0], p + dt * k3[1],
                        n + dt * k3[2], hamiltonian)
    r_new = r + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    p_new = p + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    n_new = n + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return r_new, p_new, n_new


def integrate_states(r, p, n, hamiltonian: OperatorField, t_end: float,
                     dt: float):
    """Advance a batch of microstates to ``t_end`` with step ``dt``.

    Negative ``t_end`` integrates backwards.  Returns the final
    ``(r, p, n)``, the largest pre-renormalization Bloch-norm deviation per
    step, and an ``aborted`` flag; when a non-finite state appears the last
    good state is returned.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    r = np.array(r, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    n = np.array(n, dtype=float, copy=True)
    n_steps = int(round(abs(t_end) / dt))
    step = dt if t_end >= 0 else -dt
    max_drift = 0.0
    for _ in range(n_steps):
        r_new, p_new, n_new = _rk4_step(r, p, n, hamiltonian, step)
        if not (np.all(np.isfinite(r_new)) and np.all(np.isfinite(p_new))
                and np.all(np.isfinite(n_new))):
            return r, p, n, max_drift, True
        norm = np.linalg.norm(n_new, axis=-1)
        max_drift = max(max_drift, float(np.max(np.abs(norm - 1.0))))
        n_new /= norm[..., None]
        r, p, n = r_new, p_new, n_new
    return r, p, n, max_drift, False


@dataclass
class BatchTrajectory:
    """Sampled trajectory data for a batch of microstates."""

    t: np.ndarray            # (n_samples,)
    r: np.ndarray            # (n_samples, n_states)
    p: np.ndarray            # (n_samples, n_states)
    n: np.ndarray            # (n_samples, n_states, 3)
    energy: np.ndarray       # (n_samples, n_states)
    norm_drift: np.ndarray   # (n_samples,) max per-step drift seen so far
    aborted: bool = False
    warnings: list = field(default_factory=list)


def integrate_trajectory(state: Microstate | tuple, hamiltonian: OperatorField,
                         t_end: float, dt: float, stride: int = 1) -> BatchTrajectory:
    """Integrate microstates, recording every ``stride``-th step.

    ``state`` is a single :class:`Microstate` or a tuple of batched
    ``(r, p, n)`` arrays.  The hybrid energy is recorded with each sample;
    it is an exact invariant of the flow, so its drift measures integrator
    error.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"final time must be nonnegative, got {t_end}")
    if isinstance(state, Microstate):
        r = np.atleast_1d(np.asarray(state.r, dtype=float))
        p = np.atleast_1d(np.asarray(state.p, dtype=float))
        n = np.atleast_2d(np.asarray(state.n, dtype=float))
    else:
        r, p, n = (np.array(x, dtype=float, copy=True) for x in state)

    n_steps = int(round(t_end / dt))
    times, rs, ps, ns, energies, drifts = [], [], [], [], [], []
    max_drift = 0.0

    def record(k):
        times.append(k * dt)
        rs.append(r.copy())
        ps.append(p.copy())
        ns.append(n.copy())
        energies.append(np.asarray(hybrid_energy(r, p, n, hamiltonian)))
        drifts.append(max_drift)

    record(0)
    aborted = False
    for k in range(1, n_steps + 1):
        r_new, p_new, n_new = _rk4_step(r, p, n, hamiltonian, dt)
        if not (np.all(np.isfinite(r_new)) and np.all(np.isfinite(p_new))
                and np.all(np.isfinite(n_new))):
            aborted = True
            break
        norm = np.linalg.norm(n_new, axis=-1)
        max_drift = max(max_drift, float(np.max(np.abs(norm - 1.0))))
        n_new /= norm[..., None]
        r, p, n = r_new, p_new, n_new
        if k % stride == 0 or k == n_steps:
            record(k)

    traj = BatchTrajectory(t=np.array(times), r=np.stack(rs), p=np.stack(ps),
                           n=np.stack(ns), energy=np.stack(energies),
                           norm_drift=np.array(drifts), aborted=aborted)
    if aborted:
        traj.warnings.append("non-finite state encountered; trajectory truncated "
                             "at the last good state")
    return traj
