"""Time integration of the closed effective equation on a phase-space grid,
and the harness comparing it against the trajectory-ensemble oracle.

The grid state is the first-moment coordinate field; each RK4 stage applies
the closure and evaluates the level-one tangent with clamped (compact
support) finite differences.  Probability and the conditional-purity
diagnostic are monitored rather than enforced: whether the closed dynamics
stays inside the physical region is an observation, not an assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import PhaseGrid
from .scenario import ConditionalMixtureField, OperatorField
from .ensemble import (Ensemble, MomentField, UNDEFINED_CONDITIONAL_THRESHOLD,
                       average_observable, estimate_moment_field,
                       exact_moment_field, propagate, sample_initial,
                       silverman_bandwidth)
from .hierarchy import first_moment_rhs
from .maxent import effective_first_moment_rhs

__all__ = ["EvolutionResult", "evolve_effective", "ComparisonReport",
           "compare_to_ensemble", "OBSERVABLES", "observable_field"]


def observable_field(name: str) -> OperatorField:
    """Simple named observables: sigma1..sigma3, R, P, identity."""

    def const_quantum(idx):
        def value(R, P):
            R = np.asarray(R, dtype=float)
            P = np.asarray(P, dtype=float)
            out = np.zeros(np.broadcast(R, P).shape + (4,))
            out[..., idx] = 1.0
            return out
        return value

    def classical(which):
        def value(R, P):
            R = np.asarray(R, dtype=float)
            P = np.asarray(P, dtype=float)
            out = np.zeros(np.broadcast(R, P).shape + (4,))
            out[..., 0] = R if which == "R" else P
            return out
        return value

    def zero(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        return np.zeros(np.broadcast(R, P).shape + (4,))

    def d_unit(which):
        def deriv(R, P):
            R = np.asarray(R, dtype=float)
            P = np.asarray(P, dtype=float)
            out = np.zeros(np.broadcast(R, P).shape + (4,))
            out[..., 0] = 1.0
            return out
        return deriv

    if name in ("sigma1", "sigma2", "sigma3"):
        idx = int(name[-1])
        return OperatorField(value=const_quantum(idx), d_r=zero, d_p=zero)
    if name == "identity":
        return OperatorField(value=const_quantum(0), d_r=zero, d_p=zero)
    if name == "R":
        return OperatorField(value=classical("R"), d_r=d_unit("R"), d_p=zero)
    if name == "P":
        return OperatorField(value=classical("P"), d_r=zero, d_p=d_unit("P"))
    raise KeyError(f"unknown observable {name!r}")


OBSERVABLES = ("sigma1", "sigma3", "R", "P")


@dataclass
class EvolutionResult:
    """Sampled moment fields plus conservation and positivity diagnostics."""

    grid: PhaseGrid
    times: list[float]
    fields: list[MomentField]
    probability: list[float]
    purity_violations: list[float]   # node fraction with purity > 1/2 + 1e-8
    aborted: bool = False
    warnings: list = field(default_factory=list)


def _purity_violation_fraction(field_: MomentField) -> float:
    f_c = field_.f_c
    defined = f_c > UNDEFINED_CONDITIONAL_THRESHOLD
    if not np.any(defined):
        return 0.0
    denom = np.where(defined, f_c, 1.0)
    cond = field_.first / denom[..., None]
    pur = np.sum(cond * cond, axis=-1)
    bad = defined & (pur > 0.5 + 1e-8)
    return float(np.count_nonzero(bad) / np.count_nonzero(defined))


def _max_speed(hamiltonian: OperatorField, grid: PhaseGrid) -> float:
    _, dh_r, dh_p = hamiltonian.on_grid(grid)
    # worst-case characteristic speed over Bloch directions
    v_r = np.abs(dh_p[..., 0]) + np.linalg.norm(dh_p[..., 1:], axis=-1)
    v_p = np.abs(dh_r[..., 0]) + np.linalg.norm(dh_r[..., 1:], axis=-1)
    return float(max(np.max(v_r), np.max(v_p)))


def evolve_effective(initial: MomentField, hamiltonian: OperatorField,
                     t_end: float, dt: float, closure: str = "closed_form",
                     sample_times: list[float] | None = None,
                     fd_order: int = 2) -> EvolutionResult:
    """RK4 integration of the closed first-moment equation.

    Boundary values are clamped to zero (compact support).  Samples are
    taken at the requested times rounded to whole steps; by default a
    geometric schedule of fractions of ``t_end``.  Integration aborts on a
    non-finite field, returning the last good state; a probability drift
    beyond 1e-3 only raises a warning flag.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"final time must be nonnegative, got {t_end}")
    grid = initial.grid
    speed = _max_speed(hamiltonian, grid)
    warnings = []
    if speed > 0 and dt > min(grid.dr, grid.dp) / (4.0 * speed):
        warnings.append(
            f"dt = {dt:g} exceeds the advection bound "
            f"{min(grid.dr, grid.dp) / (4.0 * speed):.3e}; expect instability")

    if sample_times is None:
        sample_times = [f * t_end for f in (0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0)]
    n_steps = int(round(t_end / dt))
    sample_steps = sorted({min(n_steps, max(0, int(round(s / dt))))
                           for s in sample_times})

    def rhs(a_field: np.ndarray) -> np.ndarray:
        f = MomentField(grid=grid, order=1, f_c=2.0 * a_field[..., 0],
                        first=a_field)
        out, _ = effective_first_moment_rhs(f, hamiltonian, closure=closure,
                                            fd_order=fd_order, boundary="clamp")
        return out.d_first

    a = initial.first.copy()
    result = EvolutionResult(grid=grid, times=[], fields=[], probability=[],
                             purity_violations=[], warnings=warnings)

    def record(step):
        f = MomentField(grid=grid, order=1, f_c=2.0 * a[..., 0], first=a.copy())
        result.times.append(step * dt)
        result.fields.append(f)
        result.probability.append(float(grid.integrate(f.f_c)))
        result.purity_violations.append(_purity_violation_fraction(f))

    if 0 in sample_steps:
        record(0)
    for step in range(1, n_steps + 1):
        k1 = rhs(a)
        k2 = rhs(a + 0.5 * dt * k1)
        k3 = rhs(a + 0.5 * dt * k2)
        k4 = rhs(a + dt * k3)
        a_new = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(a_new)):
            result.aborted = True
            result.warnings.append(
                f"non-finite field at step {step}; returning last good state")
            record(step - 1)
            break
        a = a_new
        if step in sample_steps:
            record(step)
    if not result.aborted and result.probability:
        drift = max(abs(p - result.probability[0]) for p in result.probability)
        if drift > 1e-3:
            result.warnings.append(f"probability drift {drift:.3e} exceeds 1e-3")
    return result


# ---------------------------------------------------------------------------
# ensemble-vs-effective comparison


@dataclass
class ComparisonReport:
    """Field and observable discrepancies between the two solution paths."""

    times: list[float]
    field_l2: list[dict[str, float]]
    field_linf: list[dict[str, float]]
    observables: list[dict[str, dict[str, float]]]
    closure_control: list[float]      # L2 of (exact RHS - closed RHS) on MC moments
    mc_size: int
    bandwidth: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "field_l2": self.field_l2,
            "field_linf": self.field_linf,
            "observables": self.observables,
            "closure_control": self.closure_control,
            "mc_size": self.mc_size,
            "bandwidth": self.bandwidth,
            "seed": self.seed,
        }


def _field_errors(grid: PhaseGrid, mc: MomentField, eff: MomentField):
    l2, linf = {}, {}
    area = grid.cell_area

    def put(name, diff):
        l2[name] = float(np.sqrt(np.sum(diff**2) * area))
        linf[name] = float(np.max(np.abs(diff)))

    put("f_c", mc.f_c - eff.f_c)
    for j in range(1, 4):
        put(f"mu{j}", mc.first[..., j] - eff.first[..., j])
    return l2, linf


def compare_to_ensemble(hamiltonian: OperatorField,
                        density: ConditionalMixtureField,
                        grid: PhaseGrid, n_samples: int, t_end: float,
                        dt: float, seed: int,
                        sample_times: list[float] | None = None,
                        bandwidth: float | None = None,
                        closure: str = "closed_form",
                        observables=OBSERVABLES) -> ComparisonReport:
    """Run both solution paths from the same initial data and report errors.

    The trajectory ensemble is the oracle; its moment fields are kernel
    estimates, so reported field errors mix closure error, grid error and
    Monte Carlo noise.  The closure-control column isolates closure error:
    it feeds the MC-estimated second moment and the closure into the same
    level-one tangent and reports the L2 difference.
    """
    if sample_times is None:
        sample_times = [f * t_end for f in (0.0, 0.1, 0.5, 1.0)]
    sample_times = sorted(set(sample_times))

    ens = sample_initial(density, n_samples, seed)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(ens)

    initial = exact_moment_field(density, grid, k=1)
    evo = evolve_effective(initial, hamiltonian, t_end=t_end, dt=dt,
                           closure=closure, sample_times=sample_times)
    eff_by_time = dict(zip(evo.times, evo.fields))

    obs_fields = {name: observable_field(name) for name in observables}

    times, l2s, linfs, obs_rows, controls = [], [], [], [], []
    current_t = 0.0
    for target in sample_times:
        if target > current_t:
            ens = propagate(ens, hamiltonian, target - current_t, dt)
            current_t = target
        mc2 = estimate_moment_field(ens, grid, k=2, bandwidth=bandwidth)
        mc1 = MomentField(grid=grid, order=1, f_c=mc2.f_c, first=mc2.first)
        # closest sampled effective field
        eff_t = min(eff_by_time, key=lambda s: abs(s - target))
        eff = eff_by_time[eff_t]

        l2, linf = _field_errors(grid, mc1, eff)
        obs = {}
        for name, obs_f in obs_fields.items():
            per_member = 2.0 * np.einsum(
                "mj,mj->m", ens.member_mu(), obs_f.value(ens.r, ens.p))
            mean = float(np.sum(ens.weights * per_member))
            se = float(np.sqrt(max(np.sum(ens.weights * per_member**2)
                                   - mean**2, 0.0) / ens.size))
            obs[name] = {
                "mc": mean,
                "mc_se": se,
                "effective": average_observable(obs_f, eff),
            }
        exact_rhs = first_moment_rhs(mc1, mc2, hamiltonian)
        closed_rhs, _ = effective_first_moment_rhs(mc1, hamiltonian,
                                                   closure=closure,
                                                   fd_order=4,
                                                   boundary="one_sided")
        control = float(np.sqrt(np.sum((exact_rhs.d_first
                                        - closed_rhs.d_first)**2)
                                * grid.cell_area))
        times.append(target)
        l2s.append(l2)
        linfs.append(linf)
        obs_rows.append(obs)
        controls.append(control)

    return ComparisonReport(times=times, field_l2=l2s, field_linf=linfs,
                            observables=obs_rows, closure_control=controls,
                            mc_size=n_samples, bandwidth=float(bandwidth),
                            seed=seed)
