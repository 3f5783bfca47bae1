"""Classically parametrized Hamiltonians and initial hybrid densities.

An :class:`OperatorField` bundles a Hermitian operator ``H(R, P)`` in Pauli
coordinates (the identity coordinate carries the classical energy) together
with its classical partial derivatives.  A :class:`ConditionalMixtureField`
describes a hybrid density whose quantum conditional at every classical
point is a discrete mixture of pure projectors, which covers every initial
state used here and keeps all of its moments available in closed form.

The built-in ``atan_twolevel`` scenario couples a planar oscillator to a
two-level system whose energy gap and level directions depend on position;
``uncoupled_harmonic`` and ``pure_transport`` are its exactly solvable
limits used by the verification harness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import PhaseGrid
from .pauli import tensor_square
from .exprs import compile_expression

__all__ = [
    "OperatorField",
    "ConditionalMixtureField",
    "finite_difference_partials",
    "atan_twolevel_hamiltonian",
    "atan_twolevel_density",
    "uncoupled_hamiltonian",
    "pure_transport_hamiltonian",
    "hamiltonian_from_expressions",
    "load_scenario",
    "SCENARIO_NAMES",
]

DEFAULT_FD_STEP = 1e-4


@dataclass(frozen=True)
class OperatorField:
    """Operator-valued field ``H(R, P)`` with classical partial derivatives.

    ``value``, ``d_r`` and ``d_p`` map broadcastable (R, P) arrays to Pauli
    coordinate arrays of shape ``broadcast(R, P).shape + (4,)``.  ``partials``
    records whether the derivatives are analytic or centered differences.
    """

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d_r: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d_p: Callable[[np.ndarray, np.ndarray], np.ndarray]
    partials: str = "analytic"

    def on_grid(self, grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate arrays (value, dR, dP) sampled at the grid nodes."""
        R, P = grid.meshgrid()
        return self.value(R, P), self.d_r(R, P), self.d_p(R, P)


def _stack4(shape, h0, h1, h2, h3) -> np.ndarray:
    out = np.zeros(shape + (4,))
    for idx, comp in enumerate((h0, h1, h2, h3)):
        out[..., idx] = comp
    return out


def finite_difference_partials(value: Callable, h: float = DEFAULT_FD_STEP) -> OperatorField:
    """Wrap an evaluation-only field with centered-difference partials.

    The step must be positive; errors are O(h^2), exact through quadratics.
    """
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")

    def d_r(R, P):
        R = np.asarray(R, dtype=float)
        return (value(R + h, P) - value(R - h, P)) / (2.0 * h)

    def d_p(R, P):
        P = np.asarray(P, dtype=float)
        return (value(R, P + h) - value(R, P - h)) / (2.0 * h)

    return OperatorField(value=value, d_r=d_r, d_p=d_p,
                         partials=f"finite-difference(h={h:g})")


# ---------------------------------------------------------------------------
# built-in Hamiltonians


def atan_twolevel_hamiltonian() -> OperatorField:
    """Planar oscillator coupled to a position-dependent two-level system.

    The quantum part has levels ``E1 = 1/(1+R^2)`` and
    ``E2 = E1 + 1 + 0.1 R^2`` on projectors with Bloch directions
    ``+-(sin R, 0, cos R)``; the classical part is ``(R^2 + P^2)/2``.
    """

    def value(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        half_gap = 0.5 * (1.0 + 0.1 * R * R)  # (E2 - E1) / 2
        e1 = 1.0 / (1.0 + R * R)
        h0 = 0.5 * (R * R + P * P) + e1 + half_gap
        return _stack4(shape, h0, -half_gap * np.sin(R),
                       np.zeros_like(half_gap), -half_gap * np.cos(R))

    def d_r(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        half_gap = 0.5 * (1.0 + 0.1 * R * R)
        d_half_gap = 0.1 * R
        d_e1 = -2.0 * R / (1.0 + R * R) ** 2
        d_h0 = R + d_e1 + d_half_gap
        d_h1 = -(d_half_gap * np.sin(R) + half_gap * np.cos(R))
        d_h3 = -(d_half_gap * np.cos(R) - half_gap * np.sin(R))
        return _stack4(shape, d_h0, d_h1, np.zeros_like(d_h0), d_h3)

    def d_p(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        z = np.zeros(shape)
        return _stack4(shape, np.broadcast_to(P, shape).astype(float), z, z, z)

    return OperatorField(value=value, d_r=d_r, d_p=d_p)


def uncoupled_hamiltonian(gap: float = 1.0) -> OperatorField:
    """Harmonic classical part plus a position-independent quantum gap."""

    def value(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        z = np.zeros(shape)
        return _stack4(shape, 0.5 * (R * R + P * P) + z, z, z,
                       np.full(shape, 0.5 * gap))

    def d_r(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        z = np.zeros(shape)
        return _stack4(shape, np.broadcast_to(R, shape).astype(float), z, z, z)

    def d_p(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        z = np.zeros(shape)
        return _stack4(shape, np.broadcast_to(P, shape).astype(float), z, z, z)

    return OperatorField(value=value, d_r=d_r, d_p=d_p)


def pure_transport_hamiltonian() -> OperatorField:
    """Harmonic classical part with no quantum part at all."""
    base = uncoupled_hamiltonian(gap=0.0)
    return OperatorField(value=base.value, d_r=base.d_r, d_p=base.d_p)


def hamiltonian_from_expressions(coords: dict[str, str],
                                 fd_step: float = DEFAULT_FD_STEP) -> OperatorField:
    """Build an operator field from expressions for H0..H3 in R and P.

    Missing coordinates default to zero.  Partials are centered differences
    with the given step.
    """
    fns = {}
    for key in ("h0", "h1", "h2", "h3"):
        if key in coords and coords[key] is not None:
            fns[key] = compile_expression(str(coords[key]))

    def value(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        shape = np.broadcast(R, P).shape
        out = np.zeros(shape + (4,))
        for idx, key in enumerate(("h0", "h1", "h2", "h3")):
            if key in fns:
                out[..., idx] = fns[key](R, P)
        return out

    return finite_difference_partials(value, h=fd_step)


# ---------------------------------------------------------------------------
# initial hybrid densities


@dataclass(frozen=True)
class ConditionalMixtureField:
    """Hybrid density with a discrete projector mixture at every point.

    ``classical_density`` maps (R, P) to the marginal F_C; ``mixture`` maps
    (R, P) to ``(weights, bloch)`` with shapes ``(..., m)`` and
    ``(..., m, 3)``, the weights summing to one pointwise;
    ``sample_classical`` draws classical points from F_C.
    """

    classical_density: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mixture: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    sample_classical: Callable[[np.random.Generator, int],
                               tuple[np.ndarray, np.ndarray]]
    name: str = "custom"

    def component_coords(self, R, P) -> tuple[np.ndarray, np.ndarray]:
        """Weights (..., m) and projector Pauli coordinates (..., m, 4)."""
        weights, bloch = self.mixture(R, P)
        mu = np.empty(bloch.shape[:-1] + (4,))
        mu[..., 0] = 0.5
        mu[..., 1:] = 0.5 * bloch
        return weights, mu

    def first_moment_coords(self, R, P) -> np.ndarray:
        """Pauli coordinates of the unnormalized first moment F_C * rho_xi."""
        f_c = self.classical_density(R, P)
        weights, mu = self.component_coords(R, P)
        return f_c[..., None] * np.einsum("...m,...mj->...j", weights, mu)

    def second_moment_coords(self, R, P) -> np.ndarray:
        """Packed coordinates of the unnormalized second moment."""
        f_c = self.classical_density(R, P)
        weights, mu = self.component_coords(R, P)
        sq = tensor_square(mu)  # (..., m, 10)
        return f_c[..., None] * np.einsum("...m,...mj->...j", weights, sq)

    def third_moment_coords(self, R, P) -> np.ndarray:
        """Full symmetric (..., 4, 4, 4) array of the unnormalized third moment."""
        f_c = self.classical_density(R, P)
        weights, mu = self.component_coords(R, P)
        cube = np.einsum("...mj,...mk,...ml->...mjkl", mu, mu, mu)
        return f_c[..., None, None, None] * np.einsum("...m,...mjkl->...jkl",
                                                      weights, cube)


def atan_twolevel_density() -> ConditionalMixtureField:
    """Gaussian classical marginal with an arctan-weighted projector pair.

    ``F_C = exp(-(R^2+P^2)/2) / (2 pi)``; at each point the quantum state is
    the mixture ``lam * pi(+n) + (1 - lam) * pi(-n)`` with
    ``lam = (2/pi) atan(R^2 + P^2)`` and ``n = (sin a, 0, cos a)`` for
    ``a = atan(R^2 + P^2)``.
    """

    def classical_density(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        return np.exp(-0.5 * (R * R + P * P)) / (2.0 * np.pi)

    def mixture(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        u = R * R + P * P
        a = np.arctan(u)
        lam = (2.0 / np.pi) * a
        shape = np.broadcast(R, P).shape
        weights = np.empty(shape + (2,))
        weights[..., 0] = lam
        weights[..., 1] = 1.0 - lam
        n = np.zeros(shape + (2, 3))
        n[..., 0, 0] = np.sin(a)
        n[..., 0, 2] = np.cos(a)
        n[..., 1, :] = -n[..., 0, :]
        return weights, n

    def sample_classical(rng: np.random.Generator, n: int):
        pts = rng.standard_normal((n, 2))
        return pts[:, 0], pts[:, 1]

    return ConditionalMixtureField(classical_density=classical_density,
                                   mixture=mixture,
                                   sample_classical=sample_classical,
                                   name="atan_twolevel")


SCENARIO_NAMES = ("atan_twolevel", "uncoupled_harmonic", "pure_transport")


def load_scenario(name: str) -> tuple[OperatorField, ConditionalMixtureField]:
    """Built-in (Hamiltonian, initial density) pair by name.

    The solvable scenarios reuse the arctan initial density so every moment
    channel stays nontrivial.
    """
    if name == "atan_twolevel":
        return atan_twolevel_hamiltonian(), atan_twolevel_density()
    if name == "uncoupled_harmonic":
        return uncoupled_hamiltonian(), atan_twolevel_density()
    if name == "pure_transport":
        return pure_transport_hamiltonian(), atan_twolevel_density()
    raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIO_NAMES)}")
