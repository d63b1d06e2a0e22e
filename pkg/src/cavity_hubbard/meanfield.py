"""Self-consistent coherent-cavity mean field at U_s = 0.

With the cavity replaced by its amplitude ``alpha`` and the local gauge
``c_{j up} -> (-1)^(j+1) c_{j up}`` applied, the fermions see a quadratic
Hamiltonian on 2L modes (site-major, up before down)::

    h_sp = hopping + h * sum_j (c^dag_{j up} c_{j dn} + h.c.),   h = 2 G Re(alpha)

The gauge flips the sign of the up-spin hopping (``+t`` for up, ``-t`` for
down); ``variant="literal"`` keeps ``-t`` for both spins instead.  The
cavity is updated from ``Theta = sum_j <c^dag_{j up} c_{j dn} + h.c.>`` via
``alpha = G / (i kappa + delta) * Theta`` with damping, halved whenever
the update reverses direction.

Mean-field energy of a fixed point (used to rank coexisting fixed points)::

    E = <hopping> + (U_l / L) Theta^2 = sum_filled eps - h Theta + (U_l / L) Theta^2
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .model import CavityParams

VARIANTS = ("gauge", "literal")
FIXED_POINT_TOL = 1e-10
MAX_STEPS = 10_000
DEFAULT_DAMPING = 0.5
MIN_DAMPING = 1e-2
FERMI_DEGENERACY_TOL = 1e-12


class FermiLevelDegeneracy(ValueError):
    """Lowest-N filling is ambiguous: degenerate levels at the Fermi energy carry different Theta."""


class MeanFieldConvergenceError(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class MeanFieldProblem:
    L: int
    N: int
    t: float
    cavity: CavityParams
    damping: float = DEFAULT_DAMPING
    variant: str = "gauge"

    def __post_init__(self):
        if not 0 <= self.N <= 2 * self.L:
            raise ValueError("N must lie in [0, 2L]")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def U_l(self) -> float:
        return self.cavity.implied_U_l(self.L)

    def field(self, alpha: complex) -> float:
        return 2.0 * self.cavity.G * alpha.real


@dataclass
class MeanFieldState:
    alpha: complex
    single_particle_energies: np.ndarray = field(repr=False)
    occupation: int
    order_parameter: float
    iterations: int = 0
    converged: bool = False
    residual: float = math.inf
    energy: float = math.nan
    residual_history: list = field(default_factory=list, repr=False)

    @property
    def photon_number(self) -> float:
        return abs(self.alpha) ** 2


def single_particle_matrix(L: int, t: float, h: float, variant: str = "gauge") -> np.ndarray:
    mat = np.zeros((2 * L, 2 * L))
    t_up = t if variant == "gauge" else -t
    for j in range(L - 1):
        for s, hop in ((0, t_up), (1, -t)):
            a, b = 2 * j + s, 2 * (j + 1) + s
            mat[a, b] = mat[b, a] = hop
    for j in range(L):
        mat[2 * j, 2 * j + 1] = mat[2 * j + 1, 2 * j] = h
    return mat


def open_chain_levels(L: int, t: float) -> np.ndarray:
    """``-2t cos(pi m / (L+1))``, m = 1..L, ascending for t > 0."""
    return np.sort(-2.0 * t * np.cos(np.pi * np.arange(1, L + 1) / (L + 1)))


def decoupled_spectrum(L: int, t: float, h: float, variant: str = "gauge") -> np.ndarray:
    """Spectrum from the two decoupled spin-x chains (tridiagonal solves)."""
    off = np.full(L - 1, -t)
    if variant == "gauge":
        stagger = h * (-1.0) ** np.arange(L)
        chains = [eigvalsh_tridiagonal(s * stagger, off) for s in (1.0, -1.0)]
    else:
        chains = [eigvalsh_tridiagonal(np.full(L, s * h), off) for s in (1.0, -1.0)]
    return np.sort(np.concatenate(chains))


def single_particle_spectrum(L: int, t: float, G: float, alpha: complex, variant: str = "gauge"):
    """Eigenvalues (ascending) and eigenvectors of the 2L x 2L problem at cavity amplitude ``alpha``."""
    h = 2.0 * G * complex(alpha).real
    energies, vectors = np.linalg.eigh(single_particle_matrix(L, t, h, variant))
    reference = decoupled_spectrum(L, t, h, variant)
    scale = max(1.0, abs(t), abs(h))
    if not np.allclose(energies, reference, rtol=0, atol=1e-10 * scale):
        raise AssertionError("full and decoupled single-particle spectra disagree")
    return energies, vectors


def _theta_operator(L: int) -> np.ndarray:
    return single_particle_matrix(L, 0.0, 1.0)


def fill_and_measure(energies, vectors, N: int, L: int) -> float:
    """Theta of the Slater determinant filling the N lowest orbitals."""
    if N == 0:
        return 0.0
    if N < 2 * L and energies[N] - energies[N - 1] < FERMI_DEGENERACY_TOL * max(1.0, abs(energies[N])):
        # the partially filled shell must be Theta-neutral for the filling to be unambiguous
        eF = energies[N - 1]
        shell = np.flatnonzero(np.abs(energies - eF) < FERMI_DEGENERACY_TOL * max(1.0, abs(eF)))
        sub = vectors[:, shell].T @ _theta_operator(L) @ vectors[:, shell]
        w = np.linalg.eigvalsh(sub)
        if w[-1] - w[0] > 1e-10:
            raise FermiLevelDegeneracy(
                f"levels {N - 1} and {N} coincide at {eF:.6g} with differing Theta contributions"
            )
    occ = vectors[:, :N]
    up, dn = occ[0::2], occ[1::2]
    return float(2.0 * np.sum(up * dn))


def _evaluate(problem: MeanFieldProblem, alpha: complex):
    """Spectrum, Theta, undamped update and energy at a given amplitude."""
    h = problem.field(alpha)
    energies, vectors = single_particle_spectrum(problem.L, problem.t, problem.cavity.G, alpha, problem.variant)
    if h == 0.0:
        # filled shells come in spin-x pairs, Theta cancels exactly
        theta = 0.0
    else:
        theta = fill_and_measure(energies, vectors, problem.N, problem.L)
    update = problem.cavity.amplitude_factor * theta
    coeff = problem.U_l / problem.L
    energy = float(np.sum(energies[: problem.N]) - h * theta + coeff * theta**2)
    return energies, theta, update, energy


def mf_step(state: MeanFieldState, problem: MeanFieldProblem, gamma: float | None = None) -> MeanFieldState:
    """One diagonalize / fill / update cycle with damping ``gamma`` (default: the problem's).

    The returned state carries the damped amplitude; ``order_parameter`` and
    ``residual`` refer to the input amplitude.
    """
    alpha = complex(state.alpha)
    energies, theta, update, energy = _evaluate(problem, alpha)
    gamma = problem.damping if gamma is None else gamma
    residual = abs(update - alpha)
    return MeanFieldState(
        alpha=(1.0 - gamma) * alpha + gamma * update,
        single_particle_energies=energies,
        occupation=problem.N,
        order_parameter=theta,
        iterations=state.iterations + 1,
        converged=False,
        residual=residual,
        energy=energy,
        residual_history=state.residual_history + [residual],
    )


def evaluate_state(problem: MeanFieldProblem, alpha: complex, **extra) -> MeanFieldState:
    energies, theta, update, energy = _evaluate(problem, complex(alpha))
    return MeanFieldState(
        alpha=complex(alpha),
        single_particle_energies=energies,
        occupation=problem.N,
        order_parameter=theta,
        residual=abs(update - alpha),
        energy=energy,
        **extra,
    )


def phase_locked_direction(cavity: CavityParams) -> complex:
    """Unit phasor along ``1 / (i kappa + delta)``."""
    return cmath.exp(1j * cmath.phase(1.0 / complex(cavity.delta_tilde, cavity.kappa)))


def default_seeds(L: int, cavity: CavityParams) -> list[complex]:
    u = phase_locked_direction(cavity)
    r = 0.1 * math.sqrt(L)
    return [0j, r * u, -r * u]


def iterate(problem: MeanFieldProblem, seed: complex, tol=FIXED_POINT_TOL, max_steps=MAX_STEPS) -> MeanFieldState:
    state = MeanFieldState(
        alpha=complex(seed), single_particle_energies=np.zeros(0), occupation=problem.N, order_parameter=0.0
    )
    history = []
    gamma, last_step = problem.damping, 0j
    for _ in range(max_steps):
        alpha = state.alpha
        state = mf_step(state, problem, gamma)
        history.append(state.residual)
        step = state.alpha - alpha
        if (step * last_step.conjugate()).real < 0:
            # overshoot: the update reversed direction, so soften the damping
            gamma = max(MIN_DAMPING, 0.5 * gamma)
        last_step = step
        if state.residual <= tol * max(1.0, abs(alpha)):
            return evaluate_state(
                problem, alpha, iterations=state.iterations, converged=True, residual_history=history
            )
    final = evaluate_state(problem, state.alpha, iterations=state.iterations, residual_history=history)
    final.converged = final.residual <= tol * max(1.0, abs(final.alpha))
    return final


@dataclass
class MeanFieldSolution:
    best: MeanFieldState
    fixed_points: list[MeanFieldState]
    runs: list[MeanFieldState]


def mf_solve(
    L: int,
    N: int,
    t: float,
    cavity: CavityParams,
    seeds=None,
    *,
    damping: float = DEFAULT_DAMPING,
    variant: str = "gauge",
    tol: float = FIXED_POINT_TOL,
    max_steps: int = MAX_STEPS,
) -> MeanFieldSolution:
    """Damped fixed-point iteration from each seed; lowest-energy converged fixed point wins."""
    problem = MeanFieldProblem(L=L, N=N, t=t, cavity=cavity, damping=damping, variant=variant)
    seeds = default_seeds(L, cavity) if seeds is None else list(seeds)
    runs = [iterate(problem, s, tol, max_steps) for s in seeds]
    done = [r for r in runs if r.converged]
    if not done:
        raise MeanFieldConvergenceError(
            "no seed converged: best residuals " + ", ".join(f"{r.residual:.2e}" for r in runs),
            residuals=[r.residual for r in runs],
        )
    distinct: list[MeanFieldState] = []
    for r in sorted(done, key=lambda s: (s.energy, -s.alpha.real)):
        if all(abs(r.alpha - d.alpha) > 1e-6 * max(1.0, abs(d.alpha)) for d in distinct):
            distinct.append(r)
    return MeanFieldSolution(best=distinct[0], fixed_points=distinct, runs=runs)


def theta_of_real_amplitude(problem: MeanFieldProblem, x: float) -> float:
    """Theta at cavity amplitude with real part ``x`` (the imaginary part does not enter)."""
    return _evaluate(problem, complex(x, 0.0))[1]


def scan_fixed_points(problem: MeanFieldProblem, n_grid: int = 10_000) -> np.ndarray:
    """Roots of ``x - Re[G/(i kappa + delta)] Theta(x)`` located by sign changes on a grid."""
    c = problem.cavity.amplitude_factor.real
    R = 1.05 * abs(c) * 2 * problem.L + 1e-12
    xs = np.linspace(-R, R, n_grid)
    f = np.array([x - c * theta_of_real_amplitude(problem, x) for x in xs])
    roots = []
    for i in range(n_grid - 1):
        if f[i] == 0.0:
            roots.append(xs[i])
        elif f[i] * f[i + 1] < 0:
            roots.append(0.5 * (xs[i] + xs[i + 1]))
    return np.array(roots)


def sweep_cavity(U_values, L: int, N: int, t: float, delta_abs: float, kappa: float, **kw):
    """Mean-field solutions along ``U_l`` with ``|delta|`` and ``kappa`` fixed."""
    out = []
    for U in U_values:
        cavity = CavityParams.from_U_l(float(U), L, delta_abs, kappa)
        out.append(mf_solve(L, N, t, cavity, **kw))
    return out


def with_variant(problem: MeanFieldProblem, variant: str) -> MeanFieldProblem:
    return replace(problem, variant=variant)
