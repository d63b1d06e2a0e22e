"""Magnetic phase labels from structure-factor peaks, boundary search, finite-size extrapolation.

Labels follow the peak positions of S_z(k) and S_x(k) folded onto [0, pi]:

    ===========  =========  ==================
    label        theta_z    theta_x
    ===========  =========  ==================
    AF           pi         pi
    FM           0          0
    AFz_IAFx     pi         strictly inside
    FMz_IAFx     0          strictly inside
    ===========  =========  ==================

Anything else is ``Indeterminate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .observables import StructureFactor

PEAK_TIE_TOL = 1e-12
SNAP_TOL = 0.02
NEIGHBORHOOD_STEPS = 3
BISECT_REL_TOL = 1e-3
LABELS = ("AF", "FM", "AFz_IAFx", "FMz_IAFx", "Indeterminate")


class BracketError(ValueError):
    """The two ends of a bisection bracket give the same sign."""


@dataclass(frozen=True)
class PhasePoint:
    t: float
    U_s: float
    U_l: float
    L: int
    theta_z: float
    theta_x: float
    height_z: float
    height_x: float
    label: str
    degenerate: bool = False


@dataclass(frozen=True)
class ScalingFit:
    """``U_c(L) = a + b/L + c/L^2``; ``a`` is the thermodynamic-limit estimate."""

    a: float
    b: float
    c: float
    residual: float
    points: tuple[tuple[int, float], ...]

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)

    def __call__(self, L) -> np.ndarray:
        x = 1.0 / np.asarray(L, dtype=float)
        return self.a + self.b * x + self.c * x**2


def snap(theta: float, tol: float = SNAP_TOL) -> float:
    theta = abs(theta)
    if theta <= tol:
        return 0.0
    if theta >= math.pi - tol:
        return math.pi
    return theta


def peak_position(S: StructureFactor, tol: float = SNAP_TOL) -> tuple[float, float]:
    """Highest point of S on ``k >= 0``, smallest ``|k|`` on ties, endpoints snapped."""
    ks = np.asarray(S.k_grid)
    vals = np.asarray(S.values)
    half = ks >= -1e-12
    ks, vals = np.abs(ks[half]), vals[half]
    order = np.argsort(ks, kind="stable")
    ks, vals = ks[order], vals[order]
    top = float(np.max(vals))
    # values within rounding of the maximum count as ties; the first is the smallest |k|
    i = int(np.flatnonzero(vals >= top - PEAK_TIE_TOL * max(1.0, abs(top)))[0])
    return snap(float(ks[i]), tol), float(vals[i])


def _is_zero(theta: float) -> bool:
    return theta == 0.0


def _is_pi(theta: float) -> bool:
    return theta == math.pi


def classify(theta_z: float, theta_x: float) -> str:
    if _is_pi(theta_z) and _is_pi(theta_x):
        return "AF"
    if _is_zero(theta_z) and _is_zero(theta_x):
        return "FM"
    inside_x = not (_is_zero(theta_x) or _is_pi(theta_x))
    if _is_pi(theta_z) and inside_x:
        return "AFz_IAFx"
    if _is_zero(theta_z) and inside_x:
        return "FMz_IAFx"
    return "Indeterminate"


def phase_point(sz: StructureFactor, sx: StructureFactor, *, t, U_s, U_l, L, degenerate=False) -> PhasePoint:
    tz, hz = peak_position(sz)
    tx, hx = peak_position(sx)
    return PhasePoint(
        t=t, U_s=U_s, U_l=U_l, L=L, theta_z=tz, theta_x=tx, height_z=hz, height_x=hx,
        label=classify(tz, tx), degenerate=degenerate,
    )


def ferro_margin(S: StructureFactor, steps: int = NEIGHBORHOOD_STEPS) -> float:
    """``S(0)`` minus the highest value farther than ``steps`` grid spacings from 0.

    Positive when the k = 0 peak dominates.
    """
    ks = np.asarray(S.k_grid)
    vals = np.asarray(S.values)
    i0 = int(np.argmin(np.abs(ks)))
    dk = float(np.min(np.diff(ks)))
    away = np.abs(ks) > steps * dk + 1e-12
    return float(vals[i0] - np.max(vals[away]))


def bisect_root(fn, lo: float, hi: float, width: float, max_steps: int = 200):
    """Root of ``fn`` on ``[lo, hi]`` by bisection until the bracket is narrower than ``width``.

    Returns ``(root, evaluations)`` where ``evaluations`` lists every ``(x, fn(x))``.
    """
    f_lo, f_hi = fn(lo), fn(hi)
    evals = [(lo, f_lo), (hi, f_hi)]
    if f_lo == 0.0:
        return lo, evals
    if f_hi == 0.0:
        return hi, evals
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f = {f_lo:.3e}, {f_hi:.3e}")
    for _ in range(max_steps):
        if abs(hi - lo) < width:
            break
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        evals.append((mid, f_mid))
        if f_mid == 0.0:
            return mid, evals
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi), evals


def boundary_bisect(margin_of_U, bracket, *, U_s: float, t: float = 0.0, rel_tol: float = BISECT_REL_TOL):
    """Critical ``U_l`` where ``margin_of_U`` (e.g. :func:`ferro_margin` of a fresh solve) changes sign.

    The stopping width is ``rel_tol * U_s``, or ``rel_tol * t`` when ``U_s == 0``.
    """
    scale = abs(U_s) if U_s != 0 else abs(t)
    if scale == 0:
        raise ValueError("need U_s or t nonzero to set the bisection width")
    lo, hi = sorted(map(float, bracket))
    root, _ = bisect_root(margin_of_U, lo, hi, rel_tol * scale)
    return root


def scaling_fit(points) -> ScalingFit:
    """Least-squares fit of ``U_c`` against ``1/L`` with a degree-2 polynomial."""
    pts = [(int(L), float(u)) for L, u in points]
    Ls = [L for L, _ in pts]
    if len(set(Ls)) != len(Ls):
        raise ValueError(f"duplicate system sizes in {sorted(Ls)}")
    if len(pts) < 3:
        raise ValueError(f"need at least 3 system sizes, got {len(pts)}")
    if any(L <= 0 for L in Ls):
        raise ValueError("system sizes must be positive")
    x = 1.0 / np.array(Ls, dtype=float)
    y = np.array([u for _, u in pts])
    A = np.vander(x, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.linalg.norm(A @ coef - y))
    return ScalingFit(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]), residual=residual, points=tuple(pts))
