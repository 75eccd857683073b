"""Characteristic function, eigenvalue solver with an independent
truncated-interval oracle, Weyl m-function, and Green's function.

Eigenvalues are zeros of W(z) = sin(a) f'(z,0) + cos(a) f(z,0) built from the
backward-integrated decaying solution.  Root location is insensitive to any
smooth nonzero normalization of f, so the search runs on a locally-normalized
seed with a loose stability target; values are polished by bracketed root
finding on the sign of the real mantissa (the log scale is sign-irrelevant).

The independent oracle solves the regular problem on [0, L] with a Dirichlet
cap, counting eigenvalues through the monotone polar (shooting) angle; it
shares no seed asymptotics, no normalization, and a different stepping pair
with the primary path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .ode import (
    IntegratorOptions,
    ScaledState,
    jost_solution,
    regular_solution,
)
from .potentials import Potential, PotentialKind
from .quadutil import cquad

__all__ = [
    "BoundaryCondition",
    "ScaledComplex",
    "PoleWarning",
    "WeylTailFit",
    "Spectrum",
    "characteristic_function",
    "find_eigenvalues",
    "truncated_oracle_eigenvalues",
    "weyl_m",
    "green_function",
    "bohr_sommerfeld_phase",
]


class PoleWarning(UserWarning):
    """Evaluation close to an eigenvalue pole."""


@dataclass(frozen=True)
class BoundaryCondition:
    """Self-adjoint boundary condition sin(a) u'(0) + cos(a) u(0) = 0."""

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < math.pi):
            raise ValueError(f"alpha must lie in [0, pi), got {self.alpha}")


def _alpha_of(bc) -> float:
    a = bc.alpha if isinstance(bc, BoundaryCondition) else float(bc)
    if not (0.0 <= a < math.pi):
        raise ValueError(f"alpha must lie in [0, pi), got {a}")
    return a


@dataclass(frozen=True)
class ScaledComplex:
    """A complex value carried as mantissa * exp(log_scale)."""

    mantissa: complex
    log_scale: float

    def to_complex(self) -> complex:
        if self.log_scale > 700.0:
            return complex(math.inf, 0.0) * (1 if self.mantissa.real >= 0 else -1)
        return self.mantissa * math.exp(self.log_scale)

    def abs_log(self) -> float:
        return self.log_scale + math.log(abs(self.mantissa))

    @property
    def real_sign(self) -> float:
        return math.copysign(1.0, complex(self.mantissa).real)


def characteristic_function(pot: Potential, alpha, z,
                            opts: IntegratorOptions | None = None) -> ScaledComplex:
    """sin(a) f'(z,0,x0) + cos(a) f(z,0,x0) in log-scaled form.

    Vanishes exactly at the eigenvalues of the operator with boundary
    parameter ``alpha``.  For real z at or above the potential on the
    normalization ray the value carries a locally-normalized (real) scaling
    of the decaying solution instead of the x0-anchored one; zeros and root
    orders are unaffected.
    """
    a = _alpha_of(alpha)
    res = jost_solution(pot, z, opts)
    st = res.state
    w = math.sin(a) * st.du + math.cos(a) * st.u
    return ScaledComplex(complex(w), st.log_scale)


@dataclass(frozen=True)
class WeylTailFit:
    """Shifted power-law model lam_k ~ amplitude * (k + shift)^exponent."""

    amplitude: float
    exponent: float
    shift: float
    k_fit_from: int
    max_rel_residual: float
    ok: bool

    def level(self, k) -> float:
        return self.amplitude * (np.asarray(k, dtype=float) + self.shift) ** self.exponent


@dataclass(frozen=True)
class Spectrum:
    """Ordered simple eigenvalues with root residual diagnostics."""

    alpha: float
    eigenvalues: tuple[float, ...]
    residuals: tuple[float, ...]
    weyl_tail: WeylTailFit | None
    multiplicity: int = 1

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def to_dict(self) -> dict:
        d = {
            "alpha": self.alpha,
            "eigenvalues": list(self.eigenvalues),
            "residuals": list(self.residuals),
            "multiplicity": self.multiplicity,
        }
        if self.weyl_tail is not None:
            d["weyl_tail"] = {
                "amplitude": self.weyl_tail.amplitude,
                "exponent": self.weyl_tail.exponent,
                "shift": self.weyl_tail.shift,
                "ok": self.weyl_tail.ok,
            }
        return d


def bohr_sommerfeld_phase(pot: Potential, lam: float) -> float:
    """Classical action integral int_0^{x_t} sqrt(lam - q) dx (zero below q)."""
    if lam <= 0.0:
        return 0.0
    if pot.kind is PotentialKind.LINEAR:
        return (2.0 / 3.0) * lam ** 1.5
    if pot.kind is PotentialKind.QUADRATIC:
        return 0.25 * math.pi * lam
    if pot.kind is PotentialKind.POWER_LAW:
        # lam^(1/2 + 1/p) c^(-1/p) * Beta(1/p, 3/2) / p
        beta = math.gamma(1.0 / pot.p) * math.gamma(1.5) / math.gamma(1.0 / pot.p + 1.5)
        return lam ** (0.5 + 1.0 / pot.p) * pot.c ** (-1.0 / pot.p) * beta / pot.p
    x_t = pot.turning_point(lam)
    if x_t <= 0.0:
        return 0.0
    val = cquad(lambda x: math.sqrt(max(lam - pot.q(x), 0.0)), 0.0, x_t,
                epsabs=1e-10, epsrel=1e-9)
    return val.real


def _bs_level_guess(pot: Potential, alpha: float, k: int) -> float:
    """Invert the action integral at the semiclassical quantization count."""
    offset = 0.25 if alpha == 0.0 else 0.75
    target = math.pi * max(k - offset, 0.35)
    lo, hi = 1e-6, 1.0
    while bohr_sommerfeld_phase(pot, hi) < target:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("failed to bracket the semiclassical level")
    return brentq(lambda lam: bohr_sommerfeld_phase(pot, lam) - target, lo, hi,
                  xtol=1e-9, rtol=1e-12)


class _CharacteristicEvaluator:
    """Caching evaluator of the real mantissa of W along the real axis."""

    def __init__(self, pot: Potential, alpha: float, opts: IntegratorOptions):
        self.pot = pot
        self.alpha = alpha
        # Root search: loose seed target, no per-call doubling; any smooth
        # nonzero normalization factor leaves the zeros in place.
        self.opts = replace(opts, seed_rel_err=max(1e-4, opts.seed_target),
                            verify_seed=False)
        self.cache: dict[float, tuple[float, float]] = {}
        self.ls_ref: float | None = None

    def margin_for(self, lam: float) -> float:
        x_t = self.pot.turning_point(lam)
        m = 5.0
        from .ode import _seed_tail_corrections  # local import to avoid cycle

        while True:
            X = max(2.0 * self.pot.x0, x_t + m)
            T, _ = _seed_tail_corrections(self.pot, lam, X, need_zder=False)
            if 8.0 * abs(T) ** 2 <= self.opts.seed_target or X > self.opts.x_cap_ceiling:
                return X
            m *= 1.6

    def raw(self, lam: float) -> tuple[float, float]:
        hit = self.cache.get(lam)
        if hit is None:
            res = jost_solution(self.pot, lam, self.opts, X_cap=self.margin_for(lam))
            st = res.state
            w = math.sin(self.alpha) * st.du + math.cos(self.alpha) * st.u
            hit = (float(complex(w).real), st.log_scale)
            self.cache[lam] = hit
        return hit

    def __call__(self, lam: float) -> float:
        w, ls = self.raw(lam)
        if self.ls_ref is None:
            self.ls_ref = ls
        d = ls - self.ls_ref
        if d > 600.0:
            d = 600.0
        elif d < -600.0:
            d = -600.0
        return w * math.exp(d)


def find_eigenvalues(pot: Potential, alpha, count: int,
                     opts: IntegratorOptions | None = None) -> Spectrum:
    """First ``count`` eigenvalues by sign-change bracketing of W.

    Brackets are seeded at midpoints of consecutive semiclassical level
    predictions and refined by subdivision when a sign change is missing;
    each root is polished to |dlam| < 1e-10 max(1, |lam|).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    a = _alpha_of(alpha)
    opts = opts or IntegratorOptions()
    ev = _CharacteristicEvaluator(pot, a, opts)

    guesses = [_bs_level_guess(pot, a, k) for k in range(1, count + 2)]
    first_gap = max(guesses[1] - guesses[0], 0.5 * guesses[0], 1e-3)
    pts = [max(guesses[0] - 0.9 * first_gap, -3.0 * first_gap)]
    for k in range(count):
        pts.append(0.5 * (guesses[k] + guesses[k + 1]))

    brackets = _bracket_roots(ev, pts, count)
    roots = []
    residuals = []
    for (lo, hi) in brackets:
        ev.ls_ref = None  # normalize the mantissa scale per bracket
        root = brentq(ev, lo, hi, xtol=1e-11, rtol=4e-12)
        roots.append(root)
        w_root, ls_root = ev.raw(root)
        ref = max(
            abs(ev.raw(lo)[0]) * _safe_exp(ev.raw(lo)[1] - ls_root),
            abs(ev.raw(hi)[0]) * _safe_exp(ev.raw(hi)[1] - ls_root),
        )
        residuals.append(abs(w_root) / ref if ref > 0 else abs(w_root))

    roots_arr = np.array(roots)
    if np.any(np.diff(roots_arr) <= 0):
        raise RuntimeError("root list is not strictly increasing; bracketing failed")
    tail = _fit_weyl_tail(roots_arr) if count >= 8 else None
    return Spectrum(alpha=a, eigenvalues=tuple(roots),
                    residuals=tuple(residuals), weyl_tail=tail)


def _safe_exp(d: float) -> float:
    return math.exp(min(max(d, -600.0), 600.0))


def _bracket_roots(ev, pts: list[float], need: int,
                   max_refine: int = 6) -> list[tuple[float, float]]:
    pts = sorted(pts)
    vals = {p: ev(p) for p in pts}
    for _ in range(max_refine):
        brackets = []
        for a, b in zip(pts[:-1], pts[1:]):
            if vals[a] == 0.0:
                vals[a] = 1e-300  # landing exactly on a root: nudge
            if vals[a] * vals[b] < 0.0:
                brackets.append((a, b))
        if len(brackets) >= need:
            return brackets[:need]
        # Subdivide everywhere and push both ends out one gap; semiclassical
        # predictions can be biased by up to half a level for mixed
        # boundary conditions.
        ext = [pts[0] - (pts[1] - pts[0]), pts[-1] + (pts[-1] - pts[-2])]
        new_pts = sorted(set(pts) | {0.5 * (a + b) for a, b in zip(pts[:-1], pts[1:])}
                         | set(ext))
        for p in new_pts:
            if p not in vals:
                vals[p] = ev(p)
        pts = new_pts
    raise RuntimeError(
        f"bracket refinement exhausted: found {len(brackets)} of {need} sign changes"
    )


def _fit_weyl_tail(lams: np.ndarray) -> WeylTailFit:
    """Fit lam_k ~ A (k + b)^g on the upper part of the computed list."""
    n = len(lams)
    k0 = max(3, n // 3)
    ks = np.arange(k0, n + 1, dtype=float)
    ys = np.log(lams[k0 - 1 :])

    def resid(b: float):
        xs = np.log(ks + b)
        g, loga = np.polyfit(xs, ys, 1)
        r = ys - (g * xs + loga)
        return float(np.sum(r * r)), math.exp(loga), g

    best = (math.inf, 1.0, 1.0, 0.0)
    for b in np.linspace(-0.9, 1.5, 49):
        s, A, g = resid(b)
        if s < best[0]:
            best = (s, A, g, b)
    # local refinement around the best shift
    b0 = best[3]
    for b in np.linspace(b0 - 0.05, b0 + 0.05, 21):
        s, A, g = resid(b)
        if s < best[0]:
            best = (s, A, g, b)
    _, A, g, b = best
    model = A * (np.arange(k0, n + 1) + b) ** g
    rel = np.abs(model - lams[k0 - 1 :]) / lams[k0 - 1 :]
    max_rel = float(np.max(rel))
    return WeylTailFit(amplitude=A, exponent=g, shift=b, k_fit_from=k0,
                       max_rel_residual=max_rel, ok=max_rel < 0.05)


# ----------------------------------------------------------------------------
# Independent truncated-interval oracle (shooting on the polar angle)
# ----------------------------------------------------------------------------


def truncated_oracle_eigenvalues(pot: Potential, alpha, L: float, count: int,
                                 opts: IntegratorOptions | None = None) -> list[float]:
    """Eigenvalues of the regular problem on [0, L] (Dirichlet cap at L).

    The polar angle theta with u = r sin(theta), u' = r cos(theta) starts at
    -alpha and is nondecreasing in the energy at x = L; the k-th eigenvalue
    solves theta(L; lam) = k pi.  Converges to the half-line spectrum as L
    grows past the classical turning point.
    """
    a = _alpha_of(alpha)
    opts = opts or IntegratorOptions()
    _, _, prufer = kernels.steppers_for(pot)

    def theta_at_L(lam: float) -> float:
        th, x1, status, _ = prufer(pot.kind_code, pot.c, pot.p, lam, -a, 0.0, L,
                                   min(opts.rel_tol, 1e-11), 1e-13, opts.max_steps)
        if status != kernels.STATUS_OK:
            raise RuntimeError(f"oracle integration failed at x = {x1:.6g}")
        return th

    roots = []
    for k in range(1, count + 1):
        target = k * math.pi
        guess = _bs_level_guess(pot, a, k)
        if pot.turning_point(guess) > L:
            raise ValueError(
                f"L = {L} does not clear the classical turning point of level {k}"
            )
        span = max(1.0, 0.5 * guess)
        lo, hi = guess - span, guess + span
        while theta_at_L(lo) - target > 0.0:
            lo -= span
            span *= 2.0
        span = max(1.0, 0.5 * guess)
        while theta_at_L(hi) - target < 0.0:
            hi += span
            span *= 2.0
        roots.append(brentq(lambda lam: theta_at_L(lam) - target, lo, hi,
                            xtol=1e-12, rtol=4e-13))
    return roots


# ----------------------------------------------------------------------------
# Weyl-Titchmarsh m-function and Green's function
# ----------------------------------------------------------------------------


def weyl_m(pot: Potential, alpha, z, opts: IntegratorOptions | None = None) -> complex:
    """m(z) = [cos(a) f'(z,0) - sin(a) f(z,0)] / [sin(a) f'(z,0) + cos(a) f(z,0)].

    This is the coefficient in psi = theta + m phi making psi square
    integrable; the normalization of f cancels in the ratio.  Herglotz in the
    upper half-plane; poles exactly at the eigenvalues.
    """
    a = _alpha_of(alpha)
    res = jost_solution(pot, z, opts)
    st = res.state
    num = math.cos(a) * st.du - math.sin(a) * st.u
    den = math.sin(a) * st.du + math.cos(a) * st.u
    if abs(den) < 1e-10 * max(abs(num), 1.0):
        warnings.warn(f"z = {z} is within solver tolerance of an eigenvalue pole",
                      PoleWarning, stacklevel=2)
    return complex(num) / complex(den)


def green_function(pot: Potential, alpha, z, x: float, xp: float,
                   opts: IntegratorOptions | None = None) -> complex:
    """Resolvent kernel G(z, x, x') = phi(z, x_<) psi(z, x_>).

    Symmetric in (x, x'); the derivative jump across the diagonal is -1.
    """
    a = _alpha_of(alpha)
    if x < 0 or xp < 0:
        raise ValueError("positions must be nonnegative")
    x_lo, x_hi = (x, xp) if x <= xp else (xp, x)
    res = jost_solution(pot, z, opts, x_stop=0.0, sample_points=[x_hi])
    st0 = res.state
    st_hi = res.trajectory[-1] if res.trajectory else st0
    den = math.sin(a) * st0.du + math.cos(a) * st0.u
    if abs(den) < 1e-12 * max(abs(st0.u), abs(st0.du)):
        warnings.warn(f"z = {z} is within solver tolerance of an eigenvalue pole",
                      PoleWarning, stacklevel=2)
    phi = regular_solution(pot, a, z, x_lo, opts, which="phi")
    expo = phi.log_scale + st_hi.log_scale - st0.log_scale
    val = complex(phi.u) * complex(st_hi.u) / complex(den)
    if expo > 700.0:
        return complex(math.inf, 0.0)
    return val * math.exp(expo)
