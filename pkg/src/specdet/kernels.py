"""Adaptive Dormand-Prince 5(4) stepping loops with log-magnitude rescaling.

The loops are written once, as plain scalar Python, and compiled twice:
:data:`pair_stepper` / :data:`aug_stepper` / :data:`prufer_stepper` hold the
numba-jitted versions (when enabled), ``*_py`` the interpreted twins.  They
are dtype-generic: passing float64 state and energy yields a fully real
integration (used by eigenvalue searches), complex128 state gives the complex
one.  Custom potentials are handled by rebuilding the same loop around the
user callable, interpreted only.

State convention: the carried (u, u') are mantissas; whenever their max
magnitude leaves [exp(-renorm_log), exp(renorm_log)] they are divided by it
and the natural log of the factor accumulates in ``log_scale``, so the pair
(mantissa, log_scale) survives thousands of e-folds of growth or decay.
"""

from __future__ import annotations

import math
from functools import lru_cache

from .backend import HAVE_NUMBA, jit_kernel, using_numba

# Potential kind codes shared with specdet.potentials.KIND_CODE.
KIND_LINEAR = 0
KIND_POWER = 1
KIND_QUADRATIC = 2
KIND_CUSTOM = 3

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_BAD_VALUE = 2
STATUS_STEP_UNDERFLOW = 3


def _q_builtin(kind, c, p, x):
    if kind == 0:
        return x
    if kind == 2:
        return x * x
    return c * x ** p


def _make_pair_stepper(q_of):
    """Second-order equation -u'' + q u = z u as a first-order pair."""

    def pair(kind, c, p, z, u, du, log_scale, x, x_to, rel_tol, abs_tol,
             max_steps, renorm_log):
        # Dormand-Prince 5(4), FSAL; b-row equals the last stage row.
        a21 = 1.0 / 5.0
        a31, a32 = 3.0 / 40.0, 9.0 / 40.0
        a41, a42, a43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
        a51, a52, a53, a54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
        a61, a62, a63, a64, a65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
        b1, b3, b4, b5, b6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
        e1, e3, e4, e5, e6, e7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                  -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
        c2, c3, c4, c5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0

        big = math.exp(renorm_log)
        small = 1.0 / big

        direction = 1.0 if x_to > x else -1.0
        q0 = q_of(kind, c, p, x)
        rate = math.sqrt(abs(q0 - z)) + 1e-16
        h = direction * min(0.2 / rate, abs(x_to - x))
        if h == 0.0:
            return u, du, log_scale, x, STATUS_OK, 0, 0.0

        k1u = du
        k1d = (q0 - z) * u
        nsteps = 0
        status = STATUS_MAX_STEPS
        hlast = h
        while nsteps < max_steps:
            if not (math.isfinite(abs(k1u)) and math.isfinite(abs(k1d))):
                status = STATUS_BAD_VALUE
                break
            remaining = x_to - x
            landing = False
            if (h - remaining) * direction >= 0.0:
                h = remaining
                landing = True
            if abs(h) < 1e-13 * max(1.0, abs(x)):
                status = STATUS_STEP_UNDERFLOW
                break

            yu = u + h * a21 * k1u
            yd = du + h * a21 * k1d
            k2u = yd
            k2d = (q_of(kind, c, p, x + c2 * h) - z) * yu

            yu = u + h * (a31 * k1u + a32 * k2u)
            yd = du + h * (a31 * k1d + a32 * k2d)
            k3u = yd
            k3d = (q_of(kind, c, p, x + c3 * h) - z) * yu

            yu = u + h * (a41 * k1u + a42 * k2u + a43 * k3u)
            yd = du + h * (a41 * k1d + a42 * k2d + a43 * k3d)
            k4u = yd
            k4d = (q_of(kind, c, p, x + c4 * h) - z) * yu

            yu = u + h * (a51 * k1u + a52 * k2u + a53 * k3u + a54 * k4u)
            yd = du + h * (a51 * k1d + a52 * k2d + a53 * k3d + a54 * k4d)
            k5u = yd
            k5d = (q_of(kind, c, p, x + c5 * h) - z) * yu

            yu = u + h * (a61 * k1u + a62 * k2u + a63 * k3u + a64 * k4u + a65 * k5u)
            yd = du + h * (a61 * k1d + a62 * k2d + a63 * k3d + a64 * k4d + a65 * k5d)
            k6u = yd
            k6d = (q_of(kind, c, p, x + h) - z) * yu

            unew = u + h * (b1 * k1u + b3 * k3u + b4 * k4u + b5 * k5u + b6 * k6u)
            dnew = du + h * (b1 * k1d + b3 * k3d + b4 * k4d + b5 * k5d + b6 * k6d)
            k7u = dnew
            k7d = (q_of(kind, c, p, x + h) - z) * unew

            eu = h * (e1 * k1u + e3 * k3u + e4 * k4u + e5 * k5u + e6 * k6u + e7 * k7u)
            ed = h * (e1 * k1d + e3 * k3d + e4 * k4d + e5 * k5d + e6 * k6d + e7 * k7d)
            scu = abs_tol + rel_tol * max(abs(u), abs(unew))
            scd = abs_tol + rel_tol * max(abs(du), abs(dnew))
            err = max(abs(eu) / scu, abs(ed) / scd)
            nsteps += 1

            if err <= 1.0:
                x = x_to if landing else x + h
                u, du = unew, dnew
                k1u, k1d = k7u, k7d
                m = max(abs(u), abs(du))
                if (m > big or m < small) and m > 0.0:
                    u = u / m
                    du = du / m
                    k1u = k1u / m
                    k1d = k1d / m
                    log_scale += math.log(m)
                if landing:
                    status = STATUS_OK
                    break
                if err > 1e-30:
                    fac = 0.9 * err ** -0.2
                    if fac > 5.0:
                        fac = 5.0
                else:
                    fac = 5.0
                h = h * fac
                hlast = h
            else:
                if math.isfinite(err):
                    fac = 0.9 * err ** -0.2
                    if fac < 0.1:
                        fac = 0.1
                else:
                    fac = 0.1
                h = h * fac
        return u, du, log_scale, x, status, nsteps, abs(hlast)

    return pair


def _make_aug_stepper(q_of):
    """Pair plus its energy derivative: v solves -v'' + q v = z v + u."""

    def aug(kind, c, p, z, u, du, v, dv, log_scale, x, x_to, rel_tol, abs_tol,
            max_steps, renorm_log):
        a21 = 1.0 / 5.0
        a31, a32 = 3.0 / 40.0, 9.0 / 40.0
        a41, a42, a43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
        a51, a52, a53, a54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
        a61, a62, a63, a64, a65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
        b1, b3, b4, b5, b6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
        e1, e3, e4, e5, e6, e7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                  -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
        c2, c3, c4, c5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0

        big = math.exp(renorm_log)
        small = 1.0 / big
        direction = 1.0 if x_to > x else -1.0
        q0 = q_of(kind, c, p, x)
        rate = math.sqrt(abs(q0 - z)) + 1e-16
        h = direction * min(0.2 / rate, abs(x_to - x))
        if h == 0.0:
            return u, du, v, dv, log_scale, x, STATUS_OK, 0

        w0 = q0 - z
        k1u, k1d, k1v, k1w = du, w0 * u, dv, w0 * v - u
        nsteps = 0
        status = STATUS_MAX_STEPS
        while nsteps < max_steps:
            if not (math.isfinite(abs(k1u)) and math.isfinite(abs(k1d))
                    and math.isfinite(abs(k1v)) and math.isfinite(abs(k1w))):
                status = STATUS_BAD_VALUE
                break
            remaining = x_to - x
            landing = False
            if (h - remaining) * direction >= 0.0:
                h = remaining
                landing = True
            if abs(h) < 1e-13 * max(1.0, abs(x)):
                status = STATUS_STEP_UNDERFLOW
                break

            yu = u + h * a21 * k1u
            yd = du + h * a21 * k1d
            yv = v + h * a21 * k1v
            yw = dv + h * a21 * k1w
            wq = q_of(kind, c, p, x + c2 * h) - z
            k2u, k2d, k2v, k2w = yd, wq * yu, yw, wq * yv - yu

            yu = u + h * (a31 * k1u + a32 * k2u)
            yd = du + h * (a31 * k1d + a32 * k2d)
            yv = v + h * (a31 * k1v + a32 * k2v)
            yw = dv + h * (a31 * k1w + a32 * k2w)
            wq = q_of(kind, c, p, x + c3 * h) - z
            k3u, k3d, k3v, k3w = yd, wq * yu, yw, wq * yv - yu

            yu = u + h * (a41 * k1u + a42 * k2u + a43 * k3u)
            yd = du + h * (a41 * k1d + a42 * k2d + a43 * k3d)
            yv = v + h * (a41 * k1v + a42 * k2v + a43 * k3v)
            yw = dv + h * (a41 * k1w + a42 * k2w + a43 * k3w)
            wq = q_of(kind, c, p, x + c4 * h) - z
            k4u, k4d, k4v, k4w = yd, wq * yu, yw, wq * yv - yu

            yu = u + h * (a51 * k1u + a52 * k2u + a53 * k3u + a54 * k4u)
            yd = du + h * (a51 * k1d + a52 * k2d + a53 * k3d + a54 * k4d)
            yv = v + h * (a51 * k1v + a52 * k2v + a53 * k3v + a54 * k4v)
            yw = dv + h * (a51 * k1w + a52 * k2w + a53 * k3w + a54 * k4w)
            wq = q_of(kind, c, p, x + c5 * h) - z
            k5u, k5d, k5v, k5w = yd, wq * yu, yw, wq * yv - yu

            yu = u + h * (a61 * k1u + a62 * k2u + a63 * k3u + a64 * k4u + a65 * k5u)
            yd = du + h * (a61 * k1d + a62 * k2d + a63 * k3d + a64 * k4d + a65 * k5d)
            yv = v + h * (a61 * k1v + a62 * k2v + a63 * k3v + a64 * k4v + a65 * k5v)
            yw = dv + h * (a61 * k1w + a62 * k2w + a63 * k3w + a64 * k4w + a65 * k5w)
            wq = q_of(kind, c, p, x + h) - z
            k6u, k6d, k6v, k6w = yd, wq * yu, yw, wq * yv - yu

            unew = u + h * (b1 * k1u + b3 * k3u + b4 * k4u + b5 * k5u + b6 * k6u)
            dnew = du + h * (b1 * k1d + b3 * k3d + b4 * k4d + b5 * k5d + b6 * k6d)
            vnew = v + h * (b1 * k1v + b3 * k3v + b4 * k4v + b5 * k5v + b6 * k6v)
            wnew = dv + h * (b1 * k1w + b3 * k3w + b4 * k4w + b5 * k5w + b6 * k6w)
            wq = q_of(kind, c, p, x + h) - z
            k7u, k7d, k7v, k7w = dnew, wq * unew, wnew, wq * vnew - unew

            eu = h * (e1 * k1u + e3 * k3u + e4 * k4u + e5 * k5u + e6 * k6u + e7 * k7u)
            ed = h * (e1 * k1d + e3 * k3d + e4 * k4d + e5 * k5d + e6 * k6d + e7 * k7d)
            ev = h * (e1 * k1v + e3 * k3v + e4 * k4v + e5 * k5v + e6 * k6v + e7 * k7v)
            ew = h * (e1 * k1w + e3 * k3w + e4 * k4w + e5 * k5w + e6 * k6w + e7 * k7w)
            err = abs(eu) / (abs_tol + rel_tol * max(abs(u), abs(unew)))
            t = abs(ed) / (abs_tol + rel_tol * max(abs(du), abs(dnew)))
            if t > err:
                err = t
            t = abs(ev) / (abs_tol + rel_tol * max(abs(v), abs(vnew)))
            if t > err:
                err = t
            t = abs(ew) / (abs_tol + rel_tol * max(abs(dv), abs(wnew)))
            if t > err:
                err = t
            nsteps += 1

            if err <= 1.0:
                x = x_to if landing else x + h
                u, du, v, dv = unew, dnew, vnew, wnew
                k1u, k1d, k1v, k1w = k7u, k7d, k7v, k7w
                m = max(abs(u), abs(du))
                if (m > big or m < small) and m > 0.0:
                    u, du, v, dv = u / m, du / m, v / m, dv / m
                    k1u, k1d, k1v, k1w = k1u / m, k1d / m, k1v / m, k1w / m
                    log_scale += math.log(m)
                if landing:
                    status = STATUS_OK
                    break
                if err > 1e-30:
                    fac = 0.9 * err ** -0.2
                    if fac > 5.0:
                        fac = 5.0
                else:
                    fac = 5.0
                h = h * fac
            else:
                if math.isfinite(err):
                    fac = 0.9 * err ** -0.2
                    if fac < 0.1:
                        fac = 0.1
                else:
                    fac = 0.1
                h = h * fac
        return u, du, v, dv, log_scale, x, status, nsteps

    return aug


def _make_prufer_stepper(q_of):
    """Polar-angle equation theta' = cos^2(theta) + (lam - q) sin^2(theta).

    Cash-Karp 5(4) pair; deliberately a different integrator from the main
    pair stepper so the truncated-interval oracle does not share its stepping
    machinery with the code it cross-checks.
    """

    def prufer(kind, c, p, lam, theta, x, x_to, rel_tol, abs_tol, max_steps):
        a21 = 1.0 / 5.0
        a31, a32 = 3.0 / 40.0, 9.0 / 40.0
        a41, a42, a43 = 3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0
        a51, a52, a53, a54 = -11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0
        a61, a62, a63, a64, a65 = (1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0,
                                   44275.0 / 110592.0, 253.0 / 4096.0)
        b1, b3, b4, b6 = 37.0 / 378.0, 250.0 / 621.0, 125.0 / 594.0, 512.0 / 1771.0
        d1, d3, d4, d5, d6 = (2825.0 / 27648.0, 18575.0 / 48384.0, 13525.0 / 55296.0,
                              277.0 / 14336.0, 0.25)
        c2, c3, c4, c6 = 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 7.0 / 8.0

        def rhs(xx, th):
            s = math.sin(th)
            co = math.cos(th)
            return co * co + (lam - q_of(kind, c, p, xx)) * s * s

        direction = 1.0 if x_to > x else -1.0
        h = direction * min(0.1 / (1.0 + math.sqrt(abs(lam - q_of(kind, c, p, x)))),
                            abs(x_to - x))
        nsteps = 0
        status = STATUS_MAX_STEPS
        while nsteps < max_steps:
            remaining = x_to - x
            landing = False
            if (h - remaining) * direction >= 0.0:
                h = remaining
                landing = True
            if abs(h) < 1e-14 * max(1.0, abs(x)):
                status = STATUS_STEP_UNDERFLOW
                break
            k1 = rhs(x, theta)
            k2 = rhs(x + c2 * h, theta + h * a21 * k1)
            k3 = rhs(x + c3 * h, theta + h * (a31 * k1 + a32 * k2))
            k4 = rhs(x + c4 * h, theta + h * (a41 * k1 + a42 * k2 + a43 * k3))
            k5 = rhs(x + h, theta + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4))
            k6 = rhs(x + c6 * h,
                     theta + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5))
            th5 = theta + h * (b1 * k1 + b3 * k3 + b4 * k4 + b6 * k6)
            th4 = theta + h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6)
            err = abs(th5 - th4) / (abs_tol + rel_tol * max(abs(theta), abs(th5)))
            nsteps += 1
            if err <= 1.0:
                x = x_to if landing else x + h
                theta = th5
                if landing:
                    status = STATUS_OK
                    break
                fac = 5.0 if err < 1e-30 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                h = h * fac
            else:
                fac = 0.1 if not math.isfinite(err) else max(0.1, 0.9 * err ** -0.2)
                h = h * fac
        return theta, x, status, nsteps

    return prufer


# Interpreted versions (also the numpy-backend dispatch targets).
pair_stepper_py = _make_pair_stepper(_q_builtin)
aug_stepper_py = _make_aug_stepper(_q_builtin)
prufer_stepper_py = _make_prufer_stepper(_q_builtin)

if HAVE_NUMBA:
    from numba import njit

    _q_builtin_jit = njit(inline="always")(_q_builtin)
    pair_stepper = jit_kernel(_make_pair_stepper(_q_builtin_jit))
    aug_stepper = jit_kernel(_make_aug_stepper(_q_builtin_jit))
    prufer_stepper = jit_kernel(_make_prufer_stepper(_q_builtin_jit))
else:  # pragma: no cover
    pair_stepper = pair_stepper_py
    aug_stepper = aug_stepper_py
    prufer_stepper = prufer_stepper_py


@lru_cache(maxsize=64)
def _custom_steppers(qfun):
    def q_of(kind, c, p, x):
        return qfun(x)

    return (_make_pair_stepper(q_of), _make_aug_stepper(q_of), _make_prufer_stepper(q_of))


def steppers_for(pot):
    """(pair, aug, prufer) stepping loops appropriate for ``pot`` and backend."""
    if pot.is_custom:
        return _custom_steppers(pot.eval_q)
    if using_numba():
        return pair_stepper, aug_stepper, prufer_stepper
    return pair_stepper_py, aug_stepper_py, prufer_stepper_py


def warmup() -> None:
    """Trigger kernel compilation for both dtypes (no-op on the numpy path)."""
    for zz, uu in ((complex(-1.0, 0.1), complex(1.0, 0.0)), (-1.0, 1.0)):
        pair_stepper(0, 1.0, 1.0, zz, uu, uu, 0.0, 0.0, 1.0, 1e-8, 1e-10, 10000, 10.0)
        aug_stepper(0, 1.0, 1.0, zz, uu, uu, uu, uu, 0.0, 0.0, 1.0, 1e-8, 1e-10, 10000, 10.0)
    prufer_stepper(0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1e-8, 1e-10, 10000)
