"""Closed-form moving frames and invariants from sampled trajectories.

These are the textbook formulas: cheap and exact on clean data, but
undefined at singularities and noise-amplifying (they differentiate the
signal twice).  The optimization route in ``ocp`` is the robust
alternative; this module also provides its reference values.
"""

from __future__ import annotations

import numpy as np

from .descriptors import ScrewDescriptor, SingularityFlags, VectorDescriptor

REL_TOL = 1e-3


class Singular1(Exception):
    """Direction vector vanishes; the whole moving frame is arbitrary."""


class Singular2(Exception):
    """Direction parallel to its derivative; normal/binormal arbitrary."""


class AllSingular(Exception):
    """Every sample is type-1 singular; no frame can be constructed."""


def num_guard(x: np.ndarray, tiny: float = 1e-300) -> np.ndarray:
    return np.where(x == 0.0, tiny, x)


def fs_frame(c: np.ndarray, cp: np.ndarray, tol1: float = 1e-12, tol2: float = 1e-12) -> np.ndarray:
    """Frenet-Serret style frame [e_t, e_n, e_b] from a vector and its derivative.

    e_t = c/||c||, e_n along (c x c') x c, e_b = e_t x e_n (right-handed).
    """
    c = np.asarray(c, dtype=float)
    cp = np.asarray(cp, dtype=float)
    nc = np.linalg.norm(c)
    if nc <= tol1:
        raise Singular1(f"||c|| = {nc:g} <= {tol1:g}")
    cxcp = np.cross(c, cp)
    if np.linalg.norm(cxcp) <= tol2:
        raise Singular2(f"||c x c'|| = {np.linalg.norm(cxcp):g} <= {tol2:g}")
    et = c / nc
    en = np.cross(cxcp, c)
    en /= np.linalg.norm(en)
    return np.column_stack([et, en, np.cross(et, en)])


def _complete_frame(et: np.ndarray) -> np.ndarray:
    """Arbitrary right-handed completion of a unit tangent (type-2 fallback)."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(et[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    en = np.cross(ref, et)
    en /= np.linalg.norm(en)
    return np.column_stack([et, en, np.cross(et, en)])


def _derivatives(y: np.ndarray, dxi: float) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative, 2nd-order central, one-sided at the ends."""
    n = len(y)
    d1 = np.empty_like(y)
    d2 = np.empty_like(y)
    d1[1:-1] = (y[2:] - y[:-2]) / (2 * dxi)
    d1[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * dxi)
    d1[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * dxi)
    d2[1:-1] = (y[2:] - 2 * y[1:-1] + y[:-2]) / dxi**2
    if n >= 4:
        d2[0] = (2 * y[0] - 5 * y[1] + 4 * y[2] - y[3]) / dxi**2
        d2[-1] = (2 * y[-1] - 5 * y[-2] + 4 * y[-3] - y[-4]) / dxi**2
    else:
        d2[0] = d2[1]
        d2[-1] = d2[-2]
    return d1, d2


def vector_invariants_analytic(
    samples: np.ndarray, xi: np.ndarray | None = None
) -> tuple[VectorDescriptor, SingularityFlags]:
    """Vector invariants (c, omega_kappa, omega_tau) by the explicit formulas.

    Derivatives come from finite differences on the uniform xi grid.  At
    type-2 samples the previous frame is held and the torsion rate set to
    zero; at type-1 samples the object invariant is zero and the frame held.
    The sign convention of the frame construction forces c >= 0 and
    omega_kappa >= 0 here.
    """
    c = np.asarray(samples, dtype=float)
    n = len(c)
    if n < 5:
        raise ValueError("need at least 5 samples")
    if xi is None:
        xi = np.linspace(0.0, 1.0, n)
    dxi = float(xi[1] - xi[0])
    cp, cpp = _derivatives(c, dxi)

    nc = np.linalg.norm(c, axis=1)
    cxcp = np.cross(c, cp)
    ncx = np.linalg.norm(cxcp, axis=1)
    tol1 = REL_TOL * np.max(nc)
    tol2 = REL_TOL * np.max(ncx) if np.max(ncx) > 0 else np.inf
    type1 = nc <= tol1
    type2 = (ncx <= tol2) | type1
    if np.all(type1):
        raise AllSingular("direction vanishes at every sample")

    obj = np.where(type1, 0.0, nc)
    with np.errstate(divide="ignore", invalid="ignore"):
        wk = np.where(type1, 0.0, ncx / num_guard(nc**2))
        wt_num = np.einsum("ij,ij->i", np.cross(cxcp, np.cross(c, cpp)), c)
        wt = np.where(type2, 0.0, wt_num / num_guard(ncx**2 * nc))

    frames = np.empty((n, 3, 3))
    prev = None
    for k in range(n):
        if not type2[k]:
            frames[k] = fs_frame(c[k], cp[k], tol1, tol2)
        elif not type1[k]:
            # tangent defined; keep previous normal/binormal if possible
            et = c[k] / nc[k]
            if prev is not None:
                en = prev[:, 1] - (prev[:, 1] @ et) * et
                nn = np.linalg.norm(en)
                frames[k] = (np.column_stack([et, en / nn, np.cross(et, en / nn)])
                             if nn > 1e-12 else _complete_frame(et))
            else:
                frames[k] = _complete_frame(et)
        else:
            frames[k] = prev if prev is not None else np.eye(3)
        prev = frames[k]
    # frames at leading type-1 samples: hold the first defined one backwards
    first_ok = np.nonzero(~type1)[0][0]
    for k in range(first_ok - 1, -1, -1):
        if type1[k]:
            frames[k] = frames[k + 1]

    fi = np.column_stack([wt, wk])[:-1]
    flags = SingularityFlags(type1=type1, type2=type2, tol1=tol1, tol2=tol2)
    desc = VectorDescriptor(xi=np.asarray(xi, dtype=float), object_invariant=obj,
                            frame_invariant=fi, frames=frames, flags=flags)
    return desc, flags


def perp_point(s: np.ndarray) -> np.ndarray:
    """Point on the screw axis closest to the origin: (a x b) / ||a||^2."""
    a, b = s[:3], s[3:]
    return np.cross(a, b) / float(a @ a)


def perp_point_derivative(s: np.ndarray, sp: np.ndarray) -> np.ndarray:
    """Analytic derivative of perp_point along the trajectory."""
    a, b = s[:3], s[3:]
    ap, bp = sp[:3], sp[3:]
    n2 = float(a @ a)
    return (np.cross(ap, b) + np.cross(a, bp)) / n2 - 2.0 * float(a @ ap) / n2**2 * np.cross(a, b)


def _perp_point_two_derivatives(s, sp, spp):
    """perp_point and its first two derivatives from the quotient rule."""
    a, b = s[:3], s[3:]
    ap, bp = sp[:3], sp[3:]
    app, bpp = spp[:3], spp[3:]
    u = np.cross(a, b)
    u1 = np.cross(ap, b) + np.cross(a, bp)
    u2 = np.cross(app, b) + 2.0 * np.cross(ap, bp) + np.cross(a, bpp)
    n2 = float(a @ a)
    n2p = 2.0 * float(a @ ap)
    n2pp = 2.0 * (float(ap @ ap) + float(a @ app))
    p0 = u / n2
    p1 = u1 / n2 - u * (n2p / n2**2)
    p2 = (u2 / n2 - 2.0 * u1 * (n2p / n2**2)
          - u * (n2pp / n2**2) + 2.0 * u * (n2p**2 / n2**3))
    return p0, p1, p2


def isa_frame(s: np.ndarray, sp: np.ndarray, tol1: float = 1e-12, tol2: float = 1e-12) -> np.ndarray:
    """Instantaneous screw axis frame (pose) of a screw and its derivative.

    Orientation from the direction part as in fs_frame; origin at the point
    of the axis about which the axis instantaneously rotates.  On a type-2
    singularity the perpendicular point is still valid: an arbitrary
    completion around the tangent is returned with the parallel offset zero.
    """
    s = np.asarray(s, dtype=float)
    sp = np.asarray(sp, dtype=float)
    a, ap = s[:3], sp[:3]
    na = np.linalg.norm(a)
    if na <= tol1:
        raise Singular1(f"||a|| = {na:g} <= {tol1:g}")
    pperp = perp_point(s)
    pperp_d = perp_point_derivative(s, sp)
    axap = np.cross(a, ap)
    T = np.eye(4)
    if np.linalg.norm(axap) <= tol2:
        T[:3, :3] = _complete_frame(a / na)
        T[:3, 3] = pperp
        return T
    R = fs_frame(a, ap, tol1, tol2)
    # sign such that the origin is the intrinsic rotation point of the axis:
    # shifting the reference origin then leaves the frame origin unchanged
    p_par = -(na**2) / np.linalg.norm(axap) * float(pperp_d @ R[:, 1])
    T[:3, :3] = R
    T[:3, 3] = pperp + p_par * R[:, 0]
    return T


def screw_invariants_analytic(
    samples: np.ndarray, xi: np.ndarray | None = None
) -> tuple[ScrewDescriptor, SingularityFlags]:
    """Screw invariants (a, b, omega_kappa, omega_tau, v_t, v_b) analytically.

    The rotational invariants come from the direction part exactly as in the
    vector case; v_b and v_t track the motion of the axis point.  Type-1
    samples fall back to a frame built from the moment part.
    """
    s = np.asarray(samples, dtype=float)
    n = len(s)
    if n < 5:
        raise ValueError("need at least 5 samples")
    if xi is None:
        xi = np.linspace(0.0, 1.0, n)
    dxi = float(xi[1] - xi[0])
    sp, spp = _derivatives(s, dxi)

    a, b = s[:, :3], s[:, 3:]
    na = np.linalg.norm(a, axis=1)
    axap = np.cross(a, sp[:, :3])
    naxap = np.linalg.norm(axap, axis=1)
    tol1 = REL_TOL * np.max(na)
    tol2 = REL_TOL * np.max(naxap) if np.max(naxap) > 0 else np.inf
    type1 = na <= tol1
    type2 = (naxap <= tol2) | type1
    if np.all(type1):
        raise AllSingular("screw direction vanishes at every sample")

    with np.errstate(divide="ignore", invalid="ignore"):
        wk = np.where(type1, 0.0, naxap / num_guard(na**2))
        wt_num = np.einsum("ij,ij->i", np.cross(axap, np.cross(a, spp[:, :3])), a)
        wt = np.where(type2, 0.0, wt_num / num_guard(naxap**2 * na))
        pperp = np.cross(a, b) / num_guard(na**2)[:, None]
        pperp_d = np.array([perp_point_derivative(s[k], sp[k]) for k in range(n)])

    frames = np.empty((n, 4, 4))
    obj = np.zeros((n, 2))
    prev = None
    for k in range(n):
        T = np.eye(4)
        if type1[k]:
            # frame orientation from the moment part; axis point undefined
            bn = np.linalg.norm(b[k])
            if bn > tol1:
                try:
                    T[:3, :3] = fs_frame(b[k], sp[k, 3:], 1e-12, 1e-12)
                except (Singular1, Singular2):
                    T[:3, :3] = _complete_frame(b[k] / bn)
                obj[k] = (0.0, float(b[k] @ T[:3, 0]))
            elif prev is not None:
                T[:3, :3] = prev[:3, :3]
            if prev is not None:
                T[:3, 3] = prev[:3, 3]
        else:
            T = isa_frame(s[k], sp[k], tol1, tol2)
            et = T[:3, 0]
            obj[k] = (float(a[k] @ et), float(b[k] @ et))
        frames[k] = T
        prev = T
    first_ok = np.nonzero(~type1)[0][0]
    for k in range(first_ok - 1, -1, -1):
        if type1[k]:
            frames[k] = frames[k + 1]

    # axis translation rates from the analytic perpendicular-point derivatives
    et_all = frames[:, :3, 0]
    en_all = frames[:, :3, 1]
    eb_all = frames[:, :3, 2]
    vb = np.einsum("ij,ij->i", pperp_d, eb_all)
    # parallel offset rate, fully analytic (finite differences of the offset
    # would reintroduce an origin-dependent truncation error)
    vt = np.zeros(n)
    for k in range(n):
        if type2[k]:
            continue
        _, p1, p2 = _perp_point_two_derivatives(s[k], sp[k], spp[k])
        a_k, ap_k, app_k = a[k], sp[k, :3], spp[k, :3]
        na2 = float(a_k @ a_k)
        cr = np.cross(a_k, ap_k)
        ncr = np.linalg.norm(cr)
        wk_k = ncr / na2
        wkp = (float(np.cross(a_k, app_k) @ cr) / ncr / na2
               - 2.0 * float(a_k @ ap_k) * ncr / na2**2)
        enp = -wk[k] * et_all[k] + wt[k] * eb_all[k]  # e_n' from the frame ODE
        g = float(p1 @ en_all[k])
        gp = float(p2 @ en_all[k]) + float(p1 @ enp)
        p_par_d = -(gp * wk_k - g * wkp) / wk_k**2
        vt[k] = float(p1 @ et_all[k]) + p_par_d
    vb = np.where(type1, 0.0, vb)
    vt = np.where(type2, 0.0, vt)

    fi = np.column_stack([wt, wk, vt, vb])[:-1]
    flags = SingularityFlags(type1=type1, type2=type2, tol1=tol1, tol2=tol2)
    desc = ScrewDescriptor(xi=np.asarray(xi, dtype=float), object_invariant=obj,
                           frame_invariant=fi, frames=frames, flags=flags)
    return desc, flags
