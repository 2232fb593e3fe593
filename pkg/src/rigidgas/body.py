"""Strictly convex planar bodies encoded by their support function.

A body is described by ``h(phi)``, the distance from the origin to the
tangent line with outward normal ``u(phi) = (cos phi, sin phi)``.  The
boundary point with that normal is ``r = h u + h' u_perp``, the curvature
radius is ``h + h''``, and growing the body by ``delta`` in every normal
direction is exactly ``h -> h + delta``.  This makes the enlarged contact
surface, its normals and the lever arm ``h'`` available with no extra
geometry work, and strict convexity is the pointwise test ``h + h'' > 0``.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConvexityViolation, InvalidSpec

_GRID_POINTS = 128


@dataclass(frozen=True)
class SupportBody:
    """Immutable convex body; safe to share across workers."""

    kind: str
    kind_code: int
    params: np.ndarray
    shift: np.ndarray
    enlarge: float
    quadrature_order: int
    grid_rx: np.ndarray
    grid_ry: np.ndarray
    circumradius: float

    def support(self, phi):
        """Vectorized (h, h', h'') at angles ``phi`` (numpy path; the jitted
        scalar path in :mod:`rigidgas.kernels` is the cross-check)."""
        phi = np.asarray(phi, dtype=float)
        c = np.cos(phi)
        s = np.sin(phi)
        if self.kind_code == kernels.K_DISK:
            h = np.full_like(phi, self.params[0])
            hp = np.zeros_like(phi)
            hpp = np.zeros_like(phi)
        elif self.kind_code == kernels.K_ELLIPSE:
            a2 = self.params[0] ** 2
            b2 = self.params[1] ** 2
            g = a2 * c * c + b2 * s * s
            gp = (b2 - a2) * 2.0 * s * c
            gpp = 2.0 * (b2 - a2) * (c * c - s * s)
            rg = np.sqrt(g)
            h = rg
            hp = gp / (2.0 * rg)
            hpp = (2.0 * g * gpp - gp * gp) / (4.0 * g * rg)
        else:
            h = np.full_like(phi, self.params[0])
            hp = np.zeros_like(phi)
            hpp = np.zeros_like(phi)
            nh = (len(self.params) - 1) // 2
            for k in range(1, nh + 1):
                ck = np.cos(k * phi)
                sk = np.sin(k * phi)
                ak = self.params[2 * k - 1]
                bk = self.params[2 * k]
                h = h + ak * ck + bk * sk
                hp = hp + k * (-ak * sk + bk * ck)
                hpp = hpp + k * k * (-ak * ck - bk * sk)
        sx, sy = self.shift
        h = h - sx * c - sy * s + self.enlarge
        hp = hp + sx * s - sy * c
        hpp = hpp + sx * c + sy * s
        return h, hp, hpp

    def boundary_arrays(self, phi):
        """Vectorized (r, n, kappa, hp) along the boundary."""
        phi = np.asarray(phi, dtype=float)
        h, hp, hpp = self.support(phi)
        u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        uperp = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
        r = h[..., None] * u + hp[..., None] * uperp
        return r, u, 1.0 / (h + hpp), hp

    def enlarged(self, delta):
        """The body grown by ``delta`` in every normal direction."""
        if delta == 0.0:
            return self
        return _finalize(replace(self, enlarge=self.enlarge + delta))

    def kernel_args(self):
        """Argument tuple for the jitted geometry kernels."""
        return (self.kind_code, self.params, self.shift[0], self.shift[1],
                self.enlarge, self.grid_rx, self.grid_ry)

    @property
    def phis(self):
        """Quadrature angles (uniform, periodic-trapezoid nodes)."""
        n = self.quadrature_order
        return np.arange(n) * (2.0 * np.pi / n)


def _finalize(body):
    """Recompute the cached boundary grid and circumradius."""
    phis = np.arange(_GRID_POINTS) * (2.0 * np.pi / _GRID_POINTS)
    r, _, _, _ = body.boundary_arrays(phis)
    rmax = float(np.max(np.hypot(r[:, 0], r[:, 1])))
    return replace(body, grid_rx=np.ascontiguousarray(r[:, 0]),
                   grid_ry=np.ascontiguousarray(r[:, 1]),
                   circumradius=rmax)


def _check_convexity(body):
    n = max(body.quadrature_order, 512)
    phis = np.arange(n) * (2.0 * np.pi / n)
    h, hp, hpp = body.support(phis)
    rho_min = float(np.min(h + hpp))
    if rho_min <= 0.0:
        raise ConvexityViolation(
            f"support function fails strict convexity: min(h + h'') = "
            f"{rho_min:.6g} <= 0")
    if float(np.min(h)) <= 0.0:
        raise ConvexityViolation("support function must be positive")


def _centroid(body):
    """Area centroid from boundary quadrature (divergence theorem)."""
    phis = body.phis
    r, n, _, _ = body.boundary_arrays(phis)
    h, _, hpp = body.support(phis)
    rho = h + hpp
    w = 2.0 * np.pi / len(phis)
    area = 0.5 * np.sum(h * rho) * w
    cx = 0.5 * np.sum(r[:, 0] ** 2 * n[:, 0] * rho) * w / area
    cy = 0.5 * np.sum(r[:, 1] ** 2 * n[:, 1] * rho) * w / area
    return np.array([cx, cy]), area


def make_support_body(spec, quadrature_order=512):
    """Build a validated, centroid-centered body from a shape spec.

    ``spec`` is a mapping like ``{"kind": "disk", "radius": 1.0}``,
    ``{"kind": "ellipse", "a": 0.5, "b": 0.3}`` or
    ``{"kind": "fourier", "coeffs": [c0, a1, b1, a2, b2, ...]}``.
    """
    if quadrature_order < 16:
        raise InvalidSpec("quadrature_order must be at least 16")
    kind = spec.get("kind")
    if kind == "disk":
        radius = float(spec.get("radius", 0.0))
        if radius <= 0.0:
            raise InvalidSpec("disk radius must be positive")
        code, params = kernels.K_DISK, np.array([radius])
    elif kind == "ellipse":
        a = float(spec.get("a", 0.0))
        b = float(spec.get("b", 0.0))
        if a <= 0.0 or b <= 0.0:
            raise InvalidSpec("ellipse semi-axes must be positive")
        code, params = kernels.K_ELLIPSE, np.array([a, b])
    elif kind == "fourier":
        coeffs = np.asarray(spec.get("coeffs", ()), dtype=float)
        if coeffs.size == 0 or coeffs.size % 2 == 0:
            raise InvalidSpec(
                "fourier coeffs must be [c0, a1, b1, ...] with odd length")
        if coeffs[0] <= 0.0:
            raise InvalidSpec("fourier constant term must be positive")
        code, params = kernels.K_FOURIER, coeffs.copy()
    else:
        raise InvalidSpec(f"unknown body kind: {kind!r}")

    body = SupportBody(kind=kind, kind_code=code, params=params,
                       shift=np.zeros(2), enlarge=0.0,
                       quadrature_order=int(quadrature_order),
                       grid_rx=np.empty(0), grid_ry=np.empty(0),
                       circumradius=0.0)
    body = _finalize(body)
    _check_convexity(body)
    if code == kernels.K_FOURIER:
        # disks and ellipses are centered by construction; keep their
        # support derivatives exactly zero / analytic
        centroid, _ = _centroid(body)
        body = _finalize(replace(body, shift=centroid))
    return body


@dataclass(frozen=True)
class ShapeConstants:
    """All shape moments used by the dynamics, with enlarged variants.

    ``lever_moment`` is the boundary integral of the squared lever arm
    (r.n_perp)^2, ``normal_tensor`` the outer-product moment of the
    normals, ``lever_normal`` the lever-weighted normal moment.  The
    moment of inertia is the uniform-density value about the centroid
    for unit total mass.
    """

    alpha: float
    perimeter: float
    perimeter_enl: float
    min_curvature: float
    circumradius: float
    circumradius_enl: float
    area: float
    area_enl: float
    inertia: float
    lever_moment: float
    lever_moment_enl: float
    normal_tensor: np.ndarray
    normal_tensor_enl: np.ndarray
    lever_normal: np.ndarray
    lever_normal_enl: np.ndarray

    def as_dict(self):
        return {
            "alpha": self.alpha,
            "perimeter": self.perimeter,
            "perimeter_enl": self.perimeter_enl,
            "min_curvature": self.min_curvature,
            "circumradius": self.circumradius,
            "circumradius_enl": self.circumradius_enl,
            "area": self.area,
            "area_enl": self.area_enl,
            "inertia": self.inertia,
            "lever_moment": self.lever_moment,
            "lever_moment_enl": self.lever_moment_enl,
            "normal_tensor": self.normal_tensor.tolist(),
            "normal_tensor_enl": self.normal_tensor_enl.tolist(),
            "lever_normal": self.lever_normal.tolist(),
            "lever_normal_enl": self.lever_normal_enl.tolist(),
        }


def _moments(body, phis, w):
    h, hp, hpp = body.support(phis)
    rho = h + hpp
    u = np.stack([np.cos(phis), np.sin(phis)], axis=-1)
    perimeter = np.sum(rho) * w
    area = 0.5 * np.sum(h * rho) * w
    lever = np.sum(hp * hp * rho) * w
    ntens = (u[:, :, None] * u[:, None, :] * rho[:, None, None]).sum(0) * w
    lnorm = (hp[:, None] * u * rho[:, None]).sum(0) * w
    r2 = h * h + hp * hp
    rmax = float(np.sqrt(np.max(r2)))
    quarter_moment = 0.25 * np.sum(r2 * h * rho) * w
    kmin = float(np.min(1.0 / rho))
    return perimeter, area, lever, ntens, lnorm, rmax, quarter_moment, kmin


def shape_constants(body, alpha, inertia_override=None):
    """Quadrature of every shape moment for the body and its enlargement.

    The enlarged contact surface uses support function ``h + alpha/2``; it
    shares normals and lever arms with the body pointwise, so only the arc
    measure changes.
    """
    if alpha < 0.0:
        raise InvalidSpec("alpha must be nonnegative")
    phis = body.phis
    w = 2.0 * np.pi / len(phis)
    per, area, lever, ntens, lnorm, rmax, qmom, kmin = _moments(
        body, phis, w)
    enl = body.enlarged(alpha / 2.0)
    per_e, area_e, lever_e, ntens_e, lnorm_e, rmax_e, _, _ = _moments(
        enl, phis, w)
    inertia = qmom / area if inertia_override is None else inertia_override
    if inertia <= 0.0:
        raise InvalidSpec("moment of inertia must be positive")
    consts = ShapeConstants(
        alpha=float(alpha),
        perimeter=float(per), perimeter_enl=float(per_e),
        min_curvature=kmin,
        circumradius=rmax, circumradius_enl=rmax_e,
        area=float(area), area_enl=float(area_e),
        inertia=float(inertia),
        lever_moment=float(lever), lever_moment_enl=float(lever_e),
        normal_tensor=ntens, normal_tensor_enl=ntens_e,
        lever_normal=lnorm, lever_normal_enl=lnorm_e,
    )
    tr = consts.normal_tensor.trace()
    if abs(tr - consts.perimeter) > 1e-8 * consts.perimeter:
        raise ConvexityViolation("normal tensor trace inconsistent with "
                                 "perimeter; quadrature too coarse")
    return consts


def boundary(body, phi):
    """Boundary data (r, n, kappa, h') at angle phi (wrapped mod 2 pi)."""
    rx, ry, nx, ny, hp, rho = kernels.boundary_eval(
        body.kind_code, body.params, body.shift[0], body.shift[1],
        body.enlarge, float(phi) % (2.0 * np.pi))
    return (np.array([rx, ry]), np.array([nx, ny]), 1.0 / rho, hp)


def signed_distance(body, theta, scale, p):
    """Signed distance from point ``p`` to ``scale * R_theta * body``.

    Positive outside, negative inside; the second return value is the
    closest-point angle in the body frame.
    """
    if scale <= 0.0:
        raise InvalidSpec("scale must be positive")
    ct, st = np.cos(theta), np.sin(theta)
    qx = (ct * p[0] + st * p[1]) / scale
    qy = (-st * p[0] + ct * p[1]) / scale
    d, phi = kernels.sd_query(*body.kernel_args(), qx, qy)
    return d * scale, phi
