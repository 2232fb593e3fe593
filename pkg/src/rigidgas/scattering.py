"""Exact collision transformations, conservation laws and pathology tests.

All public operations work in rescaled variables: atom velocity ``v``
(atoms move at ``v / alpha``), body angular velocity ``Omega`` and moment
of inertia ``I`` of order one.  Physical (hatted) variables exist only in
the impulse-form cross-check helper.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .body import SupportBody, make_support_body, shape_constants
from .errors import DegenerateVelocity, InvalidSpec, NoConvergence


@dataclass(frozen=True)
class SimParams:
    """Scales and shape constants shared by every simulator level.

    The gas is dilute: N atoms of diameter eps = 1/N, one rigid body of
    linear size eps/alpha with unit mass; atom mass alpha^2.
    """

    N: int
    alpha: float
    beta: float
    eta: float
    body: SupportBody
    consts: "object"
    eps: float
    body_enl: SupportBody = field(repr=False, default=None)

    @property
    def scale(self):
        """World-frame linear scale of the body, eps / alpha."""
        return self.eps / self.alpha

    @property
    def theta_factor(self):
        """Angular rate multiplier: d theta / dt = (alpha/eps) Omega."""
        return self.alpha / self.eps

    @property
    def inertia(self):
        return self.consts.inertia


def make_params(N, alpha, beta, body, eta=0.1, eps=None,
                quadrature_order=512, inertia_override=None):
    """Validated simulation parameters.

    ``body`` may be a SupportBody or a shape-spec mapping.  ``eps``
    defaults to 1/N (2D dilute-gas scaling); it must satisfy
    0 < eps < alpha < 1.
    """
    if isinstance(body, dict):
        body = make_support_body(body, quadrature_order=quadrature_order)
    if eps is None:
        if N <= 0:
            raise InvalidSpec("eps must be given explicitly when N = 0")
        eps = 1.0 / N
    if N < 0:
        raise InvalidSpec("N must be nonnegative")
    if not 0.0 < eps < alpha < 1.0:
        raise InvalidSpec(
            f"scales must satisfy 0 < eps < alpha < 1, got eps={eps}, "
            f"alpha={alpha}")
    if not 0.0 < eta < 1.0 / 6.0:
        raise InvalidSpec(f"eta must lie in (0, 1/6), got {eta}")
    if beta <= 0.0:
        raise InvalidSpec("beta must be positive")
    consts = shape_constants(body, alpha, inertia_override=inertia_override)
    return SimParams(N=int(N), alpha=float(alpha), beta=float(beta),
                     eta=float(eta), body=body, consts=consts,
                     eps=float(eps), body_enl=body.enlarged(alpha / 2.0))


@dataclass
class BodyState:
    """Rigid body pose and motion: torus position, velocity, orientation,
    rescaled angular velocity."""

    X: np.ndarray
    V: np.ndarray
    theta: float
    omega: float

    def copy(self):
        return BodyState(self.X.copy(), self.V.copy(),
                         float(self.theta), float(self.omega))


@dataclass
class AtomState:
    """Atom position on the torus and rescaled velocity."""

    x: np.ndarray
    v: np.ndarray

    def copy(self):
        return AtomState(self.x.copy(), self.v.copy())


@dataclass(frozen=True)
class ContactData:
    """Geometry and kinematics of one body-atom contact."""

    phi: float
    normal: np.ndarray       # world-frame outward normal
    contact_r: np.ndarray    # world-frame contact vector on the body
    lever: float             # r . n_perp = h'(phi)
    mass_factor: float       # A = alpha^2 (1 + lever^2 / I)
    normal_rel_vel: float    # b = (v - alpha V - alpha Omega r_perp) . n

    @property
    def incoming(self):
        return self.normal_rel_vel < 0.0


@dataclass(frozen=True)
class PathologyFlags:
    small_deflection: bool
    large_speed: bool
    slow_relative_pre: bool
    slow_relative_post: bool

    @property
    def any(self):
        return (self.small_deflection or self.large_speed
                or self.slow_relative_pre or self.slow_relative_post)

    @property
    def bits(self):
        return ((kernels.F_SMALL_DEFLECTION if self.small_deflection else 0)
                | (kernels.F_LARGE_SPEED if self.large_speed else 0)
                | (kernels.F_SLOW_PRE if self.slow_relative_pre else 0)
                | (kernels.F_SLOW_POST if self.slow_relative_post else 0))


def flags_from_bits(bits):
    return PathologyFlags(
        bool(bits & kernels.F_SMALL_DEFLECTION),
        bool(bits & kernels.F_LARGE_SPEED),
        bool(bits & kernels.F_SLOW_PRE),
        bool(bits & kernels.F_SLOW_POST))


def collide_atoms(v_i, v_j, nu):
    """Specular hard-sphere reflection; ``nu`` is the unit vector from
    atom i to atom j.  Exchanges the normal velocity components."""
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    nu = np.asarray(nu, dtype=float)
    dot = (v_i - v_j) @ nu
    return v_i - dot * nu, v_j + dot * nu


def _contact_geometry(p, theta, phi):
    """World-frame normal and contact vector (on the base body Sigma)."""
    h, hp, _ = kernels.support_eval(p.body.kind_code, p.body.params,
                                    p.body.shift[0], p.body.shift[1],
                                    p.body.enlarge, phi)
    nx = math.cos(theta + phi)
    ny = math.sin(theta + phi)
    # r_theta = h n + h' n_perp with n_perp = (-ny, nx)
    rx = h * nx - hp * ny
    ry = h * ny + hp * nx
    return np.array([nx, ny]), np.array([rx, ry]), hp


def collide_body_atom(Y, v, phi, p):
    """Exact body-atom scattering at contact angle ``phi``.

    Returns (Y', v', contact).  The map is an involution; a contact with
    zero normal relative velocity is its own image.  ``contact.incoming``
    is False when the pair was already separating (the map is still
    applied; callers that care should check the flag).
    """
    v = np.asarray(v, dtype=float)
    n, r, hp = _contact_geometry(p, Y.theta, phi)
    vxp, vyp, V1p, V2p, omp, b, A = kernels.collide_ab(
        v[0], v[1], Y.V[0], Y.V[1], Y.omega, n[0], n[1], hp,
        p.alpha, p.inertia)
    Yp = BodyState(Y.X.copy(), np.array([V1p, V2p]), Y.theta, omp)
    contact = ContactData(phi=float(phi) % (2.0 * math.pi), normal=n,
                          contact_r=r, lever=hp, mass_factor=A,
                          normal_rel_vel=b)
    return Yp, np.array([vxp, vyp]), contact


def collide_body_atom_physical(Y, v, phi, p):
    """Impulse-form scattering in physical (hatted) variables.

    Cross-check route: the normal impulse f follows from momentum and
    energy conservation alone; results are mapped back to rescaled
    variables and must agree with :func:`collide_body_atom` to rounding.
    """
    alpha, eps = p.alpha, p.eps
    m = alpha * alpha
    M = 1.0
    se = eps / alpha
    inertia_hat = se * se * p.inertia
    v_hat = np.asarray(v, dtype=float) / alpha
    omega_hat = Y.omega / se
    n, r, hp = _contact_geometry(p, Y.theta, phi)
    n_dot_rperp = -hp
    A = m / M + (m / inertia_hat) * se * se * n_dot_rperp ** 2
    vP = Y.V + se * omega_hat * np.array([-r[1], r[0]])
    f = (2.0 * m / (A + 1.0)) * float((vP - v_hat) @ n)
    V_new = Y.V - f * n / M
    v_hat_new = v_hat + f * n / m
    omega_hat_new = omega_hat - se * f * n_dot_rperp / inertia_hat
    Yp = BodyState(Y.X.copy(), V_new, Y.theta, se * omega_hat_new)
    return Yp, alpha * v_hat_new


def conserved_quantities(Y, v, p):
    """Total momentum P = alpha v + V and energy
    E = (|v|^2 + |V|^2 + I Omega^2) / 2 in rescaled variables."""
    v = np.asarray(v, dtype=float)
    P = p.alpha * v + Y.V
    E = 0.5 * (float(v @ v) + float(Y.V @ Y.V)
               + p.inertia * Y.omega ** 2)
    return P, E


def contact_angular_momentum(Y, phi, p):
    """Angular momentum about the contact point, I Omega - V . r_perp;
    conserved by the scattering at that contact."""
    _, r, _ = _contact_geometry(p, Y.theta, phi)
    rperp = np.array([-r[1], r[0]])
    return p.inertia * Y.omega - float(Y.V @ rperp)


def pathology_flags(pre, post, p):
    """Flags of the pathological-collision conditions for a scattering
    event given (Y, v) before and (Y', v') after."""
    Y, v = pre
    Yp, vp = post
    bits = kernels.pathology_bits(
        v[0], v[1], Y.V[0], Y.V[1], Y.omega,
        vp[0], vp[1], Yp.V[0], Yp.V[1], Yp.omega,
        p.alpha, p.eta)
    return flags_from_bits(bits)


def escape_time_bound(v_out, V_out, p):
    """Body-scale bound on the time for an outgoing atom to leave the
    body's reach: 2 r_max / |v/alpha - V|.  The world-scale bound is
    (eps/alpha) times this."""
    rel = np.asarray(v_out, dtype=float) / p.alpha - np.asarray(V_out,
                                                                dtype=float)
    speed = float(np.hypot(rel[0], rel[1]))
    if speed < 1e-14:
        raise DegenerateVelocity(
            "relative velocity too small for an escape bound")
    return 2.0 * p.consts.circumradius / speed


def recollides_forward(Y, v, phi, p, horizon_factor=4.0):
    """Does an OUTGOING contact configuration touch the body again?

    Simulates the isolated two-body system in the plane from the contact
    at angle ``phi`` and reports whether a second contact occurs within
    ``horizon_factor`` times the world-scale escape bound.
    """
    delta_max = escape_time_bound(v, Y.V, p)
    horizon = horizon_factor * p.scale * delta_max
    enl = p.body_enl
    rc, _, _, _ = enl.boundary_arrays(np.array([phi]))
    ct, st = math.cos(Y.theta), math.sin(Y.theta)
    rx = ct * rc[0, 0] - st * rc[0, 1]
    ry = st * rc[0, 0] + ct * rc[0, 1]
    pax = Y.X[0] + p.scale * rx
    pay = Y.X[1] + p.scale * ry
    res = kernels.second_contact(
        enl.kind_code, enl.params, enl.shift[0], enl.shift[1], enl.enlarge,
        enl.grid_rx, enl.grid_ry, p.scale, enl.circumradius,
        pax, pay, v[0] / p.alpha, v[1] / p.alpha,
        Y.X[0], Y.X[1], Y.V[0], Y.V[1], Y.theta, Y.omega,
        p.theta_factor * Y.omega, horizon, 1e-12)
    if res < 0:
        raise NoConvergence("two-body advancement stalled near contact")
    return bool(res)


def backward_recollides(Y, v, phi, p, horizon_factor=4.0):
    """Backward two-body recollision test for a PRE-collisional contact.

    Reversing time turns the incoming configuration into an outgoing one
    with negated velocities; the backward evolution recollides exactly
    when that forward evolution does.
    """
    Yr = BodyState(Y.X.copy(), -Y.V, Y.theta, -Y.omega)
    return recollides_forward(Yr, -np.asarray(v, dtype=float), phi, p,
                              horizon_factor=horizon_factor)
