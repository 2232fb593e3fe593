"""Low-level jitted kernels shared by the geometry API and the simulators.

All geometry uses the normal-angle parametrization of a strictly convex
planar body: the outward normal at boundary parameter ``phi`` is
``u(phi) = (cos phi, sin phi)``, the boundary point is
``r(phi) = h(phi) u + h'(phi) u_perp`` and the arc element is
``(h + h'') dphi``.  Enlarging a body by ``delta`` adds ``delta`` to its
support function, so normals and the lever arm ``h'`` are shared between
a body and its enlargement.

The event-driven N-body loop lives here as well so that replica ensembles
run at compiled speed on plain float64 arrays.
"""

import math

import numpy as np
from numba import njit

# body kind codes
K_DISK = 0
K_ELLIPSE = 1
K_FOURIER = 2

# pathology flag bits
F_SMALL_DEFLECTION = 1
F_LARGE_SPEED = 2
F_SLOW_PRE = 4
F_SLOW_POST = 8

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------
# support function evaluation
# ----------------------------------------------------------------------

@njit(cache=True)
def support_eval(kind, par, sx, sy, en, phi):
    """Return (h, h', h'') at angle phi, including the centering shift and
    the enlargement offset."""
    c = math.cos(phi)
    s = math.sin(phi)
    if kind == K_DISK:
        h = par[0]
        hp = 0.0
        hpp = 0.0
    elif kind == K_ELLIPSE:
        a2 = par[0] * par[0]
        b2 = par[1] * par[1]
        g = a2 * c * c + b2 * s * s
        gp = (b2 - a2) * 2.0 * s * c
        gpp = 2.0 * (b2 - a2) * (c * c - s * s)
        rg = math.sqrt(g)
        h = rg
        hp = gp / (2.0 * rg)
        hpp = (2.0 * g * gpp - gp * gp) / (4.0 * g * rg)
    else:
        h = par[0]
        hp = 0.0
        hpp = 0.0
        nh = (par.shape[0] - 1) // 2
        for k in range(1, nh + 1):
            ck = math.cos(k * phi)
            sk = math.sin(k * phi)
            ak = par[2 * k - 1]
            bk = par[2 * k]
            h += ak * ck + bk * sk
            hp += k * (-ak * sk + bk * ck)
            hpp += k * k * (-ak * ck - bk * sk)
    # translating the body by (-sx, -sy) tilts the support function by a
    # first harmonic; curvature radius h + h'' is unaffected
    h = h - sx * c - sy * s + en
    hp = hp + sx * s - sy * c
    hpp = hpp + sx * c + sy * s
    return h, hp, hpp


@njit(cache=True)
def boundary_eval(kind, par, sx, sy, en, phi):
    """Return (rx, ry, nx, ny, hp, rho) at angle phi."""
    h, hp, hpp = support_eval(kind, par, sx, sy, en, phi)
    c = math.cos(phi)
    s = math.sin(phi)
    return h * c - hp * s, h * s + hp * c, c, s, hp, h + hpp


# ----------------------------------------------------------------------
# signed distance (body frame, unscaled)
# ----------------------------------------------------------------------

@njit(cache=True)
def _tangency(kind, par, sx, sy, en, qx, qy, phi):
    """G(phi) = (q - r(phi)) . u_perp(phi); zero at the foot point."""
    h, hp, hpp = support_eval(kind, par, sx, sy, en, phi)
    c = math.cos(phi)
    s = math.sin(phi)
    ex = qx - (h * c - hp * s)
    ey = qy - (h * s + hp * c)
    g = ex * (-s) + ey * c
    gp = -(h + hpp) - (ex * c + ey * s)
    return g, gp


@njit(cache=True)
def sd_query(kind, par, sx, sy, en, grx, gry, qx, qy):
    """Signed distance from point q (body frame) to the body boundary.

    Positive outside, negative inside; both branches equal the Euclidean
    distance to the boundary for a convex body.  The closest boundary
    angle is located by a coarse scan over the precomputed grid followed
    by safeguarded Newton on the stationarity condition.  Returns
    (d, phi_star).
    """
    m = grx.shape[0]
    best = 1e300
    kbest = 0
    for k in range(m):
        dx = qx - grx[k]
        dy = qy - gry[k]
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
            kbest = k
    dphi = TWO_PI / m
    a = kbest * dphi - dphi
    b = kbest * dphi + dphi
    ga, _ = _tangency(kind, par, sx, sy, en, qx, qy, a)
    gb, _ = _tangency(kind, par, sx, sy, en, qx, qy, b)
    nw = 0
    while ga * gb > 0.0 and nw < 4:
        a -= dphi
        b += dphi
        ga, _ = _tangency(kind, par, sx, sy, en, qx, qy, a)
        gb, _ = _tangency(kind, par, sx, sy, en, qx, qy, b)
        nw += 1

    phi = 0.5 * (a + b)
    for _ in range(80):
        g, gp = _tangency(kind, par, sx, sy, en, qx, qy, phi)
        if ga * g <= 0.0:
            b = phi
        else:
            a = phi
            ga = g
        step = 0.0
        if gp != 0.0:
            step = -g / gp
        nphi = phi + step
        if gp == 0.0 or nphi <= a or nphi >= b:
            nphi = 0.5 * (a + b)
        if abs(nphi - phi) < 1e-15:
            phi = nphi
            break
        phi = nphi

    h, hp, hpp = support_eval(kind, par, sx, sy, en, phi)
    c = math.cos(phi)
    s = math.sin(phi)
    ex = qx - (h * c - hp * s)
    ey = qy - (h * s + hp * c)
    # at the foot point q - r is parallel to the outward normal
    d = ex * c + ey * s
    return d, phi % TWO_PI


# ----------------------------------------------------------------------
# conservative advancement (atom vs translating, spinning body)
# ----------------------------------------------------------------------

CA_NONE = 0
CA_CONTACT = 1
CA_STUCK = 2


@njit(cache=True)
def _gap_at(kind, par, sx, sy, en, grx, gry, scale,
            pax, pay, vhx, vhy, bx, by, bvx, bvy, th0, thrate, torus, s):
    rx = pax + s * vhx - (bx + s * bvx)
    ry = pay + s * vhy - (by + s * bvy)
    if torus == 1:
        rx -= math.floor(rx + 0.5)
        ry -= math.floor(ry + 0.5)
    th = th0 + thrate * s
    ct = math.cos(th)
    st = math.sin(th)
    qx = (ct * rx + st * ry) / scale
    qy = (-st * rx + ct * ry) / scale
    db, phi = sd_query(kind, par, sx, sy, en, grx, gry, qx, qy)
    return db * scale, phi


@njit(cache=True)
def ca_contact(kind, par, sx, sy, en, grx, gry, scale,
               pax, pay, vhx, vhy, bx, by, bvx, bvy, th0, thrate,
               lam, window, torus, ctol, dfloor):
    """First contact time of a point atom with the moving enlarged body.

    The gap shrinks at rate at most ``lam`` so advancing by ``gap/lam``
    can never tunnel.  Returns (status, s, phi) with s the contact time
    offset and phi the contact angle in the body frame.
    """
    s = 0.0
    s_prev = 0.0
    escaped = False
    it = 0
    while it < 20000:
        it += 1
        d, phi = _gap_at(kind, par, sx, sy, en, grx, gry, scale,
                         pax, pay, vhx, vhy, bx, by, bvx, bvy,
                         th0, thrate, torus, s)
        if d > 10.0 * ctol:
            escaped = True
        if escaped and d < ctol:
            # polish: bisect between the last separated time and now
            lo = s_prev
            hi = s
            for _ in range(90):
                mid = 0.5 * (lo + hi)
                dm, phi = _gap_at(kind, par, sx, sy, en, grx, gry, scale,
                                  pax, pay, vhx, vhy, bx, by, bvx, bvy,
                                  th0, thrate, torus, mid)
                if dm > ctol:
                    lo = mid
                elif dm < 0.0:
                    hi = mid
                else:
                    return CA_CONTACT, mid, phi
                if hi - lo < 1e-18 * (1.0 + hi):
                    break
            d, phi = _gap_at(kind, par, sx, sy, en, grx, gry, scale,
                             pax, pay, vhx, vhy, bx, by, bvx, bvy,
                             th0, thrate, torus, hi)
            return CA_CONTACT, hi, phi
        step = d
        if step < dfloor:
            step = dfloor
        s_prev = s
        s += step / lam
        if s > window:
            return CA_NONE, 0.0, 0.0
    return CA_STUCK, 0.0, 0.0


# ----------------------------------------------------------------------
# collision laws
# ----------------------------------------------------------------------

@njit(cache=True)
def collide_ab(vx, vy, bV1, bV2, om, nx, ny, hp, alpha, inertia):
    """Exact atom / rigid-body scattering in rescaled variables.

    ``hp`` is the lever arm r.n_perp at the contact angle; the normal
    relative velocity is b = (v - alpha V).n + alpha Omega hp (incoming
    when negative).  Returns post-collision (v, V, Omega) plus b and the
    effective-mass factor A.  The map is an involution and conserves
    alpha v + V, the total energy and the contact angular momentum
    exactly.
    """
    b = (vx - alpha * bV1) * nx + (vy - alpha * bV2) * ny + alpha * om * hp
    A = alpha * alpha * (1.0 + hp * hp / inertia)
    g = 2.0 / (A + 1.0)
    vxp = vx - g * b * nx
    vyp = vy - g * b * ny
    V1p = bV1 + g * alpha * b * nx
    V2p = bV2 + g * alpha * b * ny
    omp = om - g * alpha * hp * b / inertia
    return vxp, vyp, V1p, V2p, omp, b, A


@njit(cache=True)
def pathology_bits(vx, vy, bV1, bV2, om, vxp, vyp, V1p, V2p, omp,
                   alpha, eta):
    """Bitmask of pathological-collision conditions for a scattering event."""
    bits = 0
    dV = math.hypot(V1p - bV1, V2p - bV2)
    if 0.0 < dV < alpha ** (2.0 + eta):
        bits |= F_SMALL_DEFLECTION
    loga = -math.log(alpha)
    spd = max(math.hypot(bV1, bV2), math.hypot(V1p, V2p))
    if max(spd, max(abs(om), abs(omp))) > loga:
        bits |= F_LARGE_SPEED
    thr = alpha ** (2.0 / 3.0 + eta)
    if math.hypot(vx - alpha * bV1, vy - alpha * bV2) < thr:
        bits |= F_SLOW_PRE
    if math.hypot(vxp - alpha * V1p, vyp - alpha * V2p) < thr:
        bits |= F_SLOW_POST
    return bits


# ----------------------------------------------------------------------
# isolated two-body recollision test
# ----------------------------------------------------------------------

@njit(cache=True)
def second_contact(kind, par, sx, sy, en, grx, gry, scale, rmax_en,
                   pax, pay, vhx, vhy, bx, by, bvx, bvy, th0, om,
                   thrate, horizon, ctol):
    """Forward two-body evolution from an outgoing contact configuration.

    Runs in the plane (no periodic images).  Returns 1 if the atom touches
    the body again within ``horizon``, 0 if not, -1 if the advancement
    loop stalls.
    """
    lam = math.hypot(vhx - bvx, vhy - bvy) + rmax_en * abs(om)
    if lam <= 0.0:
        return -1
    dfloor = 1e-9 * scale * rmax_en
    s = 0.0
    escaped = False
    it = 0
    while it < 200000:
        it += 1
        d, phi = _gap_at(kind, par, sx, sy, en, grx, gry, scale,
                         pax, pay, vhx, vhy, bx, by, bvx, bvy,
                         th0, thrate, 0, s)
        if escaped and d < ctol:
            return 1
        if d < -ctol:
            return 1
        if not escaped and d > 10.0 * ctol:
            escaped = True
        step = d
        if step < dfloor:
            step = dfloor
        s += step / lam
        if s > horizon:
            return 0
    return -1


# ----------------------------------------------------------------------
# event heap (array-backed binary heap with lexicographic tie-breaks)
# ----------------------------------------------------------------------

EV_AA = 0
EV_AB = 1
EV_ACROSS = 2
EV_BCROSS = 3
EV_SAMPLE = 4


@njit(cache=True)
def _hless(t1, k1, a1, b1, t2, k2, a2, b2):
    if t1 != t2:
        return t1 < t2
    if k1 != k2:
        return k1 < k2
    if a1 != a2:
        return a1 < a2
    return b1 < b2


@njit(cache=True)
def _hswap(ht, hk, ha, hb, hea, heb, i, j):
    ht[i], ht[j] = ht[j], ht[i]
    hk[i], hk[j] = hk[j], hk[i]
    ha[i], ha[j] = ha[j], ha[i]
    hb[i], hb[j] = hb[j], hb[i]
    hea[i], hea[j] = hea[j], hea[i]
    heb[i], heb[j] = heb[j], heb[i]


@njit(cache=True)
def _hsift_up(ht, hk, ha, hb, hea, heb, i):
    while i > 0:
        p = (i - 1) >> 1
        if _hless(ht[i], hk[i], ha[i], hb[i], ht[p], hk[p], ha[p], hb[p]):
            _hswap(ht, hk, ha, hb, hea, heb, i, p)
            i = p
        else:
            break


@njit(cache=True)
def _hsift_down(ht, hk, ha, hb, hea, heb, n, i):
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        r = l + 1
        m = l
        if r < n and _hless(ht[r], hk[r], ha[r], hb[r],
                            ht[l], hk[l], ha[l], hb[l]):
            m = r
        if _hless(ht[m], hk[m], ha[m], hb[m], ht[i], hk[i], ha[i], hb[i]):
            _hswap(ht, hk, ha, hb, hea, heb, i, m)
            i = m
        else:
            break


@njit(cache=True)
def _hvalid(k, a, b, ea, eb, ep, nbody):
    if k == EV_AA:
        return ep[a] == ea and ep[b] == eb
    if k == EV_AB:
        return ep[a] == ea and ep[nbody] == eb
    if k == EV_ACROSS:
        return ep[a] == ea
    if k == EV_BCROSS:
        return ep[nbody] == ea
    return True


@njit(cache=True)
def _hgc(ht, hk, ha, hb, hea, heb, n, ep, nbody):
    """Drop epoch-stale entries and re-heapify; returns the new size."""
    m = 0
    for i in range(n):
        if _hvalid(hk[i], ha[i], hb[i], hea[i], heb[i], ep, nbody):
            ht[m] = ht[i]
            hk[m] = hk[i]
            ha[m] = ha[i]
            hb[m] = hb[i]
            hea[m] = hea[i]
            heb[m] = heb[i]
            m += 1
    for i in range(m // 2 - 1, -1, -1):
        _hsift_down(ht, hk, ha, hb, hea, heb, m, i)
    return m


@njit(cache=True)
def _hpush(ht, hk, ha, hb, hea, heb, n, ep, nbody, t, k, a, b, ea, eb):
    cap = ht.shape[0]
    if n >= cap:
        n = _hgc(ht, hk, ha, hb, hea, heb, n, ep, nbody)
        if n >= cap:
            return -1
    ht[n] = t
    hk[n] = k
    ha[n] = a
    hb[n] = b
    hea[n] = ea
    heb[n] = eb
    _hsift_up(ht, hk, ha, hb, hea, heb, n)
    return n + 1


# ----------------------------------------------------------------------
# event-driven engine
# ----------------------------------------------------------------------

ST_DONE = 0
ST_KILLED = 1
ST_OVERLAP = 2
ST_HEAP_FULL = 3
ST_CA_STUCK = 4
ST_LOG_FULL = 5

NLOG_COLS = 15


@njit(cache=True)
def _advance_atom(i, t, ax, ay, atm, avx, avy, inv_alpha):
    dt = t - atm[i]
    x = ax[i] + dt * avx[i] * inv_alpha
    y = ay[i] + dt * avy[i] * inv_alpha
    ax[i] = x - math.floor(x)
    ay[i] = y - math.floor(y)
    atm[i] = t


@njit(cache=True)
def _kahan_add(bst, dth):
    y = dth - bst[5]
    tn = bst[4] + y
    bst[5] = (tn - bst[4]) - y
    bst[4] = tn


@njit(cache=True)
def _advance_body(bst, t, theta_factor):
    dt = t - bst[7]
    if dt == 0.0:
        return
    bst[0] = (bst[0] + dt * bst[2]) % 1.0
    bst[1] = (bst[1] + dt * bst[3]) % 1.0
    dth = theta_factor * bst[6] * dt
    if abs(dth) > 64.0:
        dth = math.fmod(dth, TWO_PI)
    _kahan_add(bst, dth)
    while bst[4] >= TWO_PI:
        _kahan_add(bst, -TWO_PI)
    while bst[4] < 0.0:
        _kahan_add(bst, TWO_PI)
    bst[7] = t


@njit(cache=True)
def _pair_time(te, i, j, ax, ay, atm, avx, avy, inv_alpha, eps_diam):
    """Earliest root of |dx + s dv| = eps on the nearest image, or -1."""
    xi = ax[i] + (te - atm[i]) * avx[i] * inv_alpha
    yi = ay[i] + (te - atm[i]) * avy[i] * inv_alpha
    xj = ax[j] + (te - atm[j]) * avx[j] * inv_alpha
    yj = ay[j] + (te - atm[j]) * avy[j] * inv_alpha
    dx = xi - xj
    dy = yi - yj
    dx -= math.floor(dx + 0.5)
    dy -= math.floor(dy + 0.5)
    dvx = (avx[i] - avx[j]) * inv_alpha
    dvy = (avy[i] - avy[j]) * inv_alpha
    bq = dx * dvx + dy * dvy
    if bq >= 0.0:
        return -1.0
    v2 = dvx * dvx + dvy * dvy
    if v2 <= 0.0:
        return -1.0
    r2 = dx * dx + dy * dy
    disc = bq * bq - v2 * (r2 - eps_diam * eps_diam)
    if disc <= 0.0:
        return -1.0
    s = (-bq - math.sqrt(disc)) / v2
    if s < 0.0:
        s = 0.0
    return s


@njit(cache=True)
def _cross_dt(x, y, vx, vy, icx, icy, m):
    """(dt, dir) of next cell-boundary crossing; dir in {0:+x,1:-x,2:+y,3:-y}."""
    inv = 1.0 / m
    best = 1e300
    dirc = -1
    if vx > 0.0:
        dt = ((icx + 1) * inv - x) / vx
        if dt < 0.0:
            dt = 0.0
        if dt < best:
            best = dt
            dirc = 0
    elif vx < 0.0:
        dt = (icx * inv - x) / vx
        if dt < 0.0:
            dt = 0.0
        if dt < best:
            best = dt
            dirc = 1
    if vy > 0.0:
        dt = ((icy + 1) * inv - y) / vy
        if dt < 0.0:
            dt = 0.0
        if dt < best:
            best = dt
            dirc = 2
    elif vy < 0.0:
        dt = (icy * inv - y) / vy
        if dt < 0.0:
            dt = 0.0
        if dt < best:
            best = dt
            dirc = 3
    return best, dirc


ONE_BELOW = np.nextafter(1.0, 0.0)


@njit(cache=True)
def _apply_cross(i, te, b, ax, ay, atm, avx, avy, acx, acy, m, inv_alpha):
    """Move atom i across a cell boundary, snapping the crossed coordinate
    exactly onto the boundary so position and cell index stay consistent."""
    dt = te - atm[i]
    if b <= 1:
        y = ay[i] + dt * avy[i] * inv_alpha
        ay[i] = y - math.floor(y)
        if b == 0:
            acx[i] += 1
            if acx[i] == m:
                acx[i] = 0
                ax[i] = 0.0
            else:
                ax[i] = acx[i] / m
        else:
            if acx[i] == 0:
                acx[i] = m - 1
                ax[i] = ONE_BELOW
            else:
                ax[i] = acx[i] / m
                acx[i] -= 1
    else:
        x = ax[i] + dt * avx[i] * inv_alpha
        ax[i] = x - math.floor(x)
        if b == 2:
            acy[i] += 1
            if acy[i] == m:
                acy[i] = 0
                ay[i] = 0.0
            else:
                ay[i] = acy[i] / m
        else:
            if acy[i] == 0:
                acy[i] = m - 1
                ay[i] = ONE_BELOW
            else:
                ay[i] = acy[i] / m
                acy[i] -= 1
    atm[i] = te


@njit(cache=True)
def _in_box(icx, icy, bx0, by0, bxs, bys, m):
    return (icx - bx0) % m <= bxs and (icy - by0) % m <= bys


@njit(cache=True)
def _box_ranges(bst, reff, m):
    x0 = int(math.floor((bst[0] - reff) * m))
    x1 = int(math.floor((bst[0] + reff) * m))
    y0 = int(math.floor((bst[1] - reff) * m))
    y1 = int(math.floor((bst[1] + reff) * m))
    return x0 % m, y0 % m, x1 - x0, y1 - y0


@njit(cache=True)
def _box_cross_dt(bst, reff, m):
    """Time until the body's inflated bounding box touches a new grid line."""
    best = 1e300
    for axis in range(2):
        v = bst[2 + axis]
        if v == 0.0:
            continue
        for side in range(2):
            e = bst[axis] + (reff if side == 1 else -reff)
            if v > 0.0:
                dt = ((math.floor(e * m) + 1.0) / m - e) / v
            else:
                g = math.floor(e * m) / m
                if g >= e:
                    g -= 1.0 / m
                dt = (g - e) / v
            if dt <= 0.0:
                dt = 1e-15
            if dt < best:
                best = dt
    return best


@njit(cache=True)
def simulate(kind, par, sx, sy, en, grx, gry, rmax_en, scale,
             inertia, alpha, theta_factor, eta,
             killed, max_events,
             ax, ay, atm, avx, avy, acx, acy,
             bst, ep,
             t_end, sample_dt,
             eps_diam, m,
             samples, clog, iout, fout):
    """Event-driven hard-sphere + rigid-body dynamics on the unit torus.

    Mutates the state arrays in place up to ``t_end`` (or the kill time,
    or after ``max_events`` collisions/crossings when ``max_events >= 0``)
    and fills the sample and collision-log buffers.  Returns a status
    code.

    iout: [n_aa, n_ab, n_across, n_bcross, n_samples, n_log, n_graze,
           kill_bits, unused, n_events]
    fout: [max |gap-eps| at pair contact, max |d| at body contact,
           kill time, max contact angular-momentum residual,
           max grazing |b|]
    """
    n = ax.shape[0]
    nbody = n
    inv_alpha = 1.0 / alpha
    ctol = 1e-12
    dfloor = 1e-9 * scale * rmax_en
    reff = scale * rmax_en + 1e-6
    graze_tol = 1e-13

    # cells -------------------------------------------------------------
    ncell = m * m
    head = np.full(ncell, -1, np.int64)
    nxt = np.full(max(n, 1), -1, np.int64)
    prv = np.full(max(n, 1), -1, np.int64)
    for i in range(n):
        c = acx[i] * m + acy[i]
        nxt[i] = head[c]
        if head[c] >= 0:
            prv[head[c]] = i
        prv[i] = -1
        head[c] = i

    # heap ----------------------------------------------------------------
    cap = 64 * max(n, 1) + 65536
    ht = np.empty(cap, np.float64)
    hk = np.empty(cap, np.int8)
    ha = np.empty(cap, np.int32)
    hb = np.empty(cap, np.int32)
    hea = np.empty(cap, np.int64)
    heb = np.empty(cap, np.int64)
    hn = 0

    te = bst[7]
    t0 = te
    bx0, by0, bxs, bys = _box_ranges(bst, reff, m)

    # initial overlap validation (atom pairs via cells)
    for i in range(n):
        for jj in range(9):
            c = (((acx[i] + jj // 3 - 1) % m) * m
                 + ((acy[i] + jj % 3 - 1) % m))
            j = head[c]
            while j >= 0:
                if j > i:
                    dx = ax[i] - ax[j]
                    dy = ay[i] - ay[j]
                    dx -= math.floor(dx + 0.5)
                    dy -= math.floor(dy + 0.5)
                    if dx * dx + dy * dy < eps_diam * eps_diam * (1.0 - 1e-9):
                        return ST_OVERLAP
                j = nxt[j]

    # initial predictions
    for i in range(n):
        for jj in range(9):
            c = (((acx[i] + jj // 3 - 1) % m) * m
                 + ((acy[i] + jj % 3 - 1) % m))
            j = head[c]
            while j >= 0:
                if j > i:
                    s = _pair_time(te, i, j, ax, ay, atm, avx, avy,
                                   inv_alpha, eps_diam)
                    if s >= 0.0:
                        hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                                    te + s, EV_AA, i, j, ep[i], ep[j])
                        if hn < 0:
                            return ST_HEAP_FULL
                j = nxt[j]
        dt, dirc = _cross_dt(ax[i], ay[i], avx[i] * inv_alpha,
                             avy[i] * inv_alpha, acx[i], acy[i], m)
        if dirc >= 0:
            hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                        atm[i] + dt, EV_ACROSS, i, dirc, ep[i], 0)
            if hn < 0:
                return ST_HEAP_FULL
        if _in_box(acx[i], acy[i], bx0, by0, bxs, bys, m):
            lam = math.hypot(avx[i] * inv_alpha - bst[2],
                             avy[i] * inv_alpha - bst[3]) \
                + rmax_en * abs(bst[6])
            if lam > 0.0:
                win = dt * 1.000001 + 1e-14
                st, s, phi = ca_contact(
                    kind, par, sx, sy, en, grx, gry, scale,
                    ax[i], ay[i], avx[i] * inv_alpha, avy[i] * inv_alpha,
                    bst[0], bst[1], bst[2], bst[3],
                    bst[4], theta_factor * bst[6],
                    lam, win, 1, ctol, dfloor)
                if st == CA_STUCK:
                    return ST_CA_STUCK
                if st == CA_CONTACT:
                    hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                                te + s, EV_AB, i, 0, ep[i], ep[nbody])
                    if hn < 0:
                        return ST_HEAP_FULL

    hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                te + _box_cross_dt(bst, reff, m), EV_BCROSS, nbody, 0,
                ep[nbody], 0)
    if hn < 0:
        return ST_HEAP_FULL
    ks0 = int(math.ceil((te - t0) / sample_dt - 1e-12))
    hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                t0 + ks0 * sample_dt, EV_SAMPLE, ks0, 0, 0, 0)
    if hn < 0:
        return ST_HEAP_FULL

    nev = 0
    while hn > 0:
        t = ht[0]
        k = hk[0]
        a = ha[0]
        b = hb[0]
        ea = hea[0]
        eb = heb[0]
        hn -= 1
        if hn > 0:
            _hswap(ht, hk, ha, hb, hea, heb, 0, hn)
            _hsift_down(ht, hk, ha, hb, hea, heb, hn, 0)
        if t > t_end:
            break
        if not _hvalid(k, a, b, ea, eb, ep, nbody):
            continue
        te = t

        if k == EV_SAMPLE:
            _advance_body(bst, te, theta_factor)
            row = iout[4]
            if row < samples.shape[0]:
                samples[row, 0] = te
                samples[row, 1] = bst[0]
                samples[row, 2] = bst[1]
                samples[row, 3] = bst[2]
                samples[row, 4] = bst[3]
                samples[row, 5] = bst[4]
                samples[row, 6] = bst[6]
                iout[4] = row + 1
            tn = t0 + (a + 1) * sample_dt
            if tn <= t_end * (1.0 + 1e-12) + 1e-15:
                hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                            tn, EV_SAMPLE, a + 1, 0, 0, 0)
                if hn < 0:
                    return ST_HEAP_FULL
            continue

        if k == EV_ACROSS:
            iout[2] += 1
            i = a
            _apply_cross(i, te, b, ax, ay, atm, avx, avy, acx, acy, m,
                         inv_alpha)
            # old cell from the move direction
            if b == 0:
                oc = ((acx[i] - 1) % m) * m + acy[i]
            elif b == 1:
                oc = ((acx[i] + 1) % m) * m + acy[i]
            elif b == 2:
                oc = acx[i] * m + ((acy[i] - 1) % m)
            else:
                oc = acx[i] * m + ((acy[i] + 1) % m)
            if prv[i] >= 0:
                nxt[prv[i]] = nxt[i]
            else:
                head[oc] = nxt[i]
            if nxt[i] >= 0:
                prv[nxt[i]] = prv[i]
            nc = acx[i] * m + acy[i]
            nxt[i] = head[nc]
            if head[nc] >= 0:
                prv[head[nc]] = i
            prv[i] = -1
            head[nc] = i

            dt2, dirc = _cross_dt(ax[i], ay[i], avx[i] * inv_alpha,
                                  avy[i] * inv_alpha, acx[i], acy[i], m)
            if dirc >= 0:
                hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                            te + dt2, EV_ACROSS, i, dirc, ep[i], 0)
                if hn < 0:
                    return ST_HEAP_FULL
            # pairs in the newly adjacent row/column of cells
            for jj in range(3):
                if b == 0:
                    cx = (acx[i] + 1) % m
                    cy = (acy[i] + jj - 1) % m
                elif b == 1:
                    cx = (acx[i] - 1) % m
                    cy = (acy[i] + jj - 1) % m
                elif b == 2:
                    cx = (acx[i] + jj - 1) % m
                    cy = (acy[i] + 1) % m
                else:
                    cx = (acx[i] + jj - 1) % m
                    cy = (acy[i] - 1) % m
                c = cx * m + cy
                j = head[c]
                while j >= 0:
                    if j != i:
                        s = _pair_time(te, i, j, ax, ay, atm, avx, avy,
                                       inv_alpha, eps_diam)
                        if s >= 0.0:
                            lo = i if i < j else j
                            hi2 = j if i < j else i
                            hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep,
                                        nbody, te + s, EV_AA, lo, hi2,
                                        ep[lo], ep[hi2])
                            if hn < 0:
                                return ST_HEAP_FULL
                    j = nxt[j]
            if _in_box(acx[i], acy[i], bx0, by0, bxs, bys, m):
                _advance_body(bst, te, theta_factor)
                lam = math.hypot(avx[i] * inv_alpha - bst[2],
                                 avy[i] * inv_alpha - bst[3]) \
                    + rmax_en * abs(bst[6])
                if lam > 0.0:
                    win = dt2 * 1.000001 + 1e-14
                    st, s, phi = ca_contact(
                        kind, par, sx, sy, en, grx, gry, scale,
                        ax[i], ay[i], avx[i] * inv_alpha,
                        avy[i] * inv_alpha,
                        bst[0], bst[1], bst[2], bst[3],
                        bst[4], theta_factor * bst[6],
                        lam, win, 1, ctol, dfloor)
                    if st == CA_STUCK:
                        return ST_CA_STUCK
                    if st == CA_CONTACT:
                        hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                                    te + s, EV_AB, i, 0, ep[i], ep[nbody])
                        if hn < 0:
                            return ST_HEAP_FULL
            nev += 1
            if 0 <= max_events <= nev:
                iout[9] = nev
                return ST_DONE
            continue

        if k == EV_BCROSS:
            iout[3] += 1
            _advance_body(bst, te, theta_factor)
            bx0, by0, bxs, bys = _box_ranges(bst, reff, m)
            hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                        te + _box_cross_dt(bst, reff, m), EV_BCROSS,
                        nbody, 0, ep[nbody], 0)
            if hn < 0:
                return ST_HEAP_FULL
            for ix in range(bxs + 1):
                for iy in range(bys + 1):
                    c = ((bx0 + ix) % m) * m + ((by0 + iy) % m)
                    j = head[c]
                    while j >= 0:
                        hn = _predict_ab(kind, par, sx, sy, en, grx, gry,
                                         rmax_en, scale, theta_factor,
                                         inv_alpha, te, j, ax, ay, atm,
                                         avx, avy, acx, acy, bst, ep,
                                         nbody, m, ctol, dfloor,
                                         ht, hk, ha, hb, hea, heb, hn)
                        if hn < -1:
                            return ST_CA_STUCK
                        if hn < 0:
                            return ST_HEAP_FULL
                        j = nxt[j]
            nev += 1
            if 0 <= max_events <= nev:
                iout[9] = nev
                return ST_DONE
            continue

        if k == EV_AA:
            i = a
            j = b
            _advance_atom(i, te, ax, ay, atm, avx, avy, inv_alpha)
            _advance_atom(j, te, ax, ay, atm, avx, avy, inv_alpha)
            dx = ax[i] - ax[j]
            dy = ay[i] - ay[j]
            dx -= math.floor(dx + 0.5)
            dy -= math.floor(dy + 0.5)
            dist = math.sqrt(dx * dx + dy * dy)
            resid = abs(dist - eps_diam)
            if resid > fout[0]:
                fout[0] = resid
            if dist <= 0.0:
                return ST_OVERLAP
            nux = -dx / dist
            nuy = -dy / dist
            dot = (avx[i] - avx[j]) * nux + (avy[i] - avy[j]) * nuy
            avx[i] -= dot * nux
            avy[i] -= dot * nuy
            avx[j] += dot * nux
            avy[j] += dot * nuy
            ep[i] += 1
            ep[j] += 1
            iout[0] += 1
            for who in range(2):
                w = i if who == 0 else j
                hn = _predict_atom(kind, par, sx, sy, en, grx, gry,
                                   rmax_en, scale, theta_factor, inv_alpha,
                                   eps_diam, te, w, ax, ay, atm, avx, avy,
                                   acx, acy, bst, ep, nbody, m, head, nxt,
                                   bx0, by0, bxs, bys, ctol, dfloor,
                                   ht, hk, ha, hb, hea, heb, hn)
                if hn < -1:
                    return ST_CA_STUCK
                if hn < 0:
                    return ST_HEAP_FULL
            nev += 1
            if 0 <= max_events <= nev:
                iout[9] = nev
                return ST_DONE
            continue

        # ----- atom-body collision ------------------------------------
        i = a
        _advance_atom(i, te, ax, ay, atm, avx, avy, inv_alpha)
        _advance_body(bst, te, theta_factor)
        rx = ax[i] - bst[0]
        ry = ay[i] - bst[1]
        rx -= math.floor(rx + 0.5)
        ry -= math.floor(ry + 0.5)
        cth = math.cos(bst[4])
        sth = math.sin(bst[4])
        qx = (cth * rx + sth * ry) / scale
        qy = (-sth * rx + cth * ry) / scale
        db, phi = sd_query(kind, par, sx, sy, en, grx, gry, qx, qy)
        if abs(db * scale) > fout[1]:
            fout[1] = abs(db * scale)
        h, hp, hpp = support_eval(kind, par, sx, sy, en, phi)
        nx = math.cos(bst[4] + phi)
        ny = math.sin(bst[4] + phi)
        vxp, vyp, V1p, V2p, omp, bal, A = collide_ab(
            avx[i], avy[i], bst[2], bst[3], bst[6], nx, ny, hp,
            alpha, inertia)
        if abs(bal) <= graze_tol:
            # tangential contact: measure-zero no-op, logged by count
            iout[6] += 1
            if abs(bal) > fout[4]:
                fout[4] = abs(bal)
            ep[i] += 1
            ep[nbody] += 1
        else:
            bits = pathology_bits(avx[i], avy[i], bst[2], bst[3], bst[6],
                                  vxp, vyp, V1p, V2p, omp, alpha, eta)
            row = iout[5]
            if row >= clog.shape[0]:
                return ST_LOG_FULL
            # contact angular momentum I*Om - V . r_perp
            rpx = h * (-ny) - hp * nx
            rpy = h * nx - hp * ny
            ii_pre = inertia * bst[6] - (bst[2] * rpx + bst[3] * rpy)
            ii_post = inertia * omp - (V1p * rpx + V2p * rpy)
            dii = abs(ii_post - ii_pre)
            if dii > fout[3]:
                fout[3] = dii
            clog[row, 0] = te
            clog[row, 1] = i
            clog[row, 2] = phi
            clog[row, 3] = bal
            clog[row, 4] = bst[2]
            clog[row, 5] = bst[3]
            clog[row, 6] = bst[6]
            clog[row, 7] = V1p
            clog[row, 8] = V2p
            clog[row, 9] = omp
            clog[row, 10] = bits
            clog[row, 11] = alpha * vxp + V1p - (alpha * avx[i] + bst[2])
            clog[row, 12] = alpha * vyp + V2p - (alpha * avy[i] + bst[3])
            epre = 0.5 * (avx[i] ** 2 + avy[i] ** 2 + bst[2] ** 2
                          + bst[3] ** 2 + inertia * bst[6] ** 2)
            epost = 0.5 * (vxp ** 2 + vyp ** 2 + V1p ** 2 + V2p ** 2
                           + inertia * omp ** 2)
            clog[row, 13] = epost - epre
            clog[row, 14] = dii
            iout[5] = row + 1
            iout[1] += 1
            if killed == 1 and bits != 0:
                iout[7] = bits
                fout[2] = te
                for w in range(n):
                    _advance_atom(w, te, ax, ay, atm, avx, avy, inv_alpha)
                iout[9] = nev
                return ST_KILLED
            avx[i] = vxp
            avy[i] = vyp
            bst[2] = V1p
            bst[3] = V2p
            bst[6] = omp
            ep[i] += 1
            ep[nbody] += 1

        hn = _predict_atom(kind, par, sx, sy, en, grx, gry, rmax_en,
                           scale, theta_factor, inv_alpha, eps_diam, te,
                           i, ax, ay, atm, avx, avy, acx, acy, bst, ep,
                           nbody, m, head, nxt, bx0, by0, bxs, bys,
                           ctol, dfloor, ht, hk, ha, hb, hea, heb, hn)
        if hn < -1:
            return ST_CA_STUCK
        if hn < 0:
            return ST_HEAP_FULL
        hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                    te + _box_cross_dt(bst, reff, m), EV_BCROSS, nbody, 0,
                    ep[nbody], 0)
        if hn < 0:
            return ST_HEAP_FULL
        for ix in range(bxs + 1):
            for iy in range(bys + 1):
                c = ((bx0 + ix) % m) * m + ((by0 + iy) % m)
                j = head[c]
                while j >= 0:
                    hn = _predict_ab(kind, par, sx, sy, en, grx, gry,
                                     rmax_en, scale, theta_factor,
                                     inv_alpha, te, j, ax, ay, atm,
                                     avx, avy, acx, acy, bst, ep,
                                     nbody, m, ctol, dfloor,
                                     ht, hk, ha, hb, hea, heb, hn)
                    if hn < -1:
                        return ST_CA_STUCK
                    if hn < 0:
                        return ST_HEAP_FULL
                    j = nxt[j]
        nev += 1
        if 0 <= max_events <= nev:
            iout[9] = nev
            return ST_DONE

    for i in range(n):
        _advance_atom(i, t_end, ax, ay, atm, avx, avy, inv_alpha)
    _advance_body(bst, t_end, theta_factor)
    iout[9] = nev
    return ST_DONE


@njit(cache=True)
def _predict_ab(kind, par, sx, sy, en, grx, gry, rmax_en, scale,
                theta_factor, inv_alpha, te, j, ax, ay, atm, avx, avy,
                acx, acy, bst, ep, nbody, m, ctol, dfloor,
                ht, hk, ha, hb, hea, heb, hn):
    """Predict an atom-body contact for atom j; returns the new heap size,
    -1 on heap overflow, -2 if the advancement stalled."""
    lam = math.hypot(avx[j] * inv_alpha - bst[2],
                     avy[j] * inv_alpha - bst[3]) + rmax_en * abs(bst[6])
    if lam <= 0.0:
        return hn
    xj = ax[j] + (te - atm[j]) * avx[j] * inv_alpha
    yj = ay[j] + (te - atm[j]) * avy[j] * inv_alpha
    xj -= math.floor(xj)
    yj -= math.floor(yj)
    dtj, dj = _cross_dt(xj, yj, avx[j] * inv_alpha, avy[j] * inv_alpha,
                        acx[j], acy[j], m)
    win = dtj * 1.000001 + 1e-14
    st, s, phi = ca_contact(kind, par, sx, sy, en, grx, gry, scale,
                            xj, yj, avx[j] * inv_alpha, avy[j] * inv_alpha,
                            bst[0], bst[1], bst[2], bst[3],
                            bst[4], theta_factor * bst[6],
                            lam, win, 1, ctol, dfloor)
    if st == CA_STUCK:
        return -2
    if st == CA_CONTACT:
        return _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                      te + s, EV_AB, j, 0, ep[j], ep[nbody])
    return hn


@njit(cache=True)
def _predict_atom(kind, par, sx, sy, en, grx, gry, rmax_en, scale,
                  theta_factor, inv_alpha, eps_diam, te, w, ax, ay, atm,
                  avx, avy, acx, acy, bst, ep, nbody, m, head, nxt,
                  bx0, by0, bxs, bys, ctol, dfloor,
                  ht, hk, ha, hb, hea, heb, hn):
    """Fresh predictions for atom w after its velocity changed."""
    for jj in range(9):
        c = (((acx[w] + jj // 3 - 1) % m) * m + ((acy[w] + jj % 3 - 1) % m))
        q = head[c]
        while q >= 0:
            if q != w:
                s = _pair_time(te, w, q, ax, ay, atm, avx, avy,
                               inv_alpha, eps_diam)
                if s >= 0.0:
                    lo = w if w < q else q
                    hi = q if w < q else w
                    hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                                te + s, EV_AA, lo, hi, ep[lo], ep[hi])
                    if hn < 0:
                        return -1
            q = nxt[q]
    dtw, dirc = _cross_dt(ax[w], ay[w], avx[w] * inv_alpha,
                          avy[w] * inv_alpha, acx[w], acy[w], m)
    if dirc >= 0:
        hn = _hpush(ht, hk, ha, hb, hea, heb, hn, ep, nbody,
                    te + dtw, EV_ACROSS, w, dirc, ep[w], 0)
        if hn < 0:
            return -1
    if _in_box(acx[w], acy[w], bx0, by0, bxs, bys, m):
        _advance_body(bst, te, theta_factor)
        hn = _predict_ab(kind, par, sx, sy, en, grx, gry, rmax_en, scale,
                         theta_factor, inv_alpha, te, w, ax, ay, atm,
                         avx, avy, acx, acy, bst, ep, nbody, m,
                         ctol, dfloor, ht, hk, ha, hb, hea, heb, hn)
    return hn
