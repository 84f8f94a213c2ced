"""Numba kernels: BVH traversal, GGX shading, and the path-tracing loops.

Every pixel owns a counter-based RNG stream derived from (render seed, pixel
index), so images are byte-identical across runs and thread counts. Geometry
math is float64; texture and environment data stay float32.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

F8 = np.float64
U64 = np.uint64

_BARY_EPS = 1e-9
_RAY_EPS = 1e-5
_FIREFLY_CLAMP = 1.0e3


# ---------------------------------------------------------------------------
# RNG: splitmix64 seeding + xorshift64* streams

@njit(cache=True, inline="always")
def _splitmix64(x):
    x = U64(x) + U64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _pixel_state(seed, pixel_index):
    s = _splitmix64(U64(seed) ^ (U64(pixel_index) * U64(0xA24BAED4963EE407)))
    if s == U64(0):
        s = U64(0x9E3779B97F4A7C15)
    return s


@njit(cache=True, inline="always")
def _rng_next(state):
    s = state
    s ^= s >> U64(12)
    s ^= (s << U64(25)) & U64(0xFFFFFFFFFFFFFFFF)
    s ^= s >> U64(27)
    r = (s * U64(0x2545F4914F6CDD1D)) >> U64(11)
    return s, F8(r) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# intersection

@njit(cache=True, inline="always")
def _inv_dir(d):
    if abs(d) > 1e-12:
        return 1.0 / d
    return 1e30 if d >= 0.0 else -1e30


@njit(cache=True, inline="always")
def _slab(ox, oy, oz, ix, iy, iz, bmin, bmax, node, tmax):
    t0 = (bmin[node, 0] - ox) * ix
    t1 = (bmax[node, 0] - ox) * ix
    tn = min(t0, t1)
    tf = max(t0, t1)
    t0 = (bmin[node, 1] - oy) * iy
    t1 = (bmax[node, 1] - oy) * iy
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    t0 = (bmin[node, 2] - oz) * iz
    t1 = (bmax[node, 2] - oz) * iz
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    if tn > tf or tf < 0.0 or tn > tmax:
        return 1e30
    return tn


@njit(cache=True, inline="always")
def _tri_hit(ox, oy, oz, dx, dy, dz, p0, e1, e2, i, tmax):
    e1x, e1y, e1z = e1[i, 0], e1[i, 1], e1[i, 2]
    e2x, e2y, e2z = e2[i, 0], e2[i, 1], e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - p0[i, 0]
    ty = oy - p0[i, 1]
    tz = oz - p0[i, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= _RAY_EPS or t >= tmax:
        return -1.0, 0.0, 0.0
    return t, u, v


@njit(cache=True)
def bvh_closest(ox, oy, oz, dx, dy, dz, nmin, nmax, nleft, nright, tri_order,
                p0, e1, e2, stack, tmax):
    """Closest triangle hit; returns (tri, t, u, v) with tri == -1 on miss."""
    ix = _inv_dir(dx)
    iy = _inv_dir(dy)
    iz = _inv_dir(dz)
    best_i = -1
    best_t = tmax
    best_u = 0.0
    best_v = 0.0
    sp = 0
    stack[sp] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _slab(ox, oy, oz, ix, iy, iz, nmin, nmax, node, best_t) >= 1e30:
            continue
        left = nleft[node]
        if left < 0:
            start = -(left + 1)
            for k in range(nright[node]):
                tri = tri_order[start + k]
                t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, p0, e1, e2, tri, best_t)
                if t > 0.0:
                    best_i = tri
                    best_t = t
                    best_u = u
                    best_v = v
        else:
            right = nright[node]
            dl = _slab(ox, oy, oz, ix, iy, iz, nmin, nmax, left, best_t)
            dr = _slab(ox, oy, oz, ix, iy, iz, nmin, nmax, right, best_t)
            if dl <= dr:
                if dr < 1e30:
                    stack[sp] = right
                    sp += 1
                if dl < 1e30:
                    stack[sp] = left
                    sp += 1
            else:
                if dl < 1e30:
                    stack[sp] = left
                    sp += 1
                if dr < 1e30:
                    stack[sp] = right
                    sp += 1
    return best_i, best_t, best_u, best_v


@njit(cache=True)
def bvh_anyhit(ox, oy, oz, dx, dy, dz, nmin, nmax, nleft, nright, tri_order,
               p0, e1, e2, stack, tmax):
    """True if anything lies along the ray closer than tmax."""
    ix = _inv_dir(dx)
    iy = _inv_dir(dy)
    iz = _inv_dir(dz)
    sp = 0
    stack[sp] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _slab(ox, oy, oz, ix, iy, iz, nmin, nmax, node, tmax) >= 1e30:
            continue
        left = nleft[node]
        if left < 0:
            start = -(left + 1)
            for k in range(nright[node]):
                tri = tri_order[start + k]
                t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, p0, e1, e2, tri, tmax)
                if t > 0.0:
                    return True
        else:
            stack[sp] = left
            sp += 1
            stack[sp] = nright[node]
            sp += 1
    return False


# ---------------------------------------------------------------------------
# texture / environment lookups

@njit(cache=True, inline="always")
def _wrap01(x):
    x = x % 1.0
    if x < 0.0:
        x += 1.0
    return x


@njit(cache=True)
def tex_fetch(tex, mi, h, w, u, v, out):
    """Bilinear, wrap-around fetch of the 9 packed material channels."""
    x = _wrap01(u) * w - 0.5
    y = _wrap01(v) * h - 0.5
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    x0i = int(x0) % w
    y0i = int(y0) % h
    if x0i < 0:
        x0i += w
    if y0i < 0:
        y0i += h
    x1i = (x0i + 1) % w
    y1i = (y0i + 1) % h
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    for c in range(9):
        out[c] = (w00 * F8(tex[mi, y0i, x0i, c]) + w10 * F8(tex[mi, y0i, x1i, c])
                  + w01 * F8(tex[mi, y1i, x0i, c]) + w11 * F8(tex[mi, y1i, x1i, c]))


@njit(cache=True)
def env_lookup(env, rot, dx, dy, dz, out):
    """Bilinear lat-long lookup; u wraps, v clamps."""
    he = env.shape[0]
    we = env.shape[1]
    phi = math.atan2(dy, dx) - rot
    u = _wrap01(phi / (2.0 * math.pi))
    cz = dz
    if cz > 1.0:
        cz = 1.0
    elif cz < -1.0:
        cz = -1.0
    v = math.acos(cz) / math.pi
    x = u * we - 0.5
    y = v * he - 0.5
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    x0i = int(x0) % we
    if x0i < 0:
        x0i += we
    x1i = (x0i + 1) % we
    y0i = int(y0)
    if y0i < 0:
        y0i = 0
        fy = 0.0
    if y0i > he - 2:
        y0i = he - 2
        fy = 1.0
    if he == 1:
        y0i = 0
        fy = 0.0
    y1i = min(y0i + 1, he - 1)
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    for c in range(3):
        out[c] = (w00 * F8(env[y0i, x0i, c]) + w10 * F8(env[y0i, x1i, c])
                  + w01 * F8(env[y1i, x0i, c]) + w11 * F8(env[y1i, x1i, c]))


@njit(cache=True, inline="always")
def _env_pdf_lookup(env_pdf, rot, dx, dy, dz):
    he = env_pdf.shape[0]
    we = env_pdf.shape[1]
    phi = math.atan2(dy, dx) - rot
    u = _wrap01(phi / (2.0 * math.pi))
    cz = min(1.0, max(-1.0, dz))
    theta = math.acos(cz)
    v = theta / math.pi
    xi = min(we - 1, int(u * we))
    yi = min(he - 1, int(v * he))
    sin_t = math.sin(theta)
    if sin_t < 1e-6:
        return 0.0
    return env_pdf[yi, xi] * he * we / (2.0 * math.pi * math.pi * sin_t)


# ---------------------------------------------------------------------------
# shading math

@njit(cache=True, inline="always")
def _normalize3(x, y, z):
    n = math.sqrt(x * x + y * y + z * z)
    if n < 1e-20:
        return 0.0, 0.0, 1.0
    return x / n, y / n, z / n


@njit(cache=True, inline="always")
def _schlick(f0, cos_t):
    m = 1.0 - cos_t
    if m < 0.0:
        m = 0.0
    m2 = m * m
    return f0 + (1.0 - f0) * m2 * m2 * m


@njit(cache=True, inline="always")
def _fresnel_dielectric(cos_i, eta):
    """Exact unpolarized Fresnel; eta = n_transmitted / n_incident."""
    sin2t = (1.0 - cos_i * cos_i) / (eta * eta)
    if sin2t >= 1.0:
        return 1.0
    cos_t = math.sqrt(1.0 - sin2t)
    rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t)
    rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
    return 0.5 * (rs * rs + rp * rp)


@njit(cache=True, inline="always")
def _ggx_lambda(cos_t, alpha):
    if cos_t >= 0.9999:
        return 0.0
    c2 = cos_t * cos_t
    tan2 = (1.0 - c2) / c2
    return 0.5 * (-1.0 + math.sqrt(1.0 + alpha * alpha * tan2))


@njit(cache=True)
def _sample_vndf(wx, wy, wz, alpha, u1, u2):
    """GGX visible-normal sample in tangent space (z-up); wo must have wz>0."""
    vx, vy, vz = _normalize3(alpha * wx, alpha * wy, wz)
    lensq = vx * vx + vy * vy
    if lensq > 1e-16:
        inv = 1.0 / math.sqrt(lensq)
        t1x, t1y, t1z = -vy * inv, vx * inv, 0.0
    else:
        t1x, t1y, t1z = 1.0, 0.0, 0.0
    t2x = vy * t1z - vz * t1y
    t2y = vz * t1x - vx * t1z
    t2z = vx * t1y - vy * t1x
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    p1 = r * math.cos(phi)
    p2 = r * math.sin(phi)
    s = 0.5 * (1.0 + vz)
    p2 = (1.0 - s) * math.sqrt(max(0.0, 1.0 - p1 * p1)) + s * p2
    nz = math.sqrt(max(0.0, 1.0 - p1 * p1 - p2 * p2))
    hx = p1 * t1x + p2 * t2x + nz * vx
    hy = p1 * t1y + p2 * t2y + nz * vy
    hz = p1 * t1z + p2 * t2z + nz * vz
    return _normalize3(alpha * hx, alpha * hy, max(1e-9, hz))


@njit(cache=True, inline="always")
def _cosine_sample(u1, u2):
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    return r * math.cos(phi), r * math.sin(phi), math.sqrt(max(0.0, 1.0 - u1))


@njit(cache=True, inline="always")
def _onb(nx, ny, nz):
    """Branchless orthonormal basis (Duff et al.)."""
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    t1x = 1.0 + sign * nx * nx * a
    t1y = sign * b
    t1z = -sign * nx
    t2x = b
    t2y = sign + ny * ny * a
    t2z = -ny
    return t1x, t1y, t1z, t2x, t2y, t2z


# ---------------------------------------------------------------------------
# path tracing

@njit(cache=True)
def _trace_path(ox, oy, oz, dx, dy, dz, state, max_bounces,
                nmin, nmax, nleft, nright, tri_order, p0, e1, e2,
                tn0, tn1, tn2, tuv0, tuv1, tuv2, ttan, tri_obj,
                obj_mat, obj_kind, obj_uvt,
                tex, tex_res, mat_ior, mat_absorb,
                env, env_rot,
                nee, env_cdf_rows, env_cdf_cond, env_pdf,
                stack, mbuf, cbuf):
    tr = 1.0
    tg = 1.0
    tb = 1.0
    lr = 0.0
    lg = 0.0
    lb = 0.0
    medium = -1
    prev_diffuse_pdf = -1.0   # cosine pdf of the previous bounce when diffuse
    for depth in range(max_bounces + 1):
        tri, t, bu, bv = bvh_closest(ox, oy, oz, dx, dy, dz, nmin, nmax, nleft,
                                     nright, tri_order, p0, e1, e2, stack, 1e30)
        if tri < 0:
            env_lookup(env, env_rot, dx, dy, dz, cbuf)
            w = 1.0
            if nee == 1 and prev_diffuse_pdf > 0.0:
                pl = _env_pdf_lookup(env_pdf, env_rot, dx, dy, dz)
                w = prev_diffuse_pdf / (prev_diffuse_pdf + pl)
            er = tr * cbuf[0] * w
            eg = tg * cbuf[1] * w
            eb = tb * cbuf[2] * w
            if depth >= 2:
                er = min(er, _FIREFLY_CLAMP)
                eg = min(eg, _FIREFLY_CLAMP)
                eb = min(eb, _FIREFLY_CLAMP)
            lr += er
            lg += eg
            lb += eb
            break
        # hit data
        px = ox + t * dx
        py = oy + t * dy
        pz = oz + t * dz
        gnx = e1[tri, 1] * e2[tri, 2] - e1[tri, 2] * e2[tri, 1]
        gny = e1[tri, 2] * e2[tri, 0] - e1[tri, 0] * e2[tri, 2]
        gnz = e1[tri, 0] * e2[tri, 1] - e1[tri, 1] * e2[tri, 0]
        gnx, gny, gnz = _normalize3(gnx, gny, gnz)
        w0 = 1.0 - bu - bv
        snx = w0 * tn0[tri, 0] + bu * tn1[tri, 0] + bv * tn2[tri, 0]
        sny = w0 * tn0[tri, 1] + bu * tn1[tri, 1] + bv * tn2[tri, 1]
        snz = w0 * tn0[tri, 2] + bu * tn1[tri, 2] + bv * tn2[tri, 2]
        snx, sny, snz = _normalize3(snx, sny, snz)
        obj = tri_obj[tri]
        mi = obj_mat[obj]
        # absorption through the current medium
        if medium >= 0:
            mm = obj_mat[medium]
            tr *= math.exp(-mat_absorb[mm, 0] * t)
            tg *= math.exp(-mat_absorb[mm, 1] * t)
            tb *= math.exp(-mat_absorb[mm, 2] * t)
        # uv with the object's transform
        uu = w0 * tuv0[tri, 0] + bu * tuv1[tri, 0] + bv * tuv2[tri, 0]
        vv = w0 * tuv0[tri, 1] + bu * tuv1[tri, 1] + bv * tuv2[tri, 1]
        sc = obj_uvt[obj, 0]
        cr = obj_uvt[obj, 1]
        sr = obj_uvt[obj, 2]
        uu2 = sc * (cr * uu - sr * vv) + obj_uvt[obj, 3]
        vv2 = sc * (sr * uu + cr * vv) + obj_uvt[obj, 4]
        tex_fetch(tex, mi, tex_res[mi, 0], tex_res[mi, 1], uu2, vv2, mbuf)
        ar = mbuf[0]
        ag = mbuf[1]
        ab = mbuf[2]
        rough = mbuf[3]
        metal = mbuf[4]
        trans = mbuf[5]
        # normal map in the triangle tangent frame
        tnx = ttan[tri, 0]
        tny = ttan[tri, 1]
        tnz = ttan[tri, 2]
        dott = tnx * snx + tny * sny + tnz * snz
        tnx -= dott * snx
        tny -= dott * sny
        tnz -= dott * snz
        tnx, tny, tnz = _normalize3(tnx, tny, tnz)
        bnx = sny * tnz - snz * tny
        bny = snz * tnx - snx * tnz
        bnz = snx * tny - sny * tnx
        nmx = 2.0 * mbuf[6] - 1.0
        nmy = 2.0 * mbuf[7] - 1.0
        nmz = 2.0 * mbuf[8] - 1.0
        nx = nmx * tnx + nmy * bnx + nmz * snx
        ny = nmx * tny + nmy * bny + nmz * sny
        nz = nmx * tnz + nmy * bnz + nmz * snz
        nx, ny, nz = _normalize3(nx, ny, nz)
        # keep the shading normal on the geometric side of the interaction
        outside = (dx * gnx + dy * gny + dz * gnz) < 0.0
        fgx = gnx if outside else -gnx
        fgy = gny if outside else -gny
        fgz = gnz if outside else -gnz
        if nx * fgx + ny * fgy + nz * fgz < 0.05:
            nx, ny, nz = fgx, fgy, fgz
        wox = -dx
        woy = -dy
        woz = -dz
        cos_o = wox * nx + woy * ny + woz * nz
        if cos_o <= 1e-6:
            nx, ny, nz = fgx, fgy, fgz
            cos_o = wox * nx + woy * ny + woz * nz
            if cos_o <= 1e-6:
                break
        alpha = rough * rough
        if alpha < 1e-4:
            alpha = 1e-4
        mirror = rough < 0.03
        prev_diffuse_pdf = -1.0

        state, xi_lobe = _rng_next(state)
        state, xi_f = _rng_next(state)
        state, xi_1 = _rng_next(state)
        state, xi_2 = _rng_next(state)

        new_medium = medium
        if xi_lobe < metal:
            # metallic GGX reflection, f0 = albedo
            ndx, ndy, ndz, okm = _ggx_reflect(wox, woy, woz, nx, ny, nz, alpha,
                                              mirror, xi_1, xi_2)
            if okm == 0:
                break
            hx, hy, hz = _normalize3(wox + ndx, woy + ndy, woz + ndz)
            ch = max(0.0, wox * hx + woy * hy + woz * hz)
            tr *= _schlick(ar, ch)
            tg *= _schlick(ag, ch)
            tb *= _schlick(ab, ch)
            if not mirror:
                g2w = _ggx_energy(wox, woy, woz, ndx, ndy, ndz, nx, ny, nz, alpha)
                tr *= g2w
                tg *= g2w
                tb *= g2w
        elif xi_lobe < metal + (1.0 - metal) * trans:
            # smooth dielectric interface with Fresnel-weighted branch
            ior = mat_ior[mi]
            eta = ior if outside else 1.0 / ior
            fr = _fresnel_dielectric(cos_o, eta)
            if xi_f < fr:
                ndx = 2.0 * cos_o * nx - wox
                ndy = 2.0 * cos_o * ny - woy
                ndz = 2.0 * cos_o * nz - woz
            else:
                inv_eta = 1.0 / eta
                c2 = 1.0 - inv_eta * inv_eta * (1.0 - cos_o * cos_o)
                if c2 <= 0.0:
                    ndx = 2.0 * cos_o * nx - wox
                    ndy = 2.0 * cos_o * ny - woy
                    ndz = 2.0 * cos_o * nz - woz
                else:
                    ct = math.sqrt(c2)
                    ndx = -inv_eta * wox + (inv_eta * cos_o - ct) * nx
                    ndy = -inv_eta * woy + (inv_eta * cos_o - ct) * ny
                    ndz = -inv_eta * woz + (inv_eta * cos_o - ct) * nz
                    new_medium = obj if outside else -1
            ndx, ndy, ndz = _normalize3(ndx, ndy, ndz)
        else:
            # opaque dielectric: the whole coat fades with roughness so a
            # roughness-1 material is exactly Lambertian (energy oracle)
            fr = (1.0 - rough) * _schlick(0.04, cos_o)
            if xi_f < fr:
                ndx, ndy, ndz, okm = _ggx_reflect(wox, woy, woz, nx, ny, nz, alpha,
                                                  mirror, xi_1, xi_2)
                if okm == 0:
                    break
                if not mirror:
                    g2w = _ggx_energy(wox, woy, woz, ndx, ndy, ndz, nx, ny, nz, alpha)
                    tr *= g2w
                    tg *= g2w
                    tb *= g2w
            else:
                if nee == 1:
                    state = _nee_light_sample(px, py, pz, nx, ny, nz, tr * ar, tg * ag, tb * ab,
                                              state, nmin, nmax, nleft, nright, tri_order,
                                              p0, e1, e2, env, env_rot,
                                              env_cdf_rows, env_cdf_cond, env_pdf,
                                              stack, cbuf, fgx, fgy, fgz)
                    lr += cbuf[0]
                    lg += cbuf[1]
                    lb += cbuf[2]
                lx, ly, lz = _cosine_sample(xi_1, xi_2)
                t1x, t1y, t1z, t2x, t2y, t2z = _onb(nx, ny, nz)
                ndx = lx * t1x + ly * t2x + lz * nx
                ndy = lx * t1y + ly * t2y + lz * ny
                ndz = lx * t1z + ly * t2z + lz * nz
                tr *= ar
                tg *= ag
                tb *= ab
                prev_diffuse_pdf = max(1e-9, lz) / math.pi
        # push the origin off the surface on the travel side
        side = 1.0 if (ndx * gnx + ndy * gny + ndz * gnz) > 0.0 else -1.0
        ox = px + side * gnx * _RAY_EPS
        oy = py + side * gny * _RAY_EPS
        oz = pz + side * gnz * _RAY_EPS
        dx, dy, dz = ndx, ndy, ndz
        medium = new_medium
        # Russian roulette after a few bounces
        if depth >= 3:
            q = max(tr, max(tg, tb))
            if q > 0.95:
                q = 0.95
            if q < 0.05:
                q = 0.05
            state, xi_rr = _rng_next(state)
            if xi_rr >= q:
                break
            tr /= q
            tg /= q
            tb /= q
    return lr, lg, lb, state


@njit(cache=True, inline="always")
def _ggx_reflect(wox, woy, woz, nx, ny, nz, alpha, mirror, u1, u2):
    if mirror:
        c = wox * nx + woy * ny + woz * nz
        return 2.0 * c * nx - wox, 2.0 * c * ny - woy, 2.0 * c * nz - woz, 1
    t1x, t1y, t1z, t2x, t2y, t2z = _onb(nx, ny, nz)
    lx = wox * t1x + woy * t1y + woz * t1z
    ly = wox * t2x + woy * t2y + woz * t2z
    lz = wox * nx + woy * ny + woz * nz
    hx, hy, hz = _sample_vndf(lx, ly, lz, alpha, u1, u2)
    c = lx * hx + ly * hy + lz * hz
    rx = 2.0 * c * hx - lx
    ry = 2.0 * c * hy - ly
    rz = 2.0 * c * hz - lz
    if rz <= 1e-6:
        return 0.0, 0.0, 0.0, 0
    wx = rx * t1x + ry * t2x + rz * nx
    wy = rx * t1y + ry * t2y + rz * ny
    wz = rx * t1z + ry * t2z + rz * nz
    return wx, wy, wz, 1


@njit(cache=True, inline="always")
def _ggx_energy(wox, woy, woz, wix, wiy, wiz, nx, ny, nz, alpha):
    """VNDF estimator weight G2 / G1(wo)."""
    co = abs(wox * nx + woy * ny + woz * nz)
    ci = abs(wix * nx + wiy * ny + wiz * nz)
    lo = _ggx_lambda(co, alpha)
    li = _ggx_lambda(ci, alpha)
    return (1.0 + lo) / (1.0 + lo + li)


@njit(cache=True)
def _nee_light_sample(px, py, pz, nx, ny, nz, fr, fg, fb, state,
                      nmin, nmax, nleft, nright, tri_order, p0, e1, e2,
                      env, env_rot, env_cdf_rows, env_cdf_cond, env_pdf,
                      stack, out, gx, gy, gz):
    """One environment light sample for a diffuse vertex (balance MIS)."""
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    he = env_pdf.shape[0]
    we = env_pdf.shape[1]
    state, u1 = _rng_next(state)
    state, u2 = _rng_next(state)
    # binary searches over the marginal and conditional CDFs
    lo = 0
    hi = he - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if env_cdf_rows[mid] < u1:
            lo = mid + 1
        else:
            hi = mid
    row = lo
    lo = 0
    hi = we - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if env_cdf_cond[row, mid] < u2:
            lo = mid + 1
        else:
            hi = mid
    col = lo
    u = (col + 0.5) / we
    v = (row + 0.5) / he
    theta = v * math.pi
    phi = u * 2.0 * math.pi + env_rot
    st = math.sin(theta)
    dx = st * math.cos(phi)
    dy = st * math.sin(phi)
    dz = math.cos(theta)
    cos_i = dx * nx + dy * ny + dz * nz
    if cos_i <= 0.0 or st < 1e-6:
        return state
    pl = env_pdf[row, col] * he * we / (2.0 * math.pi * math.pi * st)
    if pl <= 1e-12:
        return state
    side = 1.0 if (dx * gx + dy * gy + dz * gz) > 0.0 else -1.0
    sx = px + side * gx * _RAY_EPS
    sy = py + side * gy * _RAY_EPS
    sz = pz + side * gz * _RAY_EPS
    if bvh_anyhit(sx, sy, sz, dx, dy, dz, nmin, nmax, nleft, nright, tri_order,
                  p0, e1, e2, stack, 1e30):
        return state
    pb = cos_i / math.pi
    wmis = pl / (pl + pb)
    env_lookup(env, env_rot, dx, dy, dz, out)
    scale = cos_i / math.pi / pl * wmis
    out[0] = fr * out[0] * scale
    out[1] = fg * out[1] * scale
    out[2] = fb * out[2] * scale
    return state


@njit(cache=True, parallel=True)
def render_kernel(img, nan_rows, width, height, spp, max_bounces, seed,
                  cpx, cpy, cpz, rx, ry, rz, ux, uy, uz, fx, fy, fz,
                  tan_half, aspect,
                  nmin, nmax, nleft, nright, tri_order, p0, e1, e2,
                  tn0, tn1, tn2, tuv0, tuv1, tuv2, ttan, tri_obj,
                  obj_mat, obj_kind, obj_uvt,
                  tex, tex_res, mat_ior, mat_absorb,
                  env, env_rot,
                  nee, env_cdf_rows, env_cdf_cond, env_pdf):
    for y in prange(height):
        stack = np.empty(128, dtype=np.int64)
        mbuf = np.empty(9, dtype=np.float64)
        cbuf = np.empty(3, dtype=np.float64)
        for x in range(width):
            pix = y * width + x
            state = _pixel_state(seed, pix)
            ar = 0.0
            ag = 0.0
            ab = 0.0
            bad = 0
            for s in range(spp):
                state, jx = _rng_next(state)
                state, jy = _rng_next(state)
                sx = ((x + jx) / width) * 2.0 - 1.0
                sy = 1.0 - ((y + jy) / height) * 2.0
                dx = fx + rx * (sx * tan_half * aspect) + ux * (sy * tan_half)
                dy = fy + ry * (sx * tan_half * aspect) + uy * (sy * tan_half)
                dz = fz + rz * (sx * tan_half * aspect) + uz * (sy * tan_half)
                dx, dy, dz = _normalize3(dx, dy, dz)
                lr, lg, lb, state = _trace_path(
                    cpx, cpy, cpz, dx, dy, dz, state, max_bounces,
                    nmin, nmax, nleft, nright, tri_order, p0, e1, e2,
                    tn0, tn1, tn2, tuv0, tuv1, tuv2, ttan, tri_obj,
                    obj_mat, obj_kind, obj_uvt,
                    tex, tex_res, mat_ior, mat_absorb,
                    env, env_rot, nee, env_cdf_rows, env_cdf_cond, env_pdf,
                    stack, mbuf, cbuf)
                if math.isfinite(lr) and math.isfinite(lg) and math.isfinite(lb):
                    ar += lr
                    ag += lg
                    ab += lb
                else:
                    bad += 1
            img[y, x, 0] = np.float32(ar / spp)
            img[y, x, 1] = np.float32(ag / spp)
            img[y, x, 2] = np.float32(ab / spp)
            nan_rows[y] += bad


@njit(cache=True, parallel=True)
def mask_kernel(mask, width, height,
                cpx, cpy, cpz, rx, ry, rz, ux, uy, uz, fx, fy, fz,
                tan_half, aspect,
                nmin, nmax, nleft, nright, tri_order, p0, e1, e2,
                tri_obj, obj_kind, obj_mat, mat_ior, max_interfaces):
    """Object mask from primary rays: the first non-glass hit decides, with
    the ray refracted through at most ``max_interfaces`` dielectric walls."""
    for y in prange(height):
        stack = np.empty(128, dtype=np.int64)
        for x in range(width):
            sx = ((x + 0.5) / width) * 2.0 - 1.0
            sy = 1.0 - ((y + 0.5) / height) * 2.0
            dx = fx + rx * (sx * tan_half * aspect) + ux * (sy * tan_half)
            dy = fy + ry * (sx * tan_half * aspect) + uy * (sy * tan_half)
            dz = fz + rz * (sx * tan_half * aspect) + uz * (sy * tan_half)
            dx, dy, dz = _normalize3(dx, dy, dz)
            ox, oy, oz = cpx, cpy, cpz
            val = 0
            interfaces = 0
            for step in range(max_interfaces + 2):
                tri, t, bu, bv = bvh_closest(ox, oy, oz, dx, dy, dz, nmin, nmax,
                                             nleft, nright, tri_order, p0, e1, e2,
                                             stack, 1e30)
                if tri < 0:
                    break
                obj = tri_obj[tri]
                kind = obj_kind[obj]
                if kind == 0:
                    val = 255
                    break
                if kind != 1:
                    break
                interfaces += 1
                if interfaces > max_interfaces:
                    break
                gnx = e1[tri, 1] * e2[tri, 2] - e1[tri, 2] * e2[tri, 1]
                gny = e1[tri, 2] * e2[tri, 0] - e1[tri, 0] * e2[tri, 2]
                gnz = e1[tri, 0] * e2[tri, 1] - e1[tri, 1] * e2[tri, 0]
                gnx, gny, gnz = _normalize3(gnx, gny, gnz)
                outside = (dx * gnx + dy * gny + dz * gnz) < 0.0
                if not outside:
                    gnx, gny, gnz = -gnx, -gny, -gnz
                ior = mat_ior[obj_mat[obj]]
                eta = ior if outside else 1.0 / ior
                cos_o = -(dx * gnx + dy * gny + dz * gnz)
                inv_eta = 1.0 / eta
                c2 = 1.0 - inv_eta * inv_eta * (1.0 - cos_o * cos_o)
                if c2 <= 0.0:
                    break  # total internal reflection: treat as blocked
                px = ox + t * dx
                py = oy + t * dy
                pz = oz + t * dz
                ct = math.sqrt(c2)
                ndx = inv_eta * dx + (inv_eta * cos_o - ct) * gnx
                ndy = inv_eta * dy + (inv_eta * cos_o - ct) * gny
                ndz = inv_eta * dz + (inv_eta * cos_o - ct) * gnz
                dx, dy, dz = _normalize3(ndx, ndy, ndz)
                ox = px + dx * _RAY_EPS
                oy = py + dy * _RAY_EPS
                oz = pz + dz * _RAY_EPS
            mask[y, x] = val


@njit(cache=True)
def build_env_distribution(env):
    """Luminance * sin(theta) CDFs for environment importance sampling."""
    he = env.shape[0]
    we = env.shape[1]
    pdf = np.zeros((he, we), dtype=np.float64)
    total = 0.0
    for yy in range(he):
        st = math.sin((yy + 0.5) / he * math.pi)
        for xx in range(we):
            lum = 0.2126 * F8(env[yy, xx, 0]) + 0.7152 * F8(env[yy, xx, 1]) + 0.0722 * F8(env[yy, xx, 2])
            pdf[yy, xx] = max(lum, 1e-8) * st
            total += pdf[yy, xx]
    rows = np.zeros(he, dtype=np.float64)
    cond = np.zeros((he, we), dtype=np.float64)
    acc = 0.0
    for yy in range(he):
        rsum = 0.0
        for xx in range(we):
            rsum += pdf[yy, xx]
        acc += rsum / total
        rows[yy] = acc
        c = 0.0
        for xx in range(we):
            c += pdf[yy, xx] / rsum
            cond[yy, xx] = c
        for xx in range(we):
            pdf[yy, xx] /= total
    rows[he - 1] = 1.0
    for yy in range(he):
        cond[yy, we - 1] = 1.0
    return rows, cond, pdf
