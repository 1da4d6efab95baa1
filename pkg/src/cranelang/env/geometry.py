"""Analytic object primitives: ray casting and horizontal overlap resolution.

Every object is a solid of revolution about a vertical axis, built from
frustums (cylinders and cones are special cases) and spheres. Distances are
in meters, heights measured from the floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INF = np.inf


@dataclass(frozen=True)
class Frustum:
    z0: float
    z1: float
    r0: float
    r1: float

    def radius_at(self, z):
        z = np.asarray(z, dtype=float)
        r = self.r0 + (self.r1 - self.r0) * (z - self.z0) / (self.z1 - self.z0)
        return np.where((z >= self.z0) & (z <= self.z1), r, -INF)


@dataclass(frozen=True)
class Sphere:
    zc: float
    r: float

    def radius_at(self, z):
        z = np.asarray(z, dtype=float)
        d2 = self.r ** 2 - (z - self.zc) ** 2
        return np.where(d2 >= 0, np.sqrt(np.maximum(d2, 0.0)), -INF)


# base radius 1 m unless stated; see README for the dimension table
SHAPE_PRIMITIVES: dict[str, tuple] = {
    "pillar": (Frustum(0.0, 4.0, 1.0, 1.0),),
    "pole": (Frustum(0.0, 6.0, 0.5, 0.5),),
    "dumbbell": (Sphere(1.0, 1.0), Sphere(4.0, 1.0), Frustum(1.0, 4.0, 0.25, 0.25)),
    "cone": (Frustum(0.0, 4.0, 1.0, 0.0),),
    "hourglass": (Frustum(0.0, 2.0, 1.0, 0.0), Frustum(2.0, 4.0, 0.0, 1.0)),
}


def shape_height(shape: str) -> float:
    top = 0.0
    for p in SHAPE_PRIMITIVES[shape]:
        top = max(top, p.z1 if isinstance(p, Frustum) else p.zc + p.r)
    return top


def profile_radius(shape: str, z) -> np.ndarray:
    """Horizontal radius of ``shape`` at height(s) ``z``; ``-inf`` where empty."""
    z = np.asarray(z, dtype=float)
    r = np.full(z.shape, -INF)
    for p in SHAPE_PRIMITIVES[shape]:
        r = np.maximum(r, p.radius_at(z))
    return r


def _breakpoints(shape: str) -> np.ndarray:
    pts = []
    for p in SHAPE_PRIMITIVES[shape]:
        if isinstance(p, Frustum):
            pts += [p.z0, p.z1]
        else:
            pts += [p.zc - p.r, p.zc, p.zc + p.r]
    return np.array(sorted(set(pts)))


def max_radius(shape: str, z_lo: float, z_hi: float, n: int = 65) -> float:
    z = np.concatenate([np.linspace(z_lo, z_hi, n), _breakpoints(shape)])
    z = z[(z >= z_lo) & (z <= z_hi)]
    return float(profile_radius(shape, z).max(initial=-INF))


_UNIT = np.linspace(-1.0, 1.0, 65)
_HEIGHT = {name: shape_height(name) for name in SHAPE_PRIMITIVES}
_OUTER_RADIUS = {name: max_radius(name, 0.0, _HEIGHT[name]) for name in SHAPE_PRIMITIVES}
_BAND_RADIUS: dict = {}


def sphere_penetration(shape: str, axis_xy, center, radius: float) -> tuple[float, np.ndarray]:
    """Horizontal overlap between a sphere and an object.

    Returns ``(depth, direction)``: translating the object by ``depth`` along the
    unit horizontal ``direction`` (away from the sphere) separates them. A
    negative depth is the horizontal clearance.
    """
    center = np.asarray(center, dtype=float)
    delta = np.asarray(axis_xy, dtype=float) - center[:2]
    dh = float(np.hypot(delta[0], delta[1]))
    direction = delta / dh if dh > 1e-12 else np.array([1.0, 0.0])
    bound = _OUTER_RADIUS[shape] + radius
    if dh > bound + 0.5 or center[2] - radius > _HEIGHT[shape] + 0.5:
        # broad phase: clearance lower bound is all callers need here
        return bound - dh if dh > bound + 0.5 else -1.0, direction
    z = center[2] + radius * _UNIT
    extra = _breakpoints(shape)
    extra = extra[np.abs(extra - center[2]) <= radius]
    z = np.concatenate([z, extra])
    slice_r = np.sqrt(np.maximum(radius ** 2 - (z - center[2]) ** 2, 0.0))
    reach = profile_radius(shape, z) + slice_r
    depth = float(reach.max()) - dh
    return depth, direction


def box_penetration(shape: str, axis_xy, box_xy, heading: float, half: float,
                    height: float) -> tuple[float, np.ndarray]:
    """Horizontal overlap between a square footprint (rotated by ``heading``) and an object."""
    key = (shape, height)
    if key not in _BAND_RADIUS:
        _BAND_RADIUS[key] = max_radius(shape, 0.0, height)
    obj_r = _BAND_RADIUS[key]
    c, s = np.cos(heading), np.sin(heading)
    d = np.asarray(axis_xy, dtype=float) - np.asarray(box_xy, dtype=float)
    local = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])
    q = np.clip(local, -half, half)
    gap = local - q
    dist = float(np.hypot(gap[0], gap[1]))
    if dist > 1e-12:
        depth = obj_r - dist
        n_local = gap / dist
    else:
        # object axis inside the footprint: exit through the nearest face
        face = int(np.argmax(np.abs(local)))
        n_local = np.zeros(2)
        n_local[face] = 1.0 if local[face] >= 0 else -1.0
        depth = obj_r + half - abs(local[face])
    normal = np.array([c * n_local[0] - s * n_local[1], s * n_local[0] + c * n_local[1]])
    return float(depth), normal


def box_contact_point(axis_xy, box_xy, heading: float, half: float) -> np.ndarray:
    """Closest footprint point to the object axis, in the body frame."""
    c, s = np.cos(heading), np.sin(heading)
    d = np.asarray(axis_xy, dtype=float) - np.asarray(box_xy, dtype=float)
    local = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])
    q = np.clip(local, -half, half)
    if np.all(q == local):
        face = int(np.argmax(np.abs(local)))
        q = local.copy()
        q[face] = half if local[face] >= 0 else -half
    return q


# ray casting; origins (3,), directions (R, 3) unit vectors

def ray_sphere(origin, dirs, center, radius):
    oc = origin - center
    b = dirs @ oc
    c = oc @ oc - radius ** 2
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, INF))
    return np.where(disc >= 0, t, INF)


def ray_frustum(origin, dirs, axis_xy, fr: Frustum):
    """Nearest hit on the lateral surface and the two caps of a vertical frustum."""
    ox, oy, oz = origin[0] - axis_xy[0], origin[1] - axis_xy[1], origin[2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    slope = (fr.r1 - fr.r0) / (fr.z1 - fr.z0)
    base = fr.r0 - slope * fr.z0
    k = base + slope * oz
    a = dx * dx + dy * dy - slope * slope * dz * dz
    b = 2.0 * (ox * dx + oy * dy - slope * k * dz)
    c = ox * ox + oy * oy - k * k
    best = np.full(dirs.shape[0], INF)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        linear = np.abs(a) < 1e-12
        for sign in (-1.0, 1.0):
            t = np.where(linear, -c / b, (-b + sign * sq) / (2 * a))
            z = oz + t * dz
            ok = ((disc >= 0) | linear) & (t > 1e-9) & (z >= fr.z0) & (z <= fr.z1) \
                & (base + slope * z >= 0)
            best = np.where(ok & (t < best), t, best)
        for zc, rc in ((fr.z0, fr.r0), (fr.z1, fr.r1)):
            if rc <= 0:
                continue
            t = (zc - oz) / dz
            hx, hy = ox + t * dx, oy + t * dy
            ok = (t > 1e-9) & (hx * hx + hy * hy <= rc * rc) & np.isfinite(t)
            best = np.where(ok & (t < best), t, best)
    return best


def ray_object(origin, dirs, shape: str, axis_xy):
    t = np.full(dirs.shape[0], INF)
    for p in SHAPE_PRIMITIVES[shape]:
        if isinstance(p, Frustum):
            t = np.minimum(t, ray_frustum(origin, dirs, axis_xy, p))
        else:
            center = np.array([axis_xy[0], axis_xy[1], p.zc])
            t = np.minimum(t, ray_sphere(origin, dirs, center, p.r))
    return t
