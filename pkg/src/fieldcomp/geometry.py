"""Planes in the three-dimensional control space.

Points are plain ``numpy`` arrays of shape ``(3,)`` in field units.  A plane
is stored in Hesse normal form ``{v : normal . v = offset}`` with a unit
normal whose first nonzero component is positive.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateGeometry, FewerThanThreePoints, InvalidBeam,
                     NearParallelPlanes)
from .linalg import canonical_sign, jacobi_eigh, solve_pivoted

BEAM_IDS = (1, 2, 3)
DEFAULT_MAX_CONDITION = 1e8
# two smallest scatter eigenvalues below this fraction of the largest => collinear
COLLINEAR_RTOL = 1e-12


def as_vec3(v):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {np.shape(v)}")
    if not np.all(np.isfinite(a)):
        raise ValueError("vector components must be finite")
    return a


@dataclass(frozen=True)
class Plane:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = as_vec3(self.normal)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("plane normal must be nonzero")
        offset = float(self.offset)
        if abs(norm - 1.0) > 1e-12:
            n = n / norm
            offset = offset / norm
        c = canonical_sign(n)
        if not np.array_equal(c, n):
            offset = -offset
        c.setflags(write=False)
        object.__setattr__(self, "normal", c)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_normal_point(cls, normal, point):
        n = as_vec3(normal)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ as_vec3(point)))


@dataclass(frozen=True)
class PlanePoint:
    beam_id: int
    point: np.ndarray

    def __post_init__(self):
        check_beam(self.beam_id)
        p = as_vec3(self.point)
        p.setflags(write=False)
        object.__setattr__(self, "beam_id", int(self.beam_id))
        object.__setattr__(self, "point", p)


def check_beam(beam_id):
    if isinstance(beam_id, bool) or beam_id not in BEAM_IDS:
        raise InvalidBeam(f"beam_id must be one of {BEAM_IDS}, got {beam_id!r}")
    return int(beam_id)


def fit_plane(points):
    """Total-least-squares plane through ``points``.

    The normal is the eigenvector of the smallest eigenvalue of the scatter
    matrix of the centred points.  Points are sorted before accumulation so the
    result does not depend on input order, bit for bit.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array of points, got shape {pts.shape}")
    if len(pts) < 3:
        raise FewerThanThreePoints(f"need at least 3 points to fit a plane, got {len(pts)}")
    pts = pts[np.lexsort(pts.T[::-1])]
    centroid = pts.mean(axis=0)
    x = pts - centroid
    w, v = jacobi_eigh(x.T @ x)
    if w[0] <= 0.0 or w[1] <= COLLINEAR_RTOL * w[0]:
        raise DegenerateGeometry("points are collinear or coincident; the fitted plane is not unique")
    normal = canonical_sign(v[:, 2])
    normal = normal / np.linalg.norm(normal)
    return Plane(normal, float(normal @ centroid))


def plane_residual(plane, point):
    """Signed orthogonal distance of ``point`` from ``plane``."""
    return float(plane.normal @ as_vec3(point) - plane.offset)


def intersect_planes(p1, p2, p3, max_condition=DEFAULT_MAX_CONDITION):
    """Common point of three planes.

    Raises:
        NearParallelPlanes: if the normal matrix has condition number above
            ``max_condition`` (or is singular).
    """
    n = np.vstack([p1.normal, p2.normal, p3.normal])
    d = np.array([p1.offset, p2.offset, p3.offset])
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(n)
    if not np.isfinite(cond) or cond > max_condition:
        raise NearParallelPlanes(f"plane normals are nearly dependent (condition number {cond:.3g})")
    try:
        return solve_pivoted(n, d)
    except ZeroDivisionError as exc:
        raise NearParallelPlanes("plane normals are linearly dependent") from exc
