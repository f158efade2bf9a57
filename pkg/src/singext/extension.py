"""Per-cube extensions and the assembled singular extension.

Good cubes get a cap-averaged extension: in the sup-norm radial coordinate of
the cube (conjugate to the Euclidean radius under the cube-ball
homeomorphism), the value at radius r and direction sigma is the average of
the boundary trace over the spherical cap of angular radius (pi/4)(1-r)
around sigma, with the full average at the center and the exact trace on the
boundary.  Bad cubes get the homogeneous extension: the boundary value at the
radial projection, whose gradient obeys the exact law |DW| = |d_sigma w|/r.

Boundary traces are tabulated values of the averaged extension V on the cube
surface, parametrized by direction, so neighboring cubes agree on shared
faces by construction.
"""

from dataclasses import dataclass, field as dfield

import numpy as np

from .convolution import extend_batch
from .cubes import Box, CubeFamilyParams, CubeId, cube_geometry
from .errors import (ConfigError, ResolutionError, SingularPointError,
                     TubeViolationError)

CAP_ANGLE = np.pi / 4.0
INNER_EXACT_FRACTION = 0.1  # radial fraction handled by the closed-form law


def cube_ball_map(x: np.ndarray) -> np.ndarray:
    """Bi-Lipschitz map of the origin-centered cube onto the ball: x |x|_inf/|x|_2."""
    x = np.asarray(x, dtype=float)
    sup = np.max(np.abs(x), axis=-1)
    eu = np.linalg.norm(x, axis=-1)
    scale = np.where(eu > 0, sup / np.where(eu > 0, eu, 1.0), 0.0)
    return x * scale[..., None]


def ball_cube_map(y: np.ndarray) -> np.ndarray:
    """Inverse of cube_ball_map: y |y|_2/|y|_inf, fixing the origin."""
    y = np.asarray(y, dtype=float)
    sup = np.max(np.abs(y), axis=-1)
    eu = np.linalg.norm(y, axis=-1)
    scale = np.where(sup > 0, eu / np.where(sup > 0, sup, 1.0), 0.0)
    return y * scale[..., None]


class VField:
    """The averaged extension V as a point evaluator on the half-space."""

    def __init__(self, u, resolution: int):
        self.u = u
        self.manifold = u.manifold
        self.resolution = resolution

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return extend_batch(self.u, pts[:, :-1], pts[:, -1], self.resolution)


def direction_table(m: int, size: int) -> np.ndarray:
    """Deterministic unit directions: uniform angles (m=1), Fibonacci (m=2)."""
    if m == 1:
        ang = (np.arange(size) + 0.5) * (2.0 * np.pi / size)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    i = np.arange(size)
    z = 1.0 - (2.0 * i + 1.0) / size
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    rho = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def ray_to_boundary(center: np.ndarray, half_edge: float,
                    dirs: np.ndarray) -> np.ndarray:
    """Point where the ray from the center in each direction exits the cube."""
    sup = np.max(np.abs(dirs), axis=-1)
    return center[None, :] + dirs * (half_edge / sup)[:, None]


@dataclass
class CubeExtension:
    """Extension descriptor for one cube: kind, trace table, singular center."""

    cid: CubeId
    kind: str                      # "good" | "bad"
    box: Box
    center: np.ndarray
    directions: np.ndarray         # (T, m+1)
    boundary_points: np.ndarray    # (T, m+1) on the cube surface
    boundary_values: np.ndarray    # (T, nu): V at those points
    per_cube_sup: float = np.nan

    @property
    def m(self) -> int:
        return self.box.lo.shape[0] - 1

    @property
    def edge(self) -> float:
        return float(self.box.hi[0] - self.box.lo[0])

    def local(self, points: np.ndarray):
        """Sup-norm radius and direction of points relative to the center."""
        xi = (np.atleast_2d(points) - self.center[None, :]) / (self.edge / 2.0)
        r = np.max(np.abs(xi), axis=-1)
        eu = np.linalg.norm(xi, axis=-1)
        dirs = np.where(eu[:, None] > 0, xi / np.where(eu > 0, eu, 1.0)[:, None], 0.0)
        return r, dirs


class GoodCubeField:
    """Cap-averaged extension of the tabulated boundary trace."""

    def __init__(self, ext: CubeExtension, vfield: VField):
        if len(ext.directions) < 8:
            raise ResolutionError("boundary table too coarse "
                                  f"({len(ext.directions)} directions)")
        self.ext = ext
        self.vfield = vfield
        if ext.m == 1:
            T = len(ext.directions)
            w = ext.boundary_values
            dtheta = 2.0 * np.pi / T
            cum = np.vstack([np.zeros((1, w.shape[1])),
                             np.cumsum(w, axis=0) * dtheta])
            self._cum = cum            # piecewise-constant antiderivative
            self._dtheta = dtheta
            self._mean = cum[-1] / (2.0 * np.pi)

    def _arc_integral(self, a: np.ndarray) -> np.ndarray:
        """Integral of the table over angle [0, a), a in [0, 2 pi]."""
        T = len(self.ext.boundary_values)
        pos = a / self._dtheta
        j = np.clip(np.floor(pos).astype(int), 0, T - 1)
        frac = pos - j
        return self._cum[j] + frac[:, None] * self.ext.boundary_values[j] \
            * self._dtheta

    def _cap_average_1d(self, angles: np.ndarray, caps: np.ndarray) -> np.ndarray:
        two_pi = 2.0 * np.pi
        total = self._cum[-1]
        a = np.mod(angles - caps, two_pi)
        b = np.mod(angles + caps, two_pi)
        ia, ib = self._arc_integral(a), self._arc_integral(b)
        wrap = (b < a)
        sums = np.where(wrap[:, None], total[None, :] - ia + ib, ib - ia)
        return sums / (2.0 * caps)[:, None]

    def values(self, points: np.ndarray) -> np.ndarray:
        """W at points of the cube."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, dirs = self.ext.local(pts)
        out = np.empty((len(pts), self.ext.boundary_values.shape[1]))
        on_boundary = r >= 1.0 - 1e-12
        if np.any(on_boundary):
            out[on_boundary] = self.vfield.values(pts[on_boundary])
        at_center = (~on_boundary) & (r < 1e-12)
        if np.any(at_center):
            out[at_center] = self._full_mean()
        inner = (~on_boundary) & (~at_center)
        if np.any(inner):
            caps = CAP_ANGLE * (1.0 - r[inner])
            if self.ext.m == 1:
                ang = np.mod(np.arctan2(dirs[inner, 1], dirs[inner, 0]),
                             2.0 * np.pi)
                out[inner] = self._cap_average_1d(ang, caps)
            else:
                out[inner] = self._cap_average_sphere(dirs[inner], caps)
        return out

    def _full_mean(self):
        if self.ext.m == 1:
            return self._mean
        return np.mean(self.ext.boundary_values, axis=0)

    def _cap_average_sphere(self, dirs: np.ndarray, caps: np.ndarray) -> np.ndarray:
        table = self.ext.directions
        vals = self.ext.boundary_values
        dots = dirs @ table.T
        out = np.empty((len(dirs), vals.shape[1]))
        cos_caps = np.cos(caps)
        for i in range(len(dirs)):
            mask = dots[i] >= cos_caps[i]
            if not np.any(mask):
                out[i] = vals[np.argmax(dots[i])]
            else:
                out[i] = np.mean(vals[mask], axis=0)
        return out


class BadCubeField:
    """Homogeneous extension: boundary value at the radial projection."""

    def __init__(self, ext: CubeExtension, vfield: VField):
        if len(ext.directions) < 8:
            raise ResolutionError("boundary table too coarse")
        self.ext = ext
        self.vfield = vfield
        manifold = vfield.manifold
        self._u_table = manifold.retract(ext.boundary_values)
        if ext.m == 1:
            T = len(ext.directions)
            dtheta = 2.0 * np.pi / T
            dU = (np.roll(self._u_table, -1, axis=0)
                  - np.roll(self._u_table, 1, axis=0)) / (2.0 * dtheta)
            self._gu = np.linalg.norm(dU, axis=-1)
        else:
            self._gu = self._sphere_gradient_norms()

    def _sphere_gradient_norms(self) -> np.ndarray:
        """|grad_sigma U| per table direction, by small great-circle steps."""
        dirs = self.ext.directions
        eps = 1e-3
        ref = np.where(np.abs(dirs[:, 2:3]) < 0.9,
                       np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
        t1 = np.cross(dirs, ref)
        t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
        t2 = np.cross(dirs, t1)
        half = self.ext.edge / 2.0
        g2 = np.zeros(len(dirs))
        for t in (t1, t2):
            plus = dirs * np.cos(eps) + t * np.sin(eps)
            minus = dirs * np.cos(eps) - t * np.sin(eps)
            qp = ray_to_boundary(self.ext.center, half, plus)
            qm = ray_to_boundary(self.ext.center, half, minus)
            up = self.vfield.manifold.retract(self.vfield.values(qp))
            um = self.vfield.manifold.retract(self.vfield.values(qm))
            g2 += np.sum(((up - um) / (2.0 * eps)) ** 2, axis=-1)
        return np.sqrt(g2)

    def _angle_index(self, dirs: np.ndarray):
        if self.ext.m == 1:
            T = len(self.ext.directions)
            ang = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
            pos = ang / (2.0 * np.pi / T) - 0.5
            j0 = np.floor(pos).astype(int)
            frac = pos - j0
            return np.mod(j0, T), np.mod(j0 + 1, T), frac
        dots = dirs @ self.ext.directions.T
        j = np.argmax(dots, axis=1)
        return j, j, np.zeros(len(dirs))

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, dirs = self.ext.local(pts)
        if np.any(r < 1e-14):
            raise SingularPointError(
                f"homogeneous extension evaluated at the center of {self.ext.cid}")
        j0, j1, frac = self._angle_index(dirs)
        w = self.ext.boundary_values
        return w[j0] * (1.0 - frac)[:, None] + w[j1] * frac[:, None]

    def u_values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, dirs = self.ext.local(pts)
        if np.any(r < 1e-14):
            raise SingularPointError(
                f"homogeneous extension evaluated at the center of {self.ext.cid}")
        j0, j1, frac = self._angle_index(dirs)
        v = (self._u_table[j0] * (1.0 - frac)[:, None]
             + self._u_table[j1] * frac[:, None])
        return self.vfield.manifold.retract(v)

    def du_norms(self, points: np.ndarray) -> np.ndarray:
        """Exact homogeneous gradient law |DU| = |d_sigma U|/|x - center|."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rad = np.linalg.norm(pts - self.ext.center[None, :], axis=-1)
        if np.any(rad < 1e-14):
            raise SingularPointError("gradient sampled at the singular center")
        _, dirs = self.ext.local(pts)
        j0, j1, frac = self._angle_index(dirs)
        g = self._gu[j0] * (1.0 - frac) + self._gu[j1] * frac
        return g / rad

    def gu_table(self) -> np.ndarray:
        return self._gu

    def winding(self) -> int:
        """Degree of the retracted trace loop around the singular center (m=1)."""
        if self.ext.m != 1:
            raise ConfigError("winding of a singular loop is defined for m=1")
        ang = np.arctan2(self._u_table[:, 1], self._u_table[:, 0])
        inc = np.diff(np.append(ang, ang[0]))
        inc = (inc + np.pi) % (2.0 * np.pi) - np.pi
        return int(round(float(np.sum(inc)) / (2.0 * np.pi)))


def extend_good(ext: CubeExtension, vfield: VField) -> GoodCubeField:
    return GoodCubeField(ext, vfield)


def extend_bad(ext: CubeExtension, vfield: VField) -> BadCubeField:
    return BadCubeField(ext, vfield)


@dataclass
class ExtensionField:
    """The assembled piecewise extension over the enumerated band."""

    u: object
    params: CubeFamilyParams
    vfield: VField
    cubes: dict                    # CubeId -> CubeExtension
    good: list
    bad: list
    mu: float
    band_top: float
    delta_n: float
    cells_per_unit: float = 96.0
    min_cells: int = 6
    max_cells: int = 64
    _fields: dict = dfield(default_factory=dict)

    @property
    def singular_set(self) -> np.ndarray:
        if not self.bad:
            return np.zeros((0, self.params.m + 1))
        return np.stack([self.cubes[cid].center for cid in self.bad])

    def grid_cells(self, cid: CubeId) -> int:
        e = self.cubes[cid].edge
        return int(np.clip(round(self.cells_per_unit * e),
                           self.min_cells, self.max_cells))

    def field_for(self, cid: CubeId):
        if cid not in self._fields:
            ext = self.cubes[cid]
            cls = GoodCubeField if ext.kind == "good" else BadCubeField
            self._fields[cid] = cls(ext, self.vfield)
        return self._fields[cid]

    def u_at(self, points: np.ndarray) -> np.ndarray:
        """U = retract(W) at arbitrary in-band or above-band points."""
        from .cubes import locate
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(pts), self.vfield.manifold.ambient_dim))
        above = pts[:, -1] >= self.band_top
        if np.any(above):
            out[above] = self._retract_checked(self.vfield.values(pts[above]),
                                               cid=None)
        rest = np.where(~above)[0]
        by_cube: dict = {}
        for i in rest:
            cid = locate(self.params, pts[i])
            by_cube.setdefault(cid, []).append(i)
        for cid, idxs in by_cube.items():
            idxs = np.asarray(idxs)
            if cid not in self.cubes:
                # outside the enumerated footprint: V lives in the tube there
                out[idxs] = self._retract_checked(self.vfield.values(pts[idxs]),
                                                  cid=None)
                continue
            f = self.field_for(cid)
            if isinstance(f, BadCubeField):
                out[idxs] = f.u_values(pts[idxs])
            else:
                out[idxs] = self._retract_checked(f.values(pts[idxs]), cid)
        return out

    def _retract_checked(self, w: np.ndarray, cid):
        d = self.vfield.manifold.distance_to(w)
        if np.any(d > self.delta_n):
            raise TubeViolationError(cid if cid is not None else "above-band",
                                     float(np.max(d)))
        return self.vfield.manifold.retract(w)


def build_cube_extension(cid: CubeId, params: CubeFamilyParams, kind: str,
                         vfield: VField, table_size: int,
                         per_cube_sup: float = np.nan) -> CubeExtension:
    box = cube_geometry(params, cid)
    center = 0.5 * (box.lo + box.hi)
    dirs = direction_table(params.m, table_size)
    qpts = ray_to_boundary(center, 0.5 * float(box.hi[0] - box.lo[0]), dirs)
    vals = vfield.values(qpts)
    return CubeExtension(cid=cid, kind=kind, box=box, center=center,
                         directions=dirs, boundary_points=qpts,
                         boundary_values=vals, per_cube_sup=per_cube_sup)


# -- superlevel measures ------------------------------------------------------

WEIGHTS = ("euclidean", "hyperbolic", "ball")


def _cell_weights(points: np.ndarray, cellvol: float, weight: str,
                  m: int) -> np.ndarray:
    if weight == "euclidean":
        return np.full(len(points), cellvol)
    if weight == "hyperbolic":
        return cellvol / points[:, -1] ** (m + 1)
    if weight == "ball":
        shifted = points.copy()
        shifted[:, -1] += 2.0
        return cellvol * 4.0 ** (m + 1) / np.sum(shifted**2, axis=-1) ** (m + 1)
    raise ConfigError(f"unknown weight {weight!r}")


def _cell_lattice(box: Box, cells: int) -> tuple[np.ndarray, float]:
    dim = len(box.lo)
    axes = [box.lo[a] + (np.arange(cells) + 0.5) / cells * (box.hi[a] - box.lo[a])
            for a in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    cellvol = float(np.prod((box.hi - box.lo) / cells))
    return pts, cellvol


def _fd_du_norms(field: GoodCubeField, box: Box, cells: int,
                 delta_n: float):
    """|DU| at cell centers of a good cube by central differences."""
    dim = len(box.lo)
    pts, cellvol = _cell_lattice(box, cells)
    w = field.values(pts)
    manifold = field.vfield.manifold
    d = manifold.distance_to(w)
    if np.any(d > delta_n):
        raise TubeViolationError(field.ext.cid, float(np.max(d)))
    uvals = manifold.retract(w)
    shape = (cells,) * dim + (uvals.shape[-1],)
    ug = uvals.reshape(shape)
    steps = (box.hi - box.lo) / cells
    grads = []
    for axis in range(dim):
        g = np.gradient(ug, steps[axis], axis=axis)
        grads.append(g.reshape(-1, uvals.shape[-1]))
    jac = np.stack(grads, axis=1)  # (P, dim, nu)
    norms = np.linalg.svd(jac, compute_uv=False)[:, 0]
    return pts, cellvol, norms


def _bad_cube_measures(field: BadCubeField, t_grid: np.ndarray, cells: int,
                       weight: str) -> np.ndarray:
    """Superlevel measures over a bad cube: sampled annulus + exact inner law."""
    ext = field.ext
    box, m = ext.box, ext.m
    pts, cellvol = _cell_lattice(box, cells)
    rad = np.linalg.norm(pts - ext.center[None, :], axis=-1)
    r0 = INNER_EXACT_FRACTION * (ext.edge / 2.0)
    outer = rad > r0
    du = field.du_norms(pts[outer])
    cw = _cell_weights(pts[outer], cellvol, weight, m)
    gu = field.gu_table()
    center_w = _cell_weights(ext.center[None, :], 1.0, weight, m)[0]
    if m == 1:
        dmeas = 2.0 * np.pi / len(gu)
    else:
        dmeas = 4.0 * np.pi / len(gu)
    out = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        grid_part = float(np.sum(cw[du >= t]))
        rcut = np.minimum(r0, gu / t)
        inner = float(np.sum(rcut ** (m + 1) / (m + 1)) * dmeas) * center_w
        out[i] = grid_part + inner
    return out


@dataclass
class DistributionReport:
    """Weighted superlevel-set measures of |DU| against the frozen bound."""

    t_grid: np.ndarray
    measures: dict                 # weight -> array over t_grid
    bound_rhs: float
    m: int

    def t_pow_measure(self, weight: str) -> np.ndarray:
        return self.t_grid ** (self.m + 1) * self.measures[weight]

    def rows(self):
        for weight in WEIGHTS:
            meas = self.measures[weight]
            tp = self.t_pow_measure(weight)
            for t, mv, tv in zip(self.t_grid, meas, tp):
                yield weight, t, mv, tv, self.bound_rhs


def distribution_function(field: ExtensionField, t_grid,
                          bound_rhs: float = np.nan) -> DistributionReport:
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) == 0:
        raise ConfigError("t_grid must be nonempty")
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be positive and increasing")
    m = field.params.m
    acc = {w: np.zeros(len(t_grid)) for w in WEIGHTS}
    for cid in sorted(field.cubes):  # deterministic merge order
        ext = field.cubes[cid]
        cells = field.grid_cells(cid)
        f = field.field_for(cid)
        if ext.kind == "bad":
            for w in WEIGHTS:
                acc[w] += _bad_cube_measures(f, t_grid, cells, w)
        else:
            pts, cellvol, norms = _fd_du_norms(f, ext.box, cells, field.delta_n)
            for w in WEIGHTS:
                cw = _cell_weights(pts, cellvol, w, m)
                for i, t in enumerate(t_grid):
                    acc[w][i] += float(np.sum(cw[norms >= t]))
    return DistributionReport(t_grid=t_grid, measures=acc, bound_rhs=bound_rhs,
                              m=m)


def trace_error(field: ExtensionField, u, eps: float, p: float,
                resolution: int = 256) -> float:
    """L^p distance over the window between U(., eps) and the boundary map."""
    params = field.params
    bottom = params.band(params.k_max)[0]
    top = params.band(params.k_min)[1]
    if not bottom <= eps < top:
        raise ConfigError(f"height {eps} outside the resolved band "
                          f"[{bottom:.3g}, {top:.3g})")
    m = params.m
    h = 1.0 / resolution
    if m == 1:
        ys = ((np.arange(resolution) + 0.5) * h)[:, None]
    else:
        ax = (np.arange(resolution) + 0.5) * h
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        ys = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    pts = np.concatenate([ys, np.full((len(ys), 1), eps)], axis=-1)
    uu = field.u_at(pts)
    ub = u.values_at(ys if m > 1 else ys[:, 0])
    d = u.manifold.geodesic_distance(uu, ub)
    return float(np.sum(d**p) * h**m) ** (1.0 / p)
