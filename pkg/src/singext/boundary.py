"""Sampled manifold-valued boundary maps and their global functionals.

A boundary map u : R^m -> N is represented by samples on a uniform grid over
the window [0,1]^m (endpoints included) and is constant, equal to
`far_value`, outside the window.  All double integrals run over the enlarged
window [-R, 1+R]^m on a midpoint pair grid; cells at zero separation
contribute nothing.  The far tail beyond the margin is either dropped or
accounted for with the analytic constant-tail kernel integral (u is exactly
`far_value` there, so only pairs against the window contribute).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (AmbiguousLiftError, ConfigError,
                     InterpolationDegeneracyError, SingextError)
from .manifold import TargetManifold

INTERPOLATIONS = ("embedded_linear", "geodesic")


@dataclass(frozen=True)
class QuadratureSpec:
    """Resolution and window for the pair quadratures."""

    pair_resolution: int = 128
    window_margin: float = 0.25
    tail_mode: str = "drop"

    def __post_init__(self):
        if self.pair_resolution < 2:
            raise ConfigError("pair_resolution must be >= 2")
        if self.window_margin < 0:
            raise ConfigError("window_margin must be >= 0")
        if self.tail_mode not in ("drop", "analytic-constant-tail"):
            raise ConfigError(f"unknown tail_mode {self.tail_mode!r}")


class BoundaryMap:
    """Grid-sampled map into a round sphere, constant outside [0,1]^m."""

    def __init__(self, manifold: TargetManifold, values: np.ndarray,
                 interpolation: str = "embedded_linear", far_value=None):
        values = np.asarray(values, dtype=float)
        if interpolation not in INTERPOLATIONS:
            raise ConfigError(f"unknown interpolation {interpolation!r}")
        if values.ndim == 2:
            self.m = 1
        elif values.ndim == 3:
            self.m = 2
        else:
            raise ConfigError("values must have shape (n, nu) or (n, n, nu)")
        if interpolation == "geodesic" and self.m != 1:
            raise ConfigError("geodesic interpolation is defined for m=1 only")
        if values.shape[-1] != manifold.ambient_dim:
            raise ConfigError(
                f"sample dimension {values.shape[-1]} does not match "
                f"{manifold.kind} (nu={manifold.ambient_dim})")
        if self.m == 2 and values.shape[0] != values.shape[1]:
            raise ConfigError("m=2 grids must be square")
        if values.shape[0] < 2:
            raise ConfigError("need at least 2 samples per axis")
        manifold.check_on_manifold(values.reshape(-1, values.shape[-1]))

        self.manifold = manifold
        self.values = values
        self.n = values.shape[0]
        self.interpolation = interpolation
        corner = values[(0,) * self.m]
        self.far_value = np.asarray(corner if far_value is None else far_value,
                                    dtype=float)
        manifold.check_on_manifold(self.far_value)
        self._check_boundary_matches_far()
        if interpolation == "geodesic":
            self._angles = np.arctan2(values[:, 1], values[:, 0])

    def _check_boundary_matches_far(self):
        v = self.values
        if self.m == 1:
            edge = v[[0, -1]]
        else:
            edge = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
        d = self.manifold.geodesic_distance(edge, self.far_value)
        if np.any(d > 1e-9):
            raise ConfigError(
                "window-boundary samples must equal far_value "
                f"(worst geodesic distance {float(np.max(d)):.3e})")

    # -- evaluation ---------------------------------------------------------

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an array of points with shape (..., m) or (...,) for m=1."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1 and self.m > 1 and pts.shape == (self.m,)
        if self.m == 1 and pts.ndim >= 1 and pts.shape[-1] == 1:
            pts = pts[..., 0]
        flat = np.atleast_1d(pts if self.m == 1 else pts.reshape(-1, self.m))
        if self.m == 1:
            shape = flat.shape
            out = self._eval_1d(flat.ravel()).reshape(shape + (-1,))
            return out.reshape(np.shape(pts) + (self.values.shape[-1],))
        out = self._eval_2d(flat)
        if single:
            return out[0]
        return out.reshape(pts.shape[:-1] + (self.values.shape[-1],))

    def evaluate(self, y):
        """Single-point evaluation; returns a point on N."""
        return self.values_at(np.asarray(y, dtype=float))

    def _eval_1d(self, y: np.ndarray) -> np.ndarray:
        n, v = self.n, self.values
        out = np.broadcast_to(self.far_value, y.shape + (v.shape[-1],)).copy()
        inside = (y >= 0.0) & (y <= 1.0)
        if not np.any(inside):
            return out
        t = y[inside] * (n - 1)
        i0 = np.clip(np.floor(t).astype(int), 0, n - 2)
        f = t - i0
        if self.interpolation == "embedded_linear":
            vals = v[i0] * (1.0 - f)[:, None] + v[i0 + 1] * f[:, None]
            norms = np.linalg.norm(vals, axis=-1)
            if np.any(norms < 1e-14):
                bad = int(i0[np.argmin(norms)])
                raise InterpolationDegeneracyError((bad,))
            out[inside] = vals / norms[:, None]
        else:
            dots = np.sum(v[i0] * v[i0 + 1], axis=-1)
            if np.any(dots <= -1.0 + 1e-12):
                bad = int(i0[np.argmin(dots)])
                raise InterpolationDegeneracyError(
                    (bad,), f"antipodal samples in cell {bad}")
            th0 = self._angles[i0]
            dth = self._angles[i0 + 1] - th0
            dth = (dth + np.pi) % (2.0 * np.pi) - np.pi
            th = th0 + f * dth
            out[inside] = np.stack([np.cos(th), np.sin(th)], axis=-1)
        return out

    def _eval_2d(self, pts: np.ndarray) -> np.ndarray:
        n, v = self.n, self.values
        out = np.broadcast_to(self.far_value, (len(pts), v.shape[-1])).copy()
        inside = np.all((pts >= 0.0) & (pts <= 1.0), axis=-1)
        if not np.any(inside):
            return out
        t = pts[inside] * (n - 1)
        i0 = np.clip(np.floor(t).astype(int), 0, n - 2)
        f = t - i0
        fx, fy = f[:, 0, None], f[:, 1, None]
        v00 = v[i0[:, 0], i0[:, 1]]
        v10 = v[i0[:, 0] + 1, i0[:, 1]]
        v01 = v[i0[:, 0], i0[:, 1] + 1]
        v11 = v[i0[:, 0] + 1, i0[:, 1] + 1]
        vals = (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
                + v01 * (1 - fx) * fy + v11 * fx * fy)
        norms = np.linalg.norm(vals, axis=-1)
        if np.any(norms < 1e-14):
            k = int(np.argmin(norms))
            raise InterpolationDegeneracyError(tuple(i0[k]))
        out[inside] = vals / norms[:, None]
        return out


# -- pair quadrature --------------------------------------------------------

def pair_grid(m: int, quad: QuadratureSpec):
    """Midpoint cell centers of [-R, 1+R]^m and the cell width."""
    M, R = quad.pair_resolution, quad.window_margin
    h = (1.0 + 2.0 * R) / M
    axis = -R + (np.arange(M) + 0.5) * h
    if m == 1:
        return axis[:, None], h
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1), h


@dataclass
class PairTerms:
    """Shared pair-grid data for the three boundary functionals.

    `dist` is the geodesic-distance matrix between grid values; `kernel` holds
    h^{2m}/|y-z|^{2m} with a zero diagonal (after the cell measures it reduces
    to inverse even powers of the index separation, independent of h).
    `tail_dist`/`tail_weight` carry the optional constant-tail correction.
    """

    dist: np.ndarray
    kernel: np.ndarray
    tail_dist: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_weight: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _tail_factor(points: np.ndarray, m: int, R: float) -> np.ndarray:
    """Integral of |y-z|^{-2m} over z outside [-R, 1+R]^m, per grid point y."""
    if m == 1:
        y = points[:, 0]
        return 1.0 / (y + R) + 1.0 / (1.0 + R - y)
    # m = 2: angular quadrature of exit distances to the window boundary
    n_ang = 256
    theta = (np.arange(n_ang) + 0.5) * (2.0 * np.pi / n_ang)
    d = np.stack([np.cos(theta), np.sin(theta)])  # (2, n_ang)
    lo, hi = -R, 1.0 + R
    with np.errstate(divide="ignore"):
        t_hi = (hi - points[:, :, None]) / d[None, :, :]
        t_lo = (lo - points[:, :, None]) / d[None, :, :]
    t_pos = np.where(d[None, :, :] > 0, t_hi, np.where(d[None, :, :] < 0, t_lo, np.inf))
    r_exit = np.min(t_pos, axis=1)  # (P, n_ang)
    return np.sum(1.0 / (2.0 * r_exit**2), axis=1) * (2.0 * np.pi / n_ang)


def pair_terms(u: BoundaryMap, quad: QuadratureSpec) -> PairTerms:
    pts, h = pair_grid(u.m, quad)
    vals = u.values_at(pts if u.m == 2 else pts[:, 0])
    gram = np.clip(vals @ vals.T, -1.0, 1.0)
    dist = np.arccos(gram)
    np.fill_diagonal(dist, 0.0)

    M = quad.pair_resolution
    if u.m == 1:
        idx = np.arange(M, dtype=float)
        sep2 = (idx[:, None] - idx[None, :]) ** 2
    else:
        ij = np.stack(np.meshgrid(np.arange(M), np.arange(M), indexing="ij"),
                      axis=-1).reshape(-1, 2).astype(float)
        di = ij[:, None, :] - ij[None, :, :]
        sep2 = np.sum(di**2, axis=-1)
    with np.errstate(divide="ignore"):
        kernel = sep2 ** (-u.m)
    np.fill_diagonal(kernel, 0.0)

    terms = PairTerms(dist=dist, kernel=kernel)
    if quad.tail_mode == "analytic-constant-tail":
        terms.tail_dist = u.manifold.geodesic_distance(
            vals, np.broadcast_to(u.far_value, vals.shape))
        # factor 2: (inside, outside) and (outside, inside) pairs
        terms.tail_weight = 2.0 * h**u.m * _tail_factor(
            np.atleast_2d(pts.reshape(len(pts), -1)), u.m, quad.window_margin)
    return terms


def truncated_energy(u: BoundaryMap, delta: float, p: float,
                     quad: QuadratureSpec) -> float:
    """Quadrature of the delta-truncated Gagliardo double integral."""
    if delta < 0 or p < 1:
        raise ConfigError("need delta >= 0 and p >= 1")
    t = pair_terms(u, quad)
    total = float(np.sum(np.clip(t.dist - delta, 0.0, None) ** p * t.kernel))
    if t.tail_weight.size:
        total += float(np.sum(np.clip(t.tail_dist - delta, 0.0, None) ** p
                              * t.tail_weight))
    return total


def gagliardo_energy(u: BoundaryMap, p: float, quad: QuadratureSpec) -> float:
    """Critical Gagliardo double integral with the geodesic-distance numerator."""
    return truncated_energy(u, 0.0, p, quad)


def gap_potential(u: BoundaryMap, delta: float, quad: QuadratureSpec) -> float:
    """Quadrature of |y-z|^{-2m} over pairs at geodesic distance >= delta."""
    if delta <= 0:
        raise ConfigError("gap potential needs delta > 0")
    t = pair_terms(u, quad)
    total = float(np.sum((t.dist >= delta) * t.kernel))
    if t.tail_weight.size:
        total += float(np.sum((t.tail_dist >= delta) * t.tail_weight))
    return total


def winding_number(u: BoundaryMap) -> int:
    """Topological degree of an m=1 circle-valued map, by angle summation.

    Includes the wrap through far_value at both window ends, so the sampled
    loop is closed even if the map barely misses the boundary invariant.
    """
    if u.m != 1 or u.manifold.kind != "s1":
        raise ConfigError("winding_number needs m=1 and target s1")
    pts = np.vstack([u.far_value, u.values, u.far_value])
    dots = np.clip(np.sum(pts[:-1] * pts[1:], axis=-1), -1.0, 1.0)
    if np.any(np.arccos(dots) >= np.pi - 1e-9):
        raise AmbiguousLiftError("consecutive samples are antipodal")
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    inc = np.diff(ang)
    inc = (inc + np.pi) % (2.0 * np.pi) - np.pi
    total = float(np.sum(inc)) / (2.0 * np.pi)
    if abs(total - round(total)) > 1e-9:
        raise SingextError(f"winding {total} not an integer within 1e-9")
    return int(round(total))


# -- CSV interface ----------------------------------------------------------

def save_csv(u: BoundaryMap, path) -> None:
    nu = u.values.shape[-1]
    xcols = [f"x{c}" for c in range(nu)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if u.m == 1:
            w.writerow(["i"] + xcols)
            for i, row in enumerate(u.values):
                w.writerow([i] + [format(x, ".17g") for x in row])
        else:
            w.writerow(["i", "j"] + xcols)
            for i in range(u.n):
                for j in range(u.n):
                    w.writerow([i, j] + [format(x, ".17g") for x in u.values[i, j]])


def load_csv(path, interpolation: str = "embedded_linear",
             tube_radius: float = 0.5) -> BoundaryMap:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file, header row is mandatory")
        header = [c.strip() for c in header]
        if header[:2] == ["i", "j"]:
            m, ncoord = 2, len(header) - 2
        elif header[:1] == ["i"]:
            m, ncoord = 1, len(header) - 1
        else:
            raise ConfigError(f"{path}:1: header must start with 'i' or 'i,j'")
        if ncoord not in (2, 3):
            raise ConfigError(f"{path}:1: expected 2 or 3 coordinate columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                idx = tuple(int(c) for c in row[:m])
                coords = [float(c) for c in row[m:m + ncoord]]
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}")
            rows.append((idx, coords))
    if not rows:
        raise ConfigError(f"{path}: no samples")
    n = max(idx[0] for idx, _ in rows) + 1
    shape = (n, ncoord) if m == 1 else (n, n, ncoord)
    values = np.full(shape, np.nan)
    for idx, coords in rows:
        values[idx] = coords
    if np.any(np.isnan(values)):
        raise ConfigError(f"{path}: grid has missing samples")
    manifold = TargetManifold.from_name("s1" if ncoord == 2 else "s2",
                                        tube_radius=tube_radius)
    return BoundaryMap(manifold, values, interpolation=interpolation)
