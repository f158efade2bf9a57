"""Scale-adic cube families on the half-space.

At scale k the horizontal grid has edge tau*lam^(-k), shifted by h_k edges;
the attached half-space cubes occupy the height band
[tau*lam^(-k)/(lam-1), tau*lam^(-(k-1))/(lam-1)], whose thickness equals the
edge, so every cube is a true (m+1)-cube.  Cubes are half-open
(lower-inclusive) for point location; the closed cubes of the continuum
picture overlap only on null sets, so a convention is needed for queries.
"""

import csv
from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, OutOfBandError, OutOfRangeError


class CubeId(NamedTuple):
    k: int
    j: tuple


@dataclass(frozen=True)
class CubeFamilyParams:
    """Grid family: ratio lam >= 2, scale factor tau in [1, lam], shifts h_k."""

    m: int
    lam: float
    tau: float
    h: object  # (m,) array broadcast to all scales, or mapping k -> (m,) array
    k_min: int
    k_max: int

    def __post_init__(self):
        if self.lam < 2:
            raise ConfigError("lam must be >= 2")
        if not 1.0 <= self.tau <= self.lam:
            raise ConfigError("tau must lie in [1, lam]")
        if self.k_min > self.k_max:
            raise ConfigError("empty scale range")

    def shift(self, k: int) -> np.ndarray:
        h = self.h[k] if isinstance(self.h, dict) else self.h
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if h.shape != (self.m,) or np.any(h < 0) or np.any(h > 1):
            raise ConfigError(f"h_k must lie in [0,1]^m, got {h}")
        return h

    def edge(self, k: int) -> float:
        return self.tau * self.lam ** (-k)

    def band(self, k: int) -> tuple[float, float]:
        e = self.edge(k)
        return e / (self.lam - 1.0), e * self.lam / (self.lam - 1.0)

    def scales(self):
        return range(self.k_min, self.k_max + 1)


class Box(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray


def cube_geometry(params: CubeFamilyParams, cid: CubeId) -> Box:
    """Axis-aligned box of the cube; horizontal extent then the height band."""
    if not params.k_min <= cid.k <= params.k_max:
        raise OutOfRangeError(f"scale {cid.k} outside "
                              f"[{params.k_min}, {params.k_max}]")
    e = params.edge(cid.k)
    h = params.shift(cid.k)
    j = np.asarray(cid.j, dtype=float)
    bottom, top = params.band(cid.k)
    lo = np.append(e * (j + h), bottom)
    hi = np.append(e * (j + h + 1.0), top)
    return Box(lo=lo, hi=hi)


def locate(params: CubeFamilyParams, x) -> CubeId:
    """Unique cube owning x under the lower-inclusive half-open convention."""
    x = np.asarray(x, dtype=float)
    xp, height = x[:-1], x[-1]
    if height <= 0:
        raise ConfigError("locate needs a point of the open half-space")
    lam, tau = params.lam, params.tau
    g = np.log(height * (lam - 1.0) / tau) / np.log(lam)
    k = int(np.ceil(-g))
    for cand in (k, k - 1, k + 1):  # float-safe band adjustment
        bottom, top = params.band(cand)
        if bottom <= height < top:
            k = cand
            break
    else:
        raise OutOfBandError(height, int(np.clip(k, params.k_min, params.k_max)))
    if not params.k_min <= k <= params.k_max:
        raise OutOfBandError(height, int(np.clip(k, params.k_min, params.k_max)))
    e = params.edge(k)
    h = params.shift(k)
    j = np.floor(xp / e - h).astype(int)
    for axis in range(params.m):  # float-safe half-open adjustment
        for _ in range(2):
            lo = e * (j[axis] + h[axis])
            if xp[axis] < lo:
                j[axis] -= 1
            elif xp[axis] >= lo + e:
                j[axis] += 1
            else:
                break
    return CubeId(k=k, j=tuple(int(v) for v in j))


def enumerate_window(params: CubeFamilyParams, window) -> list:
    """All cubes in the scale range whose half-open footprint meets the
    half-open window; sorted by (k, lexicographic j), no duplicates."""
    window = np.atleast_2d(np.asarray(window, dtype=float))
    if window.shape != (params.m, 2):
        raise ConfigError("window must be (m, 2) of [lo, hi] rows")
    out = []
    for k in params.scales():
        e = params.edge(k)
        h = params.shift(k)
        ranges = []
        for axis in range(params.m):
            w_lo, w_hi = window[axis]
            j0 = int(np.floor(w_lo / e - h[axis])) - 1
            j1 = int(np.ceil(w_hi / e - h[axis])) + 1
            ok = [j for j in range(j0, j1 + 1)
                  if e * (j + h[axis]) < w_hi and e * (j + h[axis] + 1.0) > w_lo]
            ranges.append(ok)
        for j in product(*ranges):
            out.append(CubeId(k=k, j=tuple(j)))
    return out


class BoundarySamples(NamedTuple):
    """Deterministic lattice on the cube boundary, each node exactly once.

    Masks select the face families: `bottom` is the longitudinal face,
    `lateral` the 2m transversal faces, `top` the ceiling; shared edges and
    corners belong to every face touching them.
    """

    points: np.ndarray  # (P, m+1)
    bottom: np.ndarray
    top: np.ndarray
    lateral: np.ndarray
    intervals_per_edge: int


def _intervals(density: float, edge: float) -> int:
    # power of two so that doubling the density refines into a superset
    q = max(2.0, density * edge)
    return int(2 ** int(np.ceil(np.log2(q))))


def sample_boundary(params: CubeFamilyParams, cid: CubeId,
                    density: float) -> BoundarySamples:
    box = cube_geometry(params, cid)
    e = float(box.hi[0] - box.lo[0])
    q = _intervals(density, e)
    dim = params.m + 1
    axes = [np.arange(q + 1)] * dim
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    on_face = (idx == 0) | (idx == q)
    keep = np.any(on_face, axis=1)
    idx = idx[keep]
    pts = box.lo[None, :] + idx / q * (box.hi - box.lo)[None, :]
    vert = idx[:, -1]
    horiz_face = np.any((idx[:, :-1] == 0) | (idx[:, :-1] == q), axis=1)
    return BoundarySamples(points=pts, bottom=vert == 0, top=vert == q,
                           lateral=horiz_face, intervals_per_edge=q)


@dataclass(frozen=True)
class FaceSet:
    """Geometry of the boundary faces of one cube."""

    parallel: Box          # bottom face, zero vertical extent
    perpendicular: tuple   # 2m lateral faces
    top: Box


def face_set(params: CubeFamilyParams, cid: CubeId) -> FaceSet:
    box = cube_geometry(params, cid)
    bottom, ceil_h = box.lo[-1], box.hi[-1]
    par = Box(lo=box.lo.copy(), hi=np.append(box.hi[:-1], bottom))
    top = Box(lo=np.append(box.lo[:-1], ceil_h), hi=box.hi.copy())
    lats = []
    for axis in range(params.m):
        for side in (0, 1):
            lo, hi = box.lo.copy(), box.hi.copy()
            val = box.lo[axis] if side == 0 else box.hi[axis]
            lo[axis] = hi[axis] = val
            lats.append(Box(lo=lo, hi=hi))
    return FaceSet(parallel=par, perpendicular=tuple(lats), top=top)


def export_cubes_csv(params: CubeFamilyParams, ids, path) -> None:
    m = params.m
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        jcols = [f"j{a}" for a in range(m)]
        loc = [f"x_lo{a}" for a in range(m + 1)]
        hic = [f"x_hi{a}" for a in range(m + 1)]
        w.writerow(["k"] + jcols + loc + hic)
        for cid in ids:
            box = cube_geometry(params, cid)
            w.writerow([cid.k] + list(cid.j)
                       + [format(v, ".12g") for v in box.lo]
                       + [format(v, ".12g") for v in box.hi])
