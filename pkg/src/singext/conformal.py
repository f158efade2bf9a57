"""The Mobius diffeomorphism between the unit ball and the half-space.

psi maps the ball B^{m+1} to the closed half-space, sending the boundary
sphere (minus the pole -e) to the boundary hyperplane; psi_inv is its
inverse.  Composing boundary restrictions with a planar map gives the
sphere-domain evaluator, under which the pair energies are conformally
invariant; two independent quadratures of that invariant are the check.
"""

import numpy as np

from .errors import ConfigError, PoleError

POLE_TOL = 1e-8


def _e(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[-1] = 1.0
    return e


def psi(x: np.ndarray) -> np.ndarray:
    """Ball -> half-space: 4(x+e)/|x+e|^2 - 2e.  Pole at x = -e."""
    x = np.asarray(x, dtype=float)
    e = _e(x.shape[-1])
    w = x + e
    n2 = np.sum(w**2, axis=-1)
    if np.any(np.sqrt(n2) < POLE_TOL):
        raise PoleError("psi evaluated at its pole -e")
    return 4.0 * w / n2[..., None] - 2.0 * e


def psi_inv(x: np.ndarray) -> np.ndarray:
    """Half-space -> ball: 4(x+2e)/|x+2e|^2 - e."""
    x = np.asarray(x, dtype=float)
    e = _e(x.shape[-1])
    w = x + 2.0 * e
    n2 = np.sum(w**2, axis=-1)
    if np.any(np.sqrt(n2) < POLE_TOL):
        raise PoleError("psi_inv evaluated at its pole -2e")
    return 4.0 * w / n2[..., None] - e


def psi_height_identity(x: np.ndarray) -> np.ndarray:
    """e . psi(x) - (2 - 2|x|^2)/|x+e|^2; zero on the closed ball."""
    x = np.asarray(x, dtype=float)
    e = _e(x.shape[-1])
    w = x + e
    n2 = np.sum(w**2, axis=-1)
    lhs = np.sum(psi(x) * e, axis=-1)
    return lhs - (2.0 - 2.0 * np.sum(x**2, axis=-1)) / n2


def psi_jacobian(x: np.ndarray) -> np.ndarray:
    """Analytic Jacobian: (4/|x+e|^2)(I - 2 w w^T/|w|^2), a conformal matrix."""
    x = np.asarray(x, dtype=float)
    e = _e(x.shape[-1])
    w = x + e
    n2 = float(np.sum(w**2))
    if np.sqrt(n2) < POLE_TOL:
        raise PoleError("psi Jacobian at the pole")
    dim = x.shape[-1]
    return (4.0 / n2) * (np.eye(dim) - 2.0 * np.outer(w, w) / n2)


class PullbackMap:
    """Evaluator of u o psi restricted to the unit sphere."""

    def __init__(self, u):
        self.u = u
        self.manifold = u.manifold

    def values_at(self, omega: np.ndarray) -> np.ndarray:
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        plane = psi(omega)[:, :-1]
        return self.u.values_at(plane if plane.shape[1] > 1 else plane[:, 0])


class PushforwardMap:
    """Evaluator on the plane of a sphere-domain map (the reverse direction)."""

    def __init__(self, v, manifold):
        self.v = v
        self.manifold = manifold

    def values_at(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        pts = np.concatenate([y, np.zeros((len(y), 1))], axis=-1)
        return self.v.values_at(psi_inv(pts))


_ICO_CACHE: dict = {}


def sphere_nodes(m: int, resolution: int):
    """Quadrature nodes and weights on S^m.

    m=1: uniform midpoint angles (never hitting the pole -e exactly);
    m=2: geodesic icosahedral vertices with equal-area weights, `resolution`
    counting edge subdivisions.
    """
    if m == 1:
        ang = (np.arange(resolution) + 0.5) * (2.0 * np.pi / resolution)
        nodes = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        weights = np.full(resolution, 2.0 * np.pi / resolution)
        return nodes, weights
    if m != 2:
        raise ConfigError("sphere_nodes supports m in {1, 2}")
    key = resolution
    if key not in _ICO_CACHE:
        phi = (1.0 + np.sqrt(5.0)) / 2.0
        verts = []
        for a in (-1.0, 1.0):
            for b in (-phi, phi):
                verts += [(0, a, b), (a, b, 0), (b, 0, a)]
        verts = np.array(verts)
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
        faces = []
        for i in range(12):
            for jj in range(i + 1, 12):
                for kk in range(jj + 1, 12):
                    d = (np.linalg.norm(verts[i] - verts[jj])
                         + np.linalg.norm(verts[jj] - verts[kk])
                         + np.linalg.norm(verts[i] - verts[kk]))
                    if d < 3.3:  # the 20 short-edge triangles
                        faces.append((i, jj, kk))
        pts = {tuple(np.round(v, 12)) for v in verts}
        f = max(1, resolution)
        for (i, jj, kk) in faces:
            for a in range(f + 1):
                for b in range(f + 1 - a):
                    w = (verts[i] * a + verts[jj] * b
                         + verts[kk] * (f - a - b)) / f
                    w /= np.linalg.norm(w)
                    pts.add(tuple(np.round(w, 12)))
        nodes = np.array(sorted(pts))
        _ICO_CACHE[key] = nodes
    nodes = _ICO_CACHE[key]
    weights = np.full(len(nodes), 4.0 * np.pi / len(nodes))
    return nodes, weights


def sphere_pair_functional(v, p: float, resolution: int, m: int = 1,
                           delta: float = 0.0, kind: str = "energy") -> float:
    """Pair quadrature on S^m of the energy/gap/truncated functionals of v."""
    nodes, w = sphere_nodes(m, resolution)
    vals = v.values_at(nodes)
    gram = np.clip(vals @ vals.T, -1.0, 1.0)
    d = np.arccos(gram)
    np.fill_diagonal(d, 0.0)
    diff = nodes[:, None, :] - nodes[None, :, :]
    sep = np.sum(diff**2, axis=-1) ** m
    with np.errstate(divide="ignore"):
        kernel = np.where(sep > 0, 1.0 / sep, 0.0)
    ww = w[:, None] * w[None, :]
    if kind == "energy":
        num = d**p
    elif kind == "gap":
        num = (d >= delta).astype(float)
    elif kind == "truncated":
        num = np.clip(d - delta, 0.0, None) ** p
    else:
        raise ConfigError(f"unknown functional kind {kind!r}")
    return float(np.sum(num * kernel * ww))
