"""Residual MLP mapping 12 standardized points in R^3 to barycentric coordinates.

The output layer corrects the logits of the planar (affine) coordinates of
the cloud. Training combines the least-squares residual of fitting a
quadratic triangular Bezier surface at the predicted parameters with a
regression term toward teacher coordinates: those of the straight-edge
triangle reparameterization that best fits the cloud's heights. Everything
is plain numpy with hand-written backpropagation.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor_spline import bernstein_tri_all, bernstein_tri_grad

log = logging.getLogger(__name__)

NPTS = 12
NIN = NPTS * 3
NBLOCKS = 4
STANDARD_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
PRIOR_CLIP = 1e-9
SIGMOID_FLOOR = 1e-12
OUTPUT_INIT_SCALE = 1e-2


class WeightsError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


# --- weights ---------------------------------------------------------------------

def layer_names():
    names = ["input"]
    for b in range(NBLOCKS):
        names += [f"block{b}.fc1", f"block{b}.fc2"]
    return names + ["output"]


def layer_shapes(width):
    shapes = [(width, NIN)] + [(width, width)] * (2 * NBLOCKS) + [(NIN, width)]
    return shapes


@dataclass
class ResNetWeights:
    """Weight matrices (out x in) and biases in forward order."""

    width: int
    W: list
    b: list
    version: int = 1

    def __post_init__(self):
        shapes = layer_shapes(self.width)
        if len(self.W) != len(shapes) or len(self.b) != len(shapes):
            raise WeightsError(f"expected {len(shapes)} layers")
        for W, b, shp in zip(self.W, self.b, shapes):
            if W.shape != shp or b.shape != (shp[0],):
                raise WeightsError(f"layer shape {W.shape} does not match width {self.width}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise WeightsError("non-finite weights")

    @classmethod
    def init(cls, width=256, seed=0):
        """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
        rng = np.random.default_rng(seed)
        W, b = [], []
        for rows, cols in layer_shapes(width):
            lim = 1.0 / np.sqrt(cols)
            W.append(rng.uniform(-lim, lim, (rows, cols)))
            b.append(rng.uniform(-lim, lim, rows))
        # start close to the planar prior
        W[-1] *= OUTPUT_INIT_SCALE
        b[-1] = np.zeros_like(b[-1])
        return cls(width, W, b)

    @classmethod
    def zeros(cls, width):
        shapes = layer_shapes(width)
        return cls(width, [np.zeros(s) for s in shapes], [np.zeros(s[0]) for s in shapes])

    def copy(self):
        return ResNetWeights(self.width, [w.copy() for w in self.W], [b.copy() for b in self.b])

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.W, self.b)])

    def with_flat(self, vec):
        W, b, pos = [], [], 0
        for rows, cols in layer_shapes(self.width):
            W.append(vec[pos:pos + rows * cols].reshape(rows, cols).copy())
            pos += rows * cols
            b.append(vec[pos:pos + rows].copy())
            pos += rows
        return ResNetWeights(self.width, W, b)

    def to_json(self):
        layers = []
        for name, W, b in zip(layer_names(), self.W, self.b):
            layers.append({"name": name, "rows": W.shape[0], "cols": W.shape[1],
                           "weights": [float(v) for v in W.ravel()],
                           "bias": [float(v) for v in b]})
        doc = {"version": self.version, "width": self.width, "layers": layers}
        return _dumps17(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise WeightsError(f"unsupported weight version {doc.get('version')!r}")
        width = int(doc["width"])
        layers = doc["layers"]
        if [l["name"] for l in layers] != layer_names():
            raise WeightsError("unexpected layer names or order")
        W, b = [], []
        for l, shape in zip(layers, layer_shapes(width)):
            w = np.asarray(l["weights"], float)
            bias = np.asarray(l["bias"], float)
            if (l["rows"], l["cols"]) != shape or w.size != shape[0] * shape[1] \
                    or bias.shape != (shape[0],):
                raise WeightsError(f"layer {l['name']}: expected shape {shape}")
            W.append(w.reshape(shape))
            b.append(bias)
        return cls(width, W, b)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


def _dumps17(obj):
    """JSON with every float written to 17 significant digits."""
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dumps17(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dumps17(v) for v in obj) + "]"
    return json.dumps(obj)


def default_weights_path():
    return Path(__file__).with_name("data") / "default_weights.json"


def load_default_weights():
    return ResNetWeights.load(default_weights_path())


# --- standardization ----------------------------------------------------------------

@dataclass(frozen=True)
class Standardization:
    """x_std = A x + shift on the xy components, z_std = (z - z_mean) * scale."""

    A: np.ndarray
    shift: np.ndarray
    z_mean: float
    scale: float

    def apply(self, cloud):
        cloud = np.asarray(cloud, float)
        out = np.empty_like(cloud)
        out[..., :2] = cloud[..., :2] @ self.A.T + self.shift
        out[..., 2] = (cloud[..., 2] - self.z_mean) * self.scale
        return out

    def invert(self, cloud):
        cloud = np.asarray(cloud, float)
        out = np.empty_like(cloud)
        out[..., :2] = np.linalg.solve(self.A, (cloud[..., :2] - self.shift).T).T
        out[..., 2] = cloud[..., 2] / self.scale + self.z_mean
        return out


def standardize(cloud, triangle):
    """Map the triangle onto (0,0), (1,0), (1/2, sqrt(3)/2) and center/scale z."""
    cloud = np.asarray(cloud, float)
    tri = np.asarray(triangle, float)
    if cloud.shape != (NPTS, 3):
        raise ValueError(f"cloud must have shape ({NPTS}, 3)")
    E = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    diam = max(np.linalg.norm(tri[i] - tri[j]) for i in range(3) for j in range(3))
    det = np.linalg.det(E)
    if not np.isfinite(det) or abs(det) <= 2e-12 * diam ** 2:
        raise ValueError("degenerate triangle")
    S = STANDARD_TRIANGLE
    A = np.column_stack([S[1] - S[0], S[2] - S[0]]) @ np.linalg.inv(E)
    shift = S[0] - A @ tri[0]
    rec = Standardization(A, shift, float(cloud[:, 2].mean()), float(np.sqrt(abs(np.linalg.det(A)))))
    return rec.apply(cloud), rec


# --- forward / backward -----------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _prior_logits(X):
    """Sigmoid pre-activations reproducing the planar coordinates of the cloud."""
    lam = np.clip(planar_coords(X.reshape(-1, NPTS, 3)), PRIOR_CLIP, 1.0 - PRIOR_CLIP)
    return np.log(lam / (1.0 - lam)).reshape(-1, NIN)


def _forward(weights, X):
    """X (B, 36) -> (bary (B, 12, 3), cache).

    The output layer predicts a correction to the logits of the planar
    coordinates, so a zero output layer returns the affine parameterization.
    """
    W, b = weights.W, weights.b
    h = X @ W[0].T + b[0]
    cache = [X, h]
    for k in range(NBLOCKS):
        a = h @ W[1 + 2 * k].T + b[1 + 2 * k]
        r = np.maximum(a, 0.0)
        h = h + r @ W[2 + 2 * k].T + b[2 + 2 * k]
        cache += [a, r, h]
    o = h @ W[-1].T + b[-1] + _prior_logits(X)
    # floor keeps the normalization finite when all three saturate
    s = np.maximum(_sigmoid(o), SIGMOID_FLOOR).reshape(-1, NPTS, 3)
    bary = s / s.sum(-1, keepdims=True)
    return bary, (cache, s)


def infer(weights, cloud, triangle=None):
    """Barycentric coordinates (..., 12, 3) for standardized clouds (..., 12, 3).

    With `triangle` given, the single raw cloud is standardized first.
    """
    cloud = np.asarray(cloud, float)
    if triangle is not None:
        cloud, _ = standardize(cloud, triangle)
    lead = cloud.shape[:-2]
    if cloud.shape[-2:] != (NPTS, 3):
        raise ValueError(f"clouds must end in shape ({NPTS}, 3)")
    bary, _ = _forward(weights, cloud.reshape(-1, NIN))
    return bary.reshape(lead + (NPTS, 3))


def fit_residual(cloud, coords):
    """Least-squares fit of a quadratic triangle net to the cloud at `coords`.

    Returns ``(residual, control_points)``; batched over leading axes. The
    minimum-norm solution is used when the collocation matrix is rank deficient.
    """
    P = np.asarray(cloud, float)
    B = bernstein_tri_all(np.asarray(coords, float))
    C = np.linalg.pinv(B) @ P
    R = P - B @ C
    return np.sum(R * R, axis=(-2, -1)), C


def planar_coords(clouds):
    """Barycentric coordinates of the xy components w.r.t. the standard triangle."""
    S = STANDARD_TRIANGLE
    xy = np.asarray(clouds, float)[..., :2] - S[0]
    lam = xy @ np.linalg.inv(np.column_stack([S[1] - S[0], S[2] - S[0]])).T
    return np.concatenate([1.0 - lam.sum(-1, keepdims=True), lam], axis=-1)


# edge control points of a quadratic triangle net: (row in TRI_INDICES order,
# start vertex, end vertex); T110 on T020-T200, T101 on T002-T200, T011 on T002-T020
EDGE_ROWS = ((1, 1, 0), (2, 2, 0), (4, 2, 1))


def frame_fit(coords, xy, vertices=STANDARD_TRIANGLE):
    """Fit the xy data by a triangle net with fixed vertices and straight edges.

    The three edge control points slide along their edges (one parameter each).
    Returns ``(residual, delta, errors, net_points)``; batched over leading axes.
    """
    v = np.asarray(vertices, float)
    Bm = bernstein_tri_all(np.asarray(coords, float))
    base = Bm[..., [0]] * v[0] + Bm[..., [3]] * v[1] + Bm[..., [5]] * v[2]
    cols = []
    for row, a, b in EDGE_ROWS:
        base = base + Bm[..., [row]] * v[a]
        cols.append(Bm[..., [row]] * (v[b] - v[a]))
    A = np.stack(cols, axis=-1)                              # (..., 12, 2, 3)
    A = A.reshape(A.shape[:-3] + (-1, 3))
    rhs = (np.asarray(xy, float)[..., :2] - base).reshape(A.shape[:-1])
    N = np.swapaxes(A, -1, -2) @ A
    N = N + 1e-12 * np.trace(N, axis1=-2, axis2=-1)[..., None, None] * np.eye(3)
    delta = np.linalg.solve(N, (np.swapaxes(A, -1, -2) @ rhs[..., None]))[..., 0]
    err = (A @ delta[..., None])[..., 0] - rhs
    pts = np.empty(delta.shape[:-1] + (6, 2))
    pts[..., 0, :], pts[..., 3, :], pts[..., 5, :] = v
    for (row, a, b), k in zip(EDGE_ROWS, range(3)):
        d = delta[..., k, None]
        pts[..., row, :] = (1 - d) * v[a] + d * v[b]
    return np.sum(err * err, -1), delta, err.reshape(err.shape[:-1] + (-1, 2)), pts


def loss_and_grad(weights, X, target=None, fit=1.0, frame=0.0, supervise=1.0):
    """Mean training loss over the batch and its gradient w.r.t. all parameters.

    The loss is ``fit`` times the quadratic fit residual, plus ``frame`` times
    the residual of :func:`frame_fit`, plus ``supervise * |bary - target|^2``
    when `target` coordinates are given. Returns ``(loss, gW, gb)``.
    """
    nb = X.shape[0]
    bary, (cache, s) = _forward(weights, X)
    P = X.reshape(nb, NPTS, 3)
    loss = np.zeros(nb)
    gbary = np.zeros_like(bary)
    if fit > 0.0:
        B = bernstein_tri_all(bary)
        C = np.linalg.pinv(B) @ P
        R = P - B @ C
        loss = loss + fit * np.sum(R * R, axis=(1, 2))
        gB = -2.0 * fit * R @ np.swapaxes(C, 1, 2) / nb          # (nb, 12, 6)
        if frame > 0.0:
            res, _, err, pts = frame_fit(bary, P)
            loss = loss + frame * res
            gB = gB + 2.0 * frame * err @ np.swapaxes(pts, 1, 2) / nb
        gbary = gbary + np.einsum("npj,npjm->npm", gB, bernstein_tri_grad(bary))
    if target is not None and supervise > 0.0:
        diff = bary - target
        loss = loss + supervise * np.sum(diff * diff, axis=(1, 2))
        gbary = gbary + 2.0 * supervise * diff / nb
    ssum = s.sum(-1, keepdims=True)
    gs = (gbary - np.sum(gbary * bary, -1, keepdims=True)) / ssum
    g = (gs * s * (1 - s)).reshape(nb, NIN)

    W = weights.W
    gW = [None] * len(W)
    gb = [None] * len(W)
    h = cache[-1]
    gW[-1] = g.T @ h
    gb[-1] = g.sum(0)
    gh = g @ W[-1]
    for k in reversed(range(NBLOCKS)):
        h_prev = cache[1 + 3 * k]
        a, r = cache[2 + 3 * k], cache[3 + 3 * k]
        gW[2 + 2 * k] = gh.T @ r
        gb[2 + 2 * k] = gh.sum(0)
        ga = (gh @ W[2 + 2 * k]) * (a > 0)
        gW[1 + 2 * k] = ga.T @ h_prev
        gb[1 + 2 * k] = ga.sum(0)
        gh = gh + ga @ W[1 + 2 * k]
    gW[0] = gh.T @ cache[0]
    gb[0] = gh.sum(0)
    return float(loss.mean()), gW, gb


# --- straight-edge triangle reparameterizations -----------------------------------------

DELTA_RANGE = (0.05, 0.95)


def edge_net(delta):
    """Quadratic nets over the standard triangle with edge points placed by `delta`.

    ``delta`` has shape (..., 3) in :data:`EDGE_ROWS` order; returns (..., 6, 2).
    """
    delta = np.asarray(delta, float)
    S = STANDARD_TRIANGLE
    pts = np.empty(delta.shape[:-1] + (6, 2))
    pts[..., 0, :], pts[..., 3, :], pts[..., 5, :] = S
    for k, (row, a, b) in enumerate(EDGE_ROWS):
        d = delta[..., k, None]
        pts[..., row, :] = (1 - d) * S[a] + d * S[b]
    return pts


def invert_edge_net(delta, xy, iters=30, tol=1e-13):
    """Barycentric preimages (n, m, 3) of points xy (n, m, 2) under ``edge_net(delta)``.

    Newton's method started from the planar coordinates.
    """
    pts = edge_net(delta)[:, None]                                   # (n, 1, 6, 2)
    xy = np.asarray(xy, float)
    b = planar_coords(np.concatenate([xy, xy[..., :1]], axis=-1))
    for _ in range(iters):
        r = (bernstein_tri_all(b)[..., None, :] @ pts)[..., 0, :] - xy
        if np.abs(r).max() < tol:
            break
        J = np.einsum("nmjk,nojc->nmck", bernstein_tri_grad(b), pts)
        J = J[..., 1:] - J[..., :1]                                  # w.r.t. (b1, b2)
        step = np.linalg.solve(J, -r[..., None])[..., 0]
        b[..., 1:] += step
        b[..., 0] = 1.0 - b[..., 1:].sum(-1)
    return b


def height_residual(delta, clouds):
    """Residual vectors (n, 12) of fitting the heights at the edge-net preimages."""
    b = invert_edge_net(delta, clouds[..., :2])
    B = bernstein_tri_all(b)
    z = clouds[..., 2:]
    return (z - B @ (np.linalg.pinv(B) @ z))[..., 0]


def teacher(clouds, iters=15, chunk=4096, step=1e-5):
    """Teacher parameterization of standardized clouds.

    Per cloud, the three edge parameters minimizing :func:`height_residual`
    are found by damped Gauss-Newton with forward-difference Jacobians and
    box constraints. Returns ``(coords, delta)`` with the coordinates of the
    cloud points under the optimal edge net.
    """
    clouds = np.asarray(clouds, float)
    lo, hi = DELTA_RANGE
    coords = np.empty(clouds.shape)
    deltas = np.empty(clouds.shape[:-2] + (3,))
    for i0 in range(0, len(clouds), chunk):
        P = clouds[i0:i0 + chunk]
        n = len(P)
        d = np.full((n, 3), 0.5)
        lam = np.full(n, 1e-3)
        r = height_residual(d, P)
        f = np.sum(r * r, -1)
        for _ in range(iters):
            J = np.stack([(height_residual(d + step * e, P) - r) / step for e in np.eye(3)], -1)
            JtJ = np.swapaxes(J, 1, 2) @ J
            damp = lam * (np.trace(JtJ, axis1=1, axis2=2) / 3 + 1e-12)
            dn = d - np.linalg.solve(JtJ + damp[:, None, None] * np.eye(3),
                                     np.swapaxes(J, 1, 2) @ r[..., None])[..., 0]
            dn = np.clip(dn, lo, hi)
            rn = height_residual(dn, P)
            fn = np.sum(rn * rn, -1)
            ok = fn < f
            d[ok], r[ok], f[ok] = dn[ok], rn[ok], fn[ok]
            lam = np.where(ok, 0.3 * lam, 10.0 * lam)
        deltas[i0:i0 + n] = d
        coords[i0:i0 + n] = invert_edge_net(d, P[..., :2])
    return coords, deltas


# --- training data --------------------------------------------------------------------

def sample_simplex(rng, shape):
    """Uniform barycentric triples by sorting two uniforms; returns shape + (3,)."""
    u = np.sort(rng.random(tuple(shape) + (2,)), axis=-1)
    return np.stack([u[..., 0], u[..., 1] - u[..., 0], 1.0 - u[..., 1]], axis=-1)


def quadratic_net_clouds(n, seed, z_range=1.0):
    """Clouds on random quadratic triangle surfaces, with their parameters.

    Edge control points slide along the straight edges of the standard
    triangle and heights are uniform in [-z_range, z_range]. The generating
    parameters make both :func:`fit_residual` and :func:`frame_fit` vanish.
    """
    rng = np.random.default_rng(seed)
    nets = np.empty((n, 6, 3))
    nets[..., :2] = edge_net(rng.uniform(*DELTA_RANGE, (n, 3)))
    nets[..., 2] = rng.uniform(-z_range, z_range, (n, 6))
    bary = sample_simplex(rng, (n, NPTS))
    P = bernstein_tri_all(bary) @ nets
    P[..., 2] -= P[..., 2].mean(-1, keepdims=True)
    return P, bary


# height spread of training clouds: log10 of the standard deviation
Z_LOG_SPREAD = (-1.5, -0.1)


def _height_family(rng, x, y):
    """Point singularities, their directional derivatives, kinks and quadratics."""
    n = len(x)
    S = STANDARD_TRIANGLE
    kind = rng.integers(0, 4, n)[:, None]
    c = rng.uniform([-0.5, -0.5], [1.5, 1.4], (n, 2))
    at_vertex = rng.random(n) < 0.5
    c[at_vertex] = S[rng.integers(0, 3, at_vertex.sum())]
    a, b = c[:, :1], c[:, 1:]
    q = rng.uniform(-0.35, 0.45, (n, 1))
    eps = 10.0 ** rng.uniform(-6, -2, (n, 1))
    th = rng.uniform(0, 2 * np.pi, (n, 1))
    Q = rng.standard_normal((n, 5))
    off = 0.3 * rng.standard_normal((n, 1))
    r2 = (x - a) ** 2 + (y - b) ** 2 + eps
    lin = (x - a) * np.cos(th) + (y - b) * np.sin(th)
    quad = (Q[:, :1] * x + Q[:, 1:2] * y + Q[:, 2:3] * x * x + Q[:, 3:4] * x * y
            + Q[:, 4:5] * y * y)
    return np.select([kind == 0, kind == 1, kind == 2],
                     [r2 ** q, lin * r2 ** (q - 0.5), np.abs(lin + off) ** (q + 0.55)], quad)


def training_clouds(n, seed):
    """Standardized clouds (n, 12, 3) over random straight-edge triangle nets.

    Points are sampled uniformly in the parameters of a random edge net;
    heights come from a random member of a family of singular and smooth
    functions, centered and scaled to a random spread. Returns the clouds
    and the sampling parameters.
    """
    rng = np.random.default_rng(seed)
    bary = sample_simplex(rng, (n, NPTS))
    xy = bernstein_tri_all(bary) @ edge_net(rng.uniform(*DELTA_RANGE, (n, 3)))
    z = _height_family(rng, xy[..., 0], xy[..., 1])
    z = z - z.mean(1, keepdims=True)
    z = z / (z.std(1, keepdims=True) + 1e-300) * 10.0 ** rng.uniform(*Z_LOG_SPREAD, (n, 1))
    return np.concatenate([xy, z[..., None]], axis=-1), bary


def centroid_residual(clouds):
    """Residual of the all-centroid guess: squared deviations from the mean point."""
    clouds = np.asarray(clouds, float)
    return np.sum((clouds - clouds.mean(-2, keepdims=True)) ** 2, axis=(-2, -1))


# --- training -----------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    samples: int = 50_000
    width: int = 256
    epochs: int = 40
    batch: int = 128
    lr: float = 3e-4
    seed: int = 0
    validation: int = 2_000
    fit: float = 1.0
    supervise: float = 1.0


def mean_loss(weights, X, T, cfg, chunk=1024):
    """Mean objective over a data set (no gradient)."""
    tot = 0.0
    for i in range(0, len(X), chunk):
        bary = infer(weights, X[i:i + chunk])
        loss = cfg.fit * fit_residual(X[i:i + chunk], bary)[0]
        loss = loss + cfg.supervise * np.sum((bary - T[i:i + chunk]) ** 2, axis=(1, 2))
        tot += loss.sum()
    return tot / len(X)


def train(config=TrainConfig(), callback=None):
    """Adam on the fit residual plus teacher regression, cosine learning rate.

    Point order within each cloud is reshuffled for every batch. Returns
    ``(weights, history)`` where history holds per-epoch mean training and
    validation loss (entry 0 is before any update). Raises
    :class:`TrainingDiverged` if the loss becomes non-finite.
    """
    cfg = config
    weights = ResNetWeights.init(cfg.width, cfg.seed)
    s_data, s_val, s_shuffle = np.random.SeedSequence(cfg.seed).spawn(3)
    X, _ = training_clouds(cfg.samples, s_data)
    T, _ = teacher(X)
    Xv, _ = training_clouds(cfg.validation, s_val)
    Tv, _ = teacher(Xv)
    rng = np.random.default_rng(s_shuffle)
    log.info("teacher ready for %d clouds", len(X))

    params = weights.W + weights.b
    m1 = [np.zeros_like(a) for a in params]
    m2 = [np.zeros_like(a) for a in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    history = [(mean_loss(weights, X, T, cfg), mean_loss(weights, Xv, Tv, cfg))]
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr * 0.5 * (1 + np.cos(np.pi * epoch / cfg.epochs))
        perm = rng.permutation(len(X))
        tot = 0.0
        for i in range(0, len(X), cfg.batch):
            idx = perm[i:i + cfg.batch]
            order = np.argsort(rng.random((len(idx), NPTS)), axis=1)[..., None]
            xb = np.take_along_axis(X[idx], order, axis=1)
            tb = np.take_along_axis(T[idx], order, axis=1)
            loss, gW, gb = loss_and_grad(weights, xb.reshape(-1, NIN), tb, cfg.fit,
                                         supervise=cfg.supervise)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}, seed {cfg.seed}")
            step += 1
            for k, g in enumerate(gW + gb):
                m1[k] = beta1 * m1[k] + (1 - beta1) * g
                m2[k] = beta2 * m2[k] + (1 - beta2) * g * g
                params[k] -= lr * (m1[k] / (1 - beta1 ** step)) / (
                    np.sqrt(m2[k] / (1 - beta2 ** step)) + eps)
            tot += loss * len(idx)
        history.append((tot / len(X), mean_loss(weights, Xv, Tv, cfg)))
        log.info("epoch %d train %.6g val %.6g", epoch + 1, *history[-1])
        if callback is not None:
            callback(epoch + 1, history[-1])
    return weights, history
