"""Graph convolutions on mesh vertices, a max-pooled mesh encoder and the latent loss.

A zero-neighbour layer computes ``H' = H W`` and then aggregates only the
first ``split_index`` output columns over the graph; the remaining columns
keep each vertex's own value (adjacency to the power zero). With
``split_index == F'`` it is an ordinary graph convolution.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyInputError, ShapeError
from .losses import GradientBundle
from .mesh import adjacency

ACTIVATIONS = ("relu", "elu", "identity")


def activate(z, kind):
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "elu":
        return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))
    raise ConfigError(f"unknown activation {kind!r}")


def activate_grad(z, kind):
    if kind == "identity":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    if kind == "elu":
        return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))
    raise ConfigError(f"unknown activation {kind!r}")


@dataclass
class LayerParams:
    W: np.ndarray
    b: np.ndarray
    split_index: int = None
    activation: str = "elu"

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.split_index is None:
            self.split_index = self.W.shape[1]
        if self.b.shape != (self.W.shape[1],):
            raise ShapeError(f"bias has shape {self.b.shape}, expected ({self.W.shape[1]},)")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def in_features(self):
        return self.W.shape[0]

    @property
    def out_features(self):
        return self.W.shape[1]


def _check(H, A, params):
    if H.ndim != 2 or H.shape[1] != params.in_features:
        raise ShapeError(f"features {H.shape} do not match weights {params.W.shape}")
    if A.shape != (H.shape[0], H.shape[0]):
        raise ShapeError(f"adjacency {A.shape} does not match {H.shape[0]} vertices")


def _matrix(A):
    return getattr(A, "matrix", A)


def gcn_layer(H, A, params):
    """sigma(A H W + b), evaluated as A (H W)."""
    A = _matrix(A)
    _check(H, A, params)
    return activate(A @ (H @ params.W) + params.b, params.activation)


def _zn_pre(H, A, params):
    i = params.split_index
    if not 0 <= i <= params.out_features:
        raise ConfigError(f"split index {i} outside [0, {params.out_features}]")
    Hp = H @ params.W
    if i == params.out_features:
        agg = A @ Hp
    elif i == 0:
        agg = Hp
    else:
        agg = np.concatenate([A @ Hp[:, :i], Hp[:, i:]], axis=1)
    return Hp, agg + params.b


def zn_gcn_layer(H, A, params):
    A = _matrix(A)
    _check(H, A, params)
    _, Z = _zn_pre(H, A, params)
    return activate(Z, params.activation)


def vertex_maxpool(H):
    H = np.asarray(H)
    if H.shape[0] == 0:
        raise EmptyInputError("cannot pool an empty vertex set")
    return H.max(axis=0)


@dataclass
class EncoderParams:
    layers: list
    adjacency_mode: str = "sym"

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_features != b.in_features:
                raise ShapeError(f"layer widths {a.W.shape} -> {b.W.shape} do not chain")

    @property
    def embedding_dim(self):
        return self.layers[-1].out_features

    @property
    def widths(self):
        return [self.layers[0].in_features] + [l.out_features for l in self.layers]

    def as_gcn(self):
        """The same weights with every layer aggregating all of its columns."""
        return EncoderParams([replace(l, split_index=l.out_features) for l in self.layers],
                             self.adjacency_mode)

    def copy(self):
        return EncoderParams([LayerParams(l.W.copy(), l.b.copy(), l.split_index, l.activation)
                              for l in self.layers], self.adjacency_mode)


def init_encoder(widths=(3, 32, 32, 32, 50), seed=0, split_fraction=0.5,
                 activation="elu", adjacency_mode="sym", kind="zn"):
    """Glorot-uniform encoder.

    ``kind='gcn'`` aggregates every column (split index = output width),
    ``kind='zn'`` keeps ``1 - split_fraction`` of the columns local.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for fin, fout in zip(widths, widths[1:]):
        lim = np.sqrt(6.0 / (fin + fout))
        split = fout if kind == "gcn" else int(round(split_fraction * fout))
        layers.append(LayerParams(rng.uniform(-lim, lim, (fin, fout)), np.zeros(fout), split, activation))
    return EncoderParams(layers, adjacency_mode)


@dataclass
class _Cache:
    A: object
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    out: np.ndarray = None
    argmax: np.ndarray = None


def encoder_forward(H, A, encoder):
    A = _matrix(A)
    cache = _Cache(A)
    for params in encoder.layers:
        _check(H, A, params)
        cache.inputs.append(H)
        _, Z = _zn_pre(H, A, params)
        cache.pre.append(Z)
        H = activate(Z, params.activation)
    cache.out = H
    cache.argmax = np.argmax(H, axis=0)
    return vertex_maxpool(H), cache


def encoder_backward(cache, d_embedding, encoder, want_params=False):
    """Backpropagate through pool and layers.

    Returns the gradient w.r.t. the input features and, if requested, a
    list of (dW, db) per layer.
    """
    dH = np.zeros_like(cache.out)
    dH[cache.argmax, np.arange(dH.shape[1])] = d_embedding
    grads = []
    A = cache.A
    for params, H, Z in zip(reversed(encoder.layers), reversed(cache.inputs), reversed(cache.pre)):
        dZ = dH * activate_grad(Z, params.activation)
        i = params.split_index
        if i == 0:
            dHp = dZ
        else:
            dHp = dZ.copy()
            dHp[:, :i] = A.T @ dZ[:, :i]
        if want_params:
            grads.append((H.T @ dHp, dZ.sum(axis=0)))
        dH = dHp @ params.W.T
    grads.reverse()
    return (dH, grads) if want_params else dH


def encode_mesh(mesh, encoder, A=None):
    """Max-pooled embedding of a mesh; vertex coordinates are the input features."""
    if A is None:
        A = adjacency(mesh, encoder.adjacency_mode)
    return encoder_forward(mesh.vertices, A, encoder)[0]


def loss_latent(pred_mesh, target_mesh, encoder, target_embedding=None):
    """Squared embedding distance; gradient w.r.t. the predicted vertex coordinates."""
    if target_embedding is None:
        target_embedding = encode_mesh(target_mesh, encoder)
    A = adjacency(pred_mesh, encoder.adjacency_mode)
    emb, cache = encoder_forward(pred_mesh.vertices, A, encoder)
    r = emb - target_embedding
    d = encoder_backward(cache, 2.0 * r, encoder)
    return GradientBundle(float(r @ r), d, (cache.argmax,))


# ---------------------------------------------------------------------------
# serialization

def save_encoder(encoder, path):
    arrays = {"adjacency_mode": np.array(encoder.adjacency_mode),
              "n_layers": np.array(len(encoder.layers))}
    for k, l in enumerate(encoder.layers):
        arrays[f"W{k}"] = l.W
        arrays[f"b{k}"] = l.b
        arrays[f"split{k}"] = np.array(l.split_index)
        arrays[f"act{k}"] = np.array(l.activation)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_encoder(path):
    with np.load(path) as z:
        layers = [LayerParams(z[f"W{k}"], z[f"b{k}"], int(z[f"split{k}"]), str(z[f"act{k}"]))
                  for k in range(int(z["n_layers"]))]
        return EncoderParams(layers, str(z["adjacency_mode"]))


# ---------------------------------------------------------------------------
# toy pretraining: separate shape families by a linear head on the embedding

def shape_family(kind, count, seed):
    """Randomly scaled and rotated cubes ('cube') or spheres ('sphere')."""
    from scipy.spatial.transform import Rotation

    from .mesh import Mesh, cube, ico_sphere

    rng = np.random.default_rng(seed)
    base = cube() if kind == "cube" else ico_sphere(1, radius=0.5)
    out = []
    for _ in range(count):
        scale = rng.uniform(0.5, 1.2, 3)
        rot = Rotation.random(random_state=rng).as_matrix()
        out.append(Mesh(base.vertices * scale @ rot.T, base.faces))
    return out


def labeled_families(per_family, seed):
    cubes = shape_family("cube", per_family, seed)
    spheres = shape_family("sphere", per_family, seed + 1)
    return [(m, 0) for m in cubes] + [(m, 1) for m in spheres]


def nearest_centroid_accuracy(embeddings, labels, ref_embeddings, ref_labels):
    embeddings, ref_embeddings = np.asarray(embeddings), np.asarray(ref_embeddings)
    labels, ref_labels = np.asarray(labels), np.asarray(ref_labels)
    classes = np.unique(ref_labels)
    cents = np.stack([ref_embeddings[ref_labels == c].mean(axis=0) for c in classes])
    d = ((embeddings[:, None] - cents[None]) ** 2).sum(-1)
    return float((classes[np.argmin(d, axis=1)] == labels).mean())


def separation_ratio(embeddings, labels):
    """Mean within-family over mean between-family embedding distance."""
    e, y = np.asarray(embeddings), np.asarray(labels)
    d = np.sqrt(((e[:, None] - e[None]) ** 2).sum(-1))
    same = y[:, None] == y[None]
    off = ~np.eye(len(y), dtype=bool)
    return float(d[same & off].mean() / d[~same].mean())


def train_toy_encoder(shape_pairs, steps=500, lr=1e-2, seed=0, encoder=None, held_out=None,
                      betas=(0.9, 0.999), eps=1e-8):
    """Train encoder + softmax linear head with Adam on labeled meshes.

    Returns
    -------
    encoder : EncoderParams
    metrics : dict with the final training loss and, when ``held_out`` is
        given, nearest-centroid accuracy and separation ratio on it.
    """
    from .optim import Adam

    if encoder is None:
        encoder = init_encoder(seed=seed)
    encoder = encoder.copy()
    meshes = [m for m, _ in shape_pairs]
    labels = np.array([y for _, y in shape_pairs])
    n_cls = int(labels.max()) + 1
    rng = np.random.default_rng(seed + 7919)
    head_W = rng.normal(0.0, 1.0 / np.sqrt(encoder.embedding_dim), (encoder.embedding_dim, n_cls))
    head_b = np.zeros(n_cls)
    adj = [adjacency(m, encoder.adjacency_mode) for m in meshes]

    params = [p for l in encoder.layers for p in (l.W, l.b)] + [head_W, head_b]
    opt = Adam(lr, betas, eps)
    state = opt.init([p.shape for p in params])
    loss = float("nan")
    for _ in range(steps):
        grads = [np.zeros_like(p) for p in params]
        loss = 0.0
        for m, A, y in zip(meshes, adj, labels):
            emb, cache = encoder_forward(m.vertices, A, encoder)
            logits = emb @ head_W + head_b
            logits = logits - logits.max()
            prob = np.exp(logits) / np.exp(logits).sum()
            loss -= np.log(prob[y])
            dlog = prob.copy()
            dlog[y] -= 1.0
            grads[-2] += np.outer(emb, dlog)
            grads[-1] += dlog
            _, lgrads = encoder_backward(cache, head_W @ dlog, encoder, want_params=True)
            for k, (dW, db) in enumerate(lgrads):
                grads[2 * k] += dW
                grads[2 * k + 1] += db
        loss /= len(meshes)
        steps_ = opt.step(params, [g / len(meshes) for g in grads], state)
        for p, s in zip(params, steps_):
            p -= s
    metrics = {"train_loss": float(loss)}
    if held_out is not None:
        tr = [encode_mesh(m, encoder) for m in meshes]
        te = [encode_mesh(m, encoder) for m, _ in held_out]
        ty = [y for _, y in held_out]
        metrics["heldout_accuracy"] = nearest_centroid_accuracy(te, ty, tr, labels)
        metrics["heldout_separation"] = separation_ratio(te, ty)
    return encoder, metrics
