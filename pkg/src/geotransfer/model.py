"""Feature projector G (MLP) and linear softmax classifier C.

Parameters live in a flat ``dict[str, ndarray]`` so the optimizer, the
checkpoint writer and the finite-difference tests can all walk them the
same way.  Projector layers are ``W0, b0, W1, b1, ...``; the classifier is
``Wc, bc``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import ContractError

CHECKPOINT_FORMAT = "geotransfer-model/1"

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a, h: 1.0 - h * h),
    "relu": (lambda a: np.maximum(a, 0.0), lambda a, h: (a > 0).astype(float)),
    "linear": (lambda a: a, lambda a, h: np.ones_like(a)),
}


@dataclass
class ProjectorParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    normalize: bool = True
    output_activation: str = "linear"

    def __post_init__(self):
        for act in (self.activation, self.output_activation):
            if act not in _ACTIVATIONS:
                raise ContractError(f"unknown activation {act!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractError("projector needs one bias per weight matrix, at least one layer")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ContractError("projector layer sizes do not chain")
        for W, b in zip(self.weights, self.biases):
            if b.shape != (W.shape[0],):
                raise ContractError("bias length must match layer output")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]


@dataclass
class ClassifierParams:
    W: np.ndarray
    b: np.ndarray


@dataclass
class Model:
    projector: ProjectorParams
    classifier: ClassifierParams

    @property
    def n_classes(self) -> int:
        return self.classifier.W.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (W, b) in enumerate(zip(self.projector.weights, self.projector.biases)):
            out[f"W{i}"], out[f"b{i}"] = W, b
        out["Wc"], out["bc"] = self.classifier.W, self.classifier.b
        return out

    def with_params(self, params: dict[str, np.ndarray]) -> "Model":
        L = len(self.projector.weights)
        proj = ProjectorParams(
            [params[f"W{i}"] for i in range(L)], [params[f"b{i}"] for i in range(L)],
            self.projector.activation, self.projector.normalize, self.projector.output_activation,
        )
        return Model(proj, ClassifierParams(params["Wc"], params["bc"]))

    def copy(self) -> "Model":
        return self.with_params({k: v.copy() for k, v in self.params().items()})


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def init_model(input_dim: int, n_classes: int, hidden=(64,), feature_dim: int = 3,
               activation: str = "tanh", normalize: bool = True, seed: int = 0,
               output_activation: str = "linear") -> Model:
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, feature_dim]
    weights = [glorot(rng, o, i) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(o) for o in sizes[1:]]
    proj = ProjectorParams(weights, biases, activation, normalize, output_activation)
    clf = ClassifierParams(glorot(rng, n_classes, feature_dim), np.zeros(n_classes))
    return Model(proj, clf)


@dataclass
class Cache:
    X: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)
    out: np.ndarray | None = None
    norms: np.ndarray | None = None
    Z: np.ndarray | None = None


def forward_features(params: ProjectorParams, X) -> tuple[np.ndarray, Cache]:
    """Map ``D x n`` inputs to ``d x n`` features.

    Hidden layers use ``activation`` and the last layer ``output_activation``.
    With ``params.normalize`` each output column is scaled to unit length
    (zero columns stay zero).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != params.sizes[0]:
        raise ContractError(f"expected {params.sizes[0]} input rows, got shape {X.shape}")
    act = _ACTIVATIONS[params.activation][0]
    out_act = _ACTIVATIONS[params.output_activation][0]
    cache = Cache(X)
    H = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        A = W @ H + b[:, None]
        cache.pre.append(A)
        H = out_act(A) if i == last else act(A)
        cache.post.append(H)
    cache.out = H
    if params.normalize:
        norms = np.linalg.norm(H, axis=0)
        cache.norms = norms
        safe = np.where(norms > 0, norms, 1.0)
        H = H / safe
    cache.Z = H
    return H, cache


def classifier_logits(params: ClassifierParams, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[0] != params.W.shape[1]:
        raise ContractError(f"expected {params.W.shape[1]} feature rows, got {Z.shape[0]}")
    return params.W @ Z + params.b[:, None]


def forward_classifier(params: ClassifierParams, Z) -> np.ndarray:
    """Column-wise softmax of the classifier logits."""
    logits = classifier_logits(params, Z)
    logits = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=0, keepdims=True)


def backward(model: Model, cache: Cache | None, grad_Z, grad_logits) -> dict[str, np.ndarray]:
    """Chain rule through C and G.

    ``grad_Z`` is the direct gradient with respect to the (normalized)
    features and ``grad_logits`` the gradient with respect to the classifier
    logits; the classifier's contribution to the feature gradient is added
    here.
    """
    if cache is None or cache.Z is None:
        raise ContractError("backward needs the cache from forward_features")
    proj, clf = model.projector, model.classifier
    grads: dict[str, np.ndarray] = {}
    Z = cache.Z
    gl = np.asarray(grad_logits, dtype=np.float64)
    grads["Wc"] = gl @ Z.T
    grads["bc"] = gl.sum(axis=1)
    gZ = np.asarray(grad_Z, dtype=np.float64) + clf.W.T @ gl

    if proj.normalize:
        norms = cache.norms
        safe = np.where(norms > 0, norms, 1.0)
        radial = np.sum(Z * gZ, axis=0)
        g = (gZ - Z * radial) / safe
        g[:, norms == 0] = 0.0
    else:
        g = gZ

    dact = _ACTIVATIONS[proj.activation][1]
    dout = _ACTIVATIONS[proj.output_activation][1]
    last = len(proj.weights) - 1
    for i in range(last, -1, -1):
        g = g * (dout if i == last else dact)(cache.pre[i], cache.post[i])
        H_in = cache.X if i == 0 else cache.post[i - 1]
        grads[f"W{i}"] = g @ H_in.T
        grads[f"b{i}"] = g.sum(axis=1)
        if i > 0:
            g = proj.weights[i].T @ g
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One ADAM update with coupled L2 decay; returns (new_params, state).

    The state's moment dictionaries are updated in place.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    new = {}
    for name, p in params.items():
        g = grads[name] + state.weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        new[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new, state


def save_checkpoint(model: Model, path) -> None:
    """JSON checkpoint; arrays are stored row-major with explicit shapes."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "layer_sizes": model.projector.sizes,
        "n_classes": model.n_classes,
        "activation": model.projector.activation,
        "output_activation": model.projector.output_activation,
        "normalize": model.projector.normalize,
        "params": {
            name: {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}
            for name, a in model.params().items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> Model:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    arrays = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    L = len(doc["layer_sizes"]) - 1
    proj = ProjectorParams(
        [arrays[f"W{i}"] for i in range(L)], [arrays[f"b{i}"] for i in range(L)],
        doc["activation"], bool(doc["normalize"]), doc.get("output_activation", "linear"),
    )
    model = Model(proj, ClassifierParams(arrays["Wc"], arrays["bc"]))
    if model.projector.sizes != doc["layer_sizes"] or model.n_classes != doc["n_classes"]:
        raise ContractError(f"{path}: layer sizes disagree with stored arrays")
    return model
