"""Utility functions: Cobb-Douglas and the input-concave neural network.

Every model evaluates on a single bundle ``(k,)`` or a batch ``(n, k)`` and
exposes gradients with respect to the bundle and to a flat parameter vector.
Models are immutable; ``with_params`` returns a new model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError

ACTIVATIONS = ("concave-tanh", "concave-sigmoid", "concave-log")


# ---------------------------------------------------------------------------
# concave activations

def activation(kind: str, a, delta: float = 0.01):
    """Concave, nondecreasing activation evaluated elementwise."""
    a = np.asarray(a, dtype=float)
    if kind == "concave-tanh":
        return np.where(a >= 0, np.tanh(np.maximum(a, 0)), a)
    if kind == "concave-sigmoid":
        pos = 1.0 / (1.0 + np.exp(-np.maximum(a, 0)))
        return np.where(a >= 0, pos, 0.25 * a + 0.5)
    if kind == "concave-log":
        return np.where(a > 0, np.log(np.maximum(a, 0) + delta), a / delta + np.log(delta))
    raise ValidationError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_deriv(kind: str, a, delta: float = 0.01):
    """Derivative of :func:`activation`; all three are C1 at the kink."""
    a = np.asarray(a, dtype=float)
    if kind == "concave-tanh":
        t = np.tanh(np.maximum(a, 0))
        return np.where(a >= 0, 1.0 - t * t, 1.0)
    if kind == "concave-sigmoid":
        s = 1.0 / (1.0 + np.exp(-np.maximum(a, 0)))
        return np.where(a >= 0, s * (1.0 - s), 0.25)
    if kind == "concave-log":
        return np.where(a > 0, 1.0 / (np.maximum(a, 0) + delta), 1.0 / delta)
    raise ValidationError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def _as_batch(x, k: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != k:
        raise ValidationError(f"expected bundles with {k} goods, got shape {x.shape}")
    return x2, single


# ---------------------------------------------------------------------------
# Cobb-Douglas

@dataclass(frozen=True)
class CobbDouglasModel:
    """``U(x) = prod_j x_j ** theta_j`` with ``theta = softmax(logits)``.

    The flat parameter vector is the logit vector, so gradient steps never
    leave the simplex.
    """

    logits: np.ndarray
    kind: str = field(default="cd", init=False)

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float).copy()
        if logits.ndim != 1 or logits.size < 1 or not np.all(np.isfinite(logits)):
            raise ValidationError("Cobb-Douglas logits must be a finite 1-D vector")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def from_theta(cls, theta) -> "CobbDouglasModel":
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0) or abs(theta.sum() - 1.0) > 1e-9:
            raise ValidationError(f"theta must be positive and sum to one, got {theta}")
        return cls(np.log(theta))

    @property
    def k(self) -> int:
        return self.logits.size

    @property
    def theta(self) -> np.ndarray:
        e = np.exp(self.logits - self.logits.max())
        return e / e.sum()

    @property
    def params(self) -> np.ndarray:
        return self.logits.copy()

    @property
    def n_params(self) -> int:
        return self.k

    def with_params(self, params) -> "CobbDouglasModel":
        return CobbDouglasModel(np.asarray(params, dtype=float))

    def eval(self, x):
        x2, single = _as_batch(x, self.k)
        with np.errstate(divide="ignore"):
            logx = np.log(x2)
        u = np.where(np.any(x2 <= 0, axis=1), 0.0, np.exp(np.where(x2 > 0, logx, 0.0) @ self.theta))
        return float(u[0]) if single else u

    def value_and_grad_x(self, x):
        x2, single = _as_batch(x, self.k)
        u = self.eval(x2)
        g = u[:, None] * self.theta[None, :] / x2
        return (float(u[0]), g[0]) if single else (u, g)

    def grad_x(self, x):
        return self.value_and_grad_x(x)[1]

    def grad_theta(self, x):
        """Partials ``U ln x_j`` with respect to the exponents themselves."""
        x2, single = _as_batch(x, self.k)
        g = self.eval(x2)[:, None] * np.log(x2)
        return g[0] if single else g

    def grad_params(self, x, weights=None):
        """Gradient with respect to the logits.

        With ``weights`` the weighted sum over the batch is returned instead of
        per-bundle rows.
        """
        x2, single = _as_batch(x, self.k)
        gt = self.grad_theta(x2)
        th = self.theta
        g = th[None, :] * (gt - (gt @ th)[:, None])
        if weights is not None:
            return np.asarray(weights, dtype=float) @ g
        return g[0] if single else g

    def to_dict(self) -> dict:
        return {"kind": "cd", "k": self.k, "theta": self.theta.tolist()}


# ---------------------------------------------------------------------------
# Input-concave neural network

@dataclass(frozen=True)
class IcnnModel:
    """Input-concave network with an affine output layer.

    Layer ``l`` computes ``z_{l+1} = h(Wz_l z_l + Wx_l s + b_l)`` on the
    standardized input ``s = input_scale * x + input_shift``; the first
    layer has no ``Wz`` and the last layer skips ``h``.  Nonnegative ``Wz``
    gives concavity, nonnegative ``Wx`` gives monotonicity.
    """

    weights_x: tuple
    weights_z: tuple
    biases: tuple
    activation: str = "concave-log"
    delta: float = 0.01
    input_scale: np.ndarray = None
    input_shift: np.ndarray = None
    kind: str = field(default="icnn", init=False)

    def __post_init__(self):
        wx = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights_x)
        wz = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights_z)
        b = tuple(np.array(v, dtype=float, ndmin=1) for v in self.biases)
        if not wx:
            raise ValidationError("ICNN needs at least one layer")
        if len(wz) != len(wx) - 1 or len(b) != len(wx):
            raise ValidationError("ICNN needs L input weights, L-1 hidden weights and L biases")
        k = wx[0].shape[1]
        for l, w in enumerate(wx):
            if w.shape[1] != k or b[l].shape != (w.shape[0],):
                raise ValidationError(f"layer {l}: inconsistent input weight/bias shapes")
            if l and wz[l - 1].shape != (w.shape[0], wx[l - 1].shape[0]):
                raise ValidationError(f"layer {l}: hidden weight shape {wz[l - 1].shape} mismatched")
        if wx[-1].shape[0] != 1:
            raise ValidationError("output layer must have a single unit")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if not self.delta > 0:
            raise ValidationError("delta must be positive")
        scale = np.ones(k) if self.input_scale is None else np.asarray(self.input_scale, dtype=float)
        shift = np.zeros(k) if self.input_shift is None else np.asarray(self.input_shift, dtype=float)
        if scale.shape != (k,) or shift.shape != (k,) or np.any(scale <= 0):
            raise ValidationError("input_scale must be a positive k-vector and input_shift a k-vector")
        for arr in (*wx, *wz, *b, scale, shift):
            arr.setflags(write=False)
        object.__setattr__(self, "weights_x", wx)
        object.__setattr__(self, "weights_z", wz)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "input_scale", scale)
        object.__setattr__(self, "input_shift", shift)

    @property
    def k(self) -> int:
        return self.weights_x[0].shape[1]

    @property
    def layers(self) -> int:
        return len(self.weights_x)

    def _blocks(self):
        # flat order per layer: Wx_l, Wz_l (l >= 1), b_l
        for l in range(self.layers):
            yield ("x", l), self.weights_x[l]
            if l:
                yield ("z", l), self.weights_z[l - 1]
            yield ("b", l), self.biases[l]

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self._blocks()])

    @property
    def n_params(self) -> int:
        return sum(a.size for _, a in self._blocks())

    def satisfies_constraints(self) -> bool:
        """Whether every ``Wx`` and ``Wz`` entry is nonnegative."""
        return all(np.all(w >= 0) for w in (*self.weights_x, *self.weights_z))

    def weight_mask(self) -> np.ndarray:
        """True for entries constrained nonnegative (every Wx and Wz entry)."""
        return np.concatenate([np.full(a.size, key[0] != "b") for key, a in self._blocks()])

    def with_params(self, params) -> "IcnnModel":
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValidationError(f"expected {self.n_params} parameters, got shape {params.shape}")
        wx, wz, b = [], [], []
        pos = 0
        for (tag, _), a in self._blocks():
            block = params[pos:pos + a.size].reshape(a.shape)
            pos += a.size
            {"x": wx, "z": wz, "b": b}[tag].append(block)
        return replace(self, weights_x=tuple(wx), weights_z=tuple(wz), biases=tuple(b))

    def with_standardization(self, scale, shift) -> "IcnnModel":
        return replace(self, input_scale=np.asarray(scale, dtype=float),
                       input_shift=np.asarray(shift, dtype=float))

    def _forward(self, x2):
        s = x2 * self.input_scale + self.input_shift
        pre, zs = [], []
        z = None
        for l in range(self.layers):
            a = s @ self.weights_x[l].T + self.biases[l]
            if l:
                a = a + z @ self.weights_z[l - 1].T
            pre.append(a)
            zs.append(z)
            if l < self.layers - 1:
                z = activation(self.activation, a, self.delta)
        return s, pre, zs

    def _backward(self, s, pre, zs, want_params: bool, weights=None):
        n = s.shape[0]
        delta_out = np.ones((n, 1)) if weights is None else np.asarray(weights, dtype=float)[:, None]
        grads = {}
        ds = np.zeros_like(s)
        d = delta_out
        for l in range(self.layers - 1, -1, -1):
            ds += d @ self.weights_x[l]
            if want_params:
                if weights is None:
                    grads[("x", l)] = np.einsum("no,ni->noi", d, s)
                    grads[("b", l)] = d
                    if l:
                        grads[("z", l)] = np.einsum("no,ni->noi", d, zs[l])
                else:
                    grads[("x", l)] = d.T @ s
                    grads[("b", l)] = d.sum(axis=0)
                    if l:
                        grads[("z", l)] = d.T @ zs[l]
            if l:
                dz = d @ self.weights_z[l - 1]
                d = dz * activation_deriv(self.activation, pre[l - 1], self.delta)
        return ds * self.input_scale, grads

    def eval(self, x):
        x2, single = _as_batch(x, self.k)
        _, pre, _ = self._forward(x2)
        u = pre[-1][:, 0]
        return float(u[0]) if single else u

    def value_and_grad_x(self, x):
        x2, single = _as_batch(x, self.k)
        s, pre, zs = self._forward(x2)
        gx, _ = self._backward(s, pre, zs, want_params=False)
        u = pre[-1][:, 0]
        return (float(u[0]), gx[0]) if single else (u, gx)

    def grad_x(self, x):
        return self.value_and_grad_x(x)[1]

    def grad_params(self, x, weights=None):
        """Reverse-mode gradient with respect to the flat parameter vector.

        With ``weights`` the weighted sum over the batch is returned, which
        avoids materialising one parameter vector per bundle.
        """
        x2, single = _as_batch(x, self.k)
        s, pre, zs = self._forward(x2)
        _, grads = self._backward(s, pre, zs, want_params=True, weights=weights)
        if weights is not None:
            return np.concatenate([grads[key].ravel() for key, _ in self._blocks()])
        n = x2.shape[0]
        flat = np.concatenate([grads[key].reshape(n, -1) for key, _ in self._blocks()], axis=1)
        return flat[0] if single else flat

    def to_dict(self) -> dict:
        return {
            "kind": "icnn",
            "k": self.k,
            "layers": self.layers,
            "activation": self.activation,
            "delta": self.delta,
            "weights_z": [w.tolist() for w in self.weights_z],
            "weights_x": [w.tolist() for w in self.weights_x],
            "biases": [b.tolist() for b in self.biases],
            "input_scale": self.input_scale.tolist(),
            "input_shift": self.input_shift.tolist(),
        }


UtilityModel = CobbDouglasModel | IcnnModel


# ---------------------------------------------------------------------------
# construction, projection, serialization

def project_weights(model):
    """Clamp every hidden and input weight of an ICNN to be nonnegative."""
    if isinstance(model, CobbDouglasModel):
        return model
    return replace(model,
                   weights_x=tuple(np.maximum(w, 0.0) for w in model.weights_x),
                   weights_z=tuple(np.maximum(w, 0.0) for w in model.weights_z))


def icnn_param_count(k: int, layers: int, hidden: int) -> int:
    """Number of trainable ICNN parameters for ``layers`` dense layers."""
    widths = [hidden] * (layers - 1) + [1]
    total = 0
    prev = None
    for w in widths:
        total += w * k + w + (w * prev if prev else 0)
        prev = w
    return total


def init_model(kind: str = "cd", k: int = 2, layers: int = 3, hidden: int | None = None,
               activation: str = "concave-log", delta: float = 0.01, seed: int = 0,
               deterministic: bool = False):
    """Fresh model; ICNN weights are drawn from U[0, 1/sqrt(fan_in)], biases 0."""
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    rng = np.random.default_rng(seed)
    if kind == "cd":
        theta = np.full(k, 1.0 / k) if deterministic else rng.dirichlet(np.ones(k))
        return CobbDouglasModel(np.log(theta))
    if kind != "icnn":
        raise ValidationError(f"unknown model kind {kind!r}; expected 'cd' or 'icnn'")
    hidden = k if hidden is None else hidden
    if layers < 1 or hidden < 1:
        raise ValidationError("layers and hidden must be positive")
    if activation not in ACTIVATIONS:
        raise ValidationError(f"unknown activation {activation!r}")
    widths = [hidden] * (layers - 1) + [1]
    wx, wz, b = [], [], []
    prev = None
    for w in widths:
        fan_in = k + (prev or 0)
        bound = 1.0 / np.sqrt(fan_in)
        wx.append(rng.uniform(0.0, bound, size=(w, k)))
        if prev:
            wz.append(rng.uniform(0.0, bound, size=(w, prev)))
        b.append(np.zeros(w))
        prev = w
    return IcnnModel(tuple(wx), tuple(wz), tuple(b), activation=activation, delta=delta)


def model_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "cd":
        model = CobbDouglasModel.from_theta(data["theta"])
    elif kind == "icnn":
        model = IcnnModel(
            weights_x=tuple(np.array(w, dtype=float, ndmin=2) for w in data["weights_x"]),
            weights_z=tuple(np.array(w, dtype=float, ndmin=2) for w in data["weights_z"]),
            biases=tuple(np.array(v, dtype=float, ndmin=1) for v in data["biases"]),
            activation=data.get("activation", "concave-log"),
            delta=float(data.get("delta", 0.01)),
            input_scale=data.get("input_scale"),
            input_shift=data.get("input_shift"),
        )
    else:
        raise ValidationError(f"unknown model kind {kind!r}")
    if "k" in data and int(data["k"]) != model.k:
        raise ValidationError(f"model declares k={data['k']} but weights imply k={model.k}")
    return model


def save_model(model, path, **extra) -> None:
    payload = model.to_dict()
    payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path) -> tuple[object, dict]:
    """Model plus any extra top-level fields stored alongside it."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {"kind", "k", "theta", "layers", "activation", "delta", "weights_z",
             "weights_x", "biases", "input_scale", "input_shift"}
    return model_from_dict(data), {k: v for k, v in data.items() if k not in known}
