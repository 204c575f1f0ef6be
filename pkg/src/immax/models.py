"""Scorers: binary linear, multi-class linear and a one-hidden-layer MLP.

Every scorer exposes a flat parameter vector so the trainer can treat
them uniformly. Biases are never penalized and never count toward
``norm()``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import format_real
from .losses import predict_multi

FORMAT_VERSION = 1


class ScorerFormatError(ValueError):
    pass


class Scorer:
    kind = ""
    _names: tuple[str, ...] = ()

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self._names}

    def penalized(self) -> dict[str, bool]:
        return {name: not name.startswith("b") for name in self._names}

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.ravel(a) for a in self.arrays().values()])

    def set_params(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        pos = 0
        for name, arr in self.arrays().items():
            size = np.size(arr)
            setattr(self, name, theta[pos:pos + size].reshape(np.shape(arr)).copy())
            pos += size
        if pos != theta.size:
            raise ValueError("parameter vector has the wrong length")

    def penalty_mask(self) -> np.ndarray:
        pen = self.penalized()
        return np.concatenate(
            [np.full(np.size(a), pen[name]) for name, a in self.arrays().items()]
        )

    def norm(self) -> float:
        theta = self.get_params()
        return float(np.linalg.norm(theta[self.penalty_mask()]))

    def copy(self) -> "Scorer":
        new = object.__new__(type(self))
        new.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v)
                             for k, v in self.__dict__.items()})
        return new

    def scale(self, gamma: float) -> "Scorer":
        """Copy with every parameter multiplied by gamma (linear scorers)."""
        new = self.copy()
        new.set_params(gamma * self.get_params())
        return new

    # -- serialization ------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"immax-scorer {FORMAT_VERSION}", f"kind {self.kind}"]
        lines += [f"{k} {v}" for k, v in self._meta().items()]
        for name, arr in self.arrays().items():
            arr = np.atleast_1d(np.asarray(arr, dtype=np.float64))
            shape = " ".join(str(s) for s in arr.shape)
            lines.append(f"array {name} {shape}")
            lines.append(" ".join(format_real(v) for v in arr.ravel()))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    def _meta(self) -> dict[str, str]:
        return {}


class BinaryLinear(Scorer):
    """h(x) = w . x + b; prediction sign(h) with sign(0) = +1."""

    kind = "BinaryLinear"
    _names = ("w", "b")

    def __init__(self, dim: int, w=None, b: float = 0.0, fit_bias: bool = True):
        self.w = np.zeros(dim) if w is None else np.asarray(w, dtype=np.float64).copy()
        self.b = np.array([float(b)])
        self.fit_bias = fit_bias

    @property
    def num_classes(self) -> int:
        return 2

    def forward(self, X: np.ndarray) -> np.ndarray:
        return X @ self.w + self.b[0]

    def backward(self, X: np.ndarray, dscores: np.ndarray) -> np.ndarray:
        gb = np.array([dscores.sum()]) if self.fit_bias else np.zeros(1)
        return np.concatenate([X.T @ dscores, gb])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Class indices: 0 for sign +1, 1 for sign -1."""
        return np.where(self.forward(X) >= 0, 0, 1)

    def _meta(self):
        return {"fit_bias": str(int(self.fit_bias))}


class MultiLinear(Scorer):
    """h(x, y) = W[y] . x + b[y], i.e. w . (e_y (x) x) for the stacked w."""

    kind = "MultiLinear"
    _names = ("W", "b")

    def __init__(self, dim: int, num_classes: int, W=None, b=None, fit_bias: bool = True):
        self.W = np.zeros((num_classes, dim)) if W is None else np.asarray(W, dtype=np.float64).copy()
        self.b = np.zeros(num_classes) if b is None else np.asarray(b, dtype=np.float64).copy()
        self.fit_bias = fit_bias

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def forward(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T + self.b

    def backward(self, X: np.ndarray, dscores: np.ndarray) -> np.ndarray:
        gb = dscores.sum(axis=0) if self.fit_bias else np.zeros(self.num_classes)
        return np.concatenate([(dscores.T @ X).ravel(), gb])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_multi(self.forward(X))

    def _meta(self):
        return {"fit_bias": str(int(self.fit_bias))}


class MLP(Scorer):
    """One tanh hidden layer; ``out == 1`` gives a binary real-valued scorer."""

    kind = "MLP"
    _names = ("W1", "b1", "W2", "b2")

    def __init__(self, dim: int, hidden: int, out: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.W1 = rng.standard_normal((hidden, dim)) / np.sqrt(dim)
        self.b1 = np.zeros(hidden)
        self.W2 = rng.standard_normal((out, hidden)) / np.sqrt(hidden)
        self.b2 = np.zeros(out)
        self.fit_bias = True

    @property
    def binary(self) -> bool:
        return self.W2.shape[0] == 1

    @property
    def num_classes(self) -> int:
        return 2 if self.binary else self.W2.shape[0]

    def forward(self, X: np.ndarray) -> np.ndarray:
        out = np.tanh(X @ self.W1.T + self.b1) @ self.W2.T + self.b2
        return out[:, 0] if self.binary else out

    def backward(self, X: np.ndarray, dscores: np.ndarray) -> np.ndarray:
        if self.binary:
            dscores = dscores[:, None]
        a = np.tanh(X @ self.W1.T + self.b1)
        gW2 = dscores.T @ a
        gb2 = dscores.sum(axis=0)
        dpre = (dscores @ self.W2) * (1.0 - a ** 2)
        gW1 = dpre.T @ X
        gb1 = dpre.sum(axis=0)
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def predict(self, X: np.ndarray) -> np.ndarray:
        s = self.forward(X)
        if self.binary:
            return np.where(s >= 0, 0, 1)
        return predict_multi(s)


def loads_scorer(text: str) -> Scorer:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("immax-scorer"):
        raise ScorerFormatError("not a scorer file")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise ScorerFormatError(f"unsupported scorer format version {version}")
    meta: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] == "array":
            shape = tuple(int(s) for s in head[2:])
            values = np.array([float(v) for v in lines[i + 1].split()])
            arrays[head[1]] = values.reshape(shape)
            i += 2
        else:
            meta[head[0]] = " ".join(head[1:])
            i += 1
    kind = meta.get("kind")
    fit_bias = bool(int(meta.get("fit_bias", "1")))
    if kind == "BinaryLinear":
        return BinaryLinear(arrays["w"].size, arrays["w"], float(arrays["b"][0]), fit_bias)
    if kind == "MultiLinear":
        c, d = arrays["W"].shape
        return MultiLinear(d, c, arrays["W"], arrays["b"], fit_bias)
    if kind == "MLP":
        hidden, dim = arrays["W1"].shape
        net = MLP(dim, hidden, arrays["W2"].shape[0])
        for name in MLP._names:
            setattr(net, name, arrays[name])
        return net
    raise ScorerFormatError(f"unknown scorer kind {kind!r}")


def load_scorer(path: str | Path) -> Scorer:
    return loads_scorer(Path(path).read_text())
