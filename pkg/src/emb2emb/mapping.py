"""Embedding-to-embedding mappings.

``mlp``        y = W_out sel(W y_prev) per layer, linear output projection
``offsetnet``  y = y_prev + V sel(W y_prev); no projection, no final nonlinearity
``resnet``     y = sel(y_prev + V sel(W y_prev)) then a linear output projection
``meanoffset`` z + alpha * (v2 - v1) from class-mean encodings; nothing is trained
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from . import checkpoint

KINDS = ("mlp", "offsetnet", "resnet", "meanoffset")


class Mapping:
    def __init__(self, kind: str, dim: int, params: dict, layers: int = 1, activation: str = "selu",
                 alpha: float = 1.0):
        if kind not in KINDS:
            raise ValueError(f"unknown mapping kind {kind!r}; expected one of {KINDS}")
        self.kind = kind
        self.dim = dim
        self.layers = layers
        self.activation = activation
        self.alpha = alpha
        self.params = {k: v if isinstance(v, ad.Tensor) else ad.parameter(v) for k, v in params.items()}
        if kind == "meanoffset":
            for t in self.params.values():
                t.requires_grad = False

    def trainable(self) -> list:
        return [t for t in self.params.values() if t.requires_grad]

    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def digest(self) -> str:
        arrays = {k: t.data for k, t in self.params.items()}
        if self.kind == "meanoffset":
            arrays["alpha"] = np.array([self.alpha])
        return checkpoint.params_digest(arrays)

    def copy_params(self) -> dict:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_params(self, arrays: dict) -> None:
        for k, v in arrays.items():
            self.params[k].data[...] = v

    def __call__(self, z):
        z = ad.as_tensor(z)
        if z.shape[-1] != self.dim:
            raise ad.DimensionError(f"{self.kind} mapping expects width {self.dim}, got shape {z.shape}")
        return getattr(self, f"_{self.kind}")(z)

    def _lin(self, y, name):
        return ad.linear(y, self.params[f"{name}_w"], self.params[f"{name}_b"])

    def _act(self, y):
        return ad.activation(y, self.activation)

    def _mlp(self, z):
        y = z
        for j in range(self.layers):
            y = self._act(self._lin(y, f"W{j}"))
        return self._lin(y, "out")

    def _offsetnet(self, z):
        y = z
        for j in range(self.layers):
            y = y + self._lin(self._act(self._lin(y, f"W{j}")), f"V{j}")
        return y

    def _resnet(self, z):
        y = z
        for j in range(self.layers):
            y = self._act(y + self._lin(self._act(self._lin(y, f"W{j}")), f"V{j}"))
        return self._lin(y, "out")

    def _meanoffset(self, z):
        return z + (self.params["v2"] - self.params["v1"]) * self.alpha

    # -- persistence -------------------------------------------------------------

    def to_section(self, name: str = "mapping", extra_meta: dict | None = None) -> checkpoint.Section:
        meta = {"kind": self.kind, "dim": self.dim, "layers": self.layers, "activation": self.activation,
                "alpha": self.alpha, **(extra_meta or {})}
        return checkpoint.Section(name, meta, {k: t.data for k, t in self.params.items()})

    @classmethod
    def from_section(cls, sec: checkpoint.Section) -> "Mapping":
        m = sec.meta
        return cls(m["kind"], m["dim"], {k: np.array(v) for k, v in sec.arrays.items()},
                   layers=m["layers"], activation=m["activation"], alpha=m["alpha"])


def _linear_params(rng, name, dim, zero=False):
    if zero:
        return {f"{name}_w": np.zeros((dim, dim)), f"{name}_b": np.zeros(dim)}
    b = 1.0 / math.sqrt(dim)
    return {f"{name}_w": rng.uniform(-b, b, (dim, dim)), f"{name}_b": rng.uniform(-b, b, dim)}


def make_mapping(kind: str, dim: int, rng=None, layers: int = 1, zero_init_offset: bool = True,
                 activation: str = "selu") -> Mapping:
    """Randomly initialised trainable mapping with hidden size ``dim``.

    With ``zero_init_offset`` the OffsetNet ``V`` maps start at zero, so the
    untrained network is exactly the identity.
    """
    if kind == "meanoffset":
        raise ValueError("mean-offset mappings are fitted with fit_mean_offsets, not initialised")
    if kind not in KINDS:
        raise ValueError(f"unknown mapping kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(0) if rng is None else rng
    params = {}
    for j in range(layers):
        params.update(_linear_params(rng, f"W{j}", dim))
        if kind in ("offsetnet", "resnet"):
            params.update(_linear_params(rng, f"V{j}", dim, zero=zero_init_offset and kind == "offsetnet"))
    if kind in ("mlp", "resnet"):
        params.update(_linear_params(rng, "out", dim))
    return Mapping(kind, dim, params, layers=layers, activation=activation)


def fit_mean_offsets(encode, corpus0, corpus1, alpha: float = 1.0) -> Mapping:
    """Mean-offset mapping from two style corpora.

    ``encode`` maps a list of sentences to an ``N x d`` array (for example
    ``Autoencoder.encode_texts``); ``v1``/``v2`` are the class-0/class-1 means.
    """
    if len(corpus0) == 0 or len(corpus1) == 0:
        raise ValueError("both style corpora must be nonempty")
    v1 = np.asarray(encode(corpus0)).mean(axis=0)
    v2 = np.asarray(encode(corpus1)).mean(axis=0)
    return Mapping("meanoffset", v1.shape[0], {"v1": v1, "v2": v2}, alpha=alpha)


def mean_offset_transform(z, mapping: Mapping, alpha: float | None = None):
    if mapping.kind != "meanoffset":
        raise ValueError(f"expected a mean-offset mapping, got {mapping.kind}")
    if alpha is None:
        return mapping(z)
    z = ad.as_tensor(z)
    return z + (mapping.params["v2"] - mapping.params["v1"]) * alpha


def mlp_forward(z, mapping: Mapping):
    _expect(mapping, "mlp")
    return mapping(z)


def offsetnet_forward(z, mapping: Mapping):
    _expect(mapping, "offsetnet")
    return mapping(z)


def resnet_forward(z, mapping: Mapping):
    _expect(mapping, "resnet")
    return mapping(z)


def _expect(mapping, kind):
    if mapping.kind != kind:
        raise ValueError(f"expected a {kind} mapping, got {mapping.kind}")
