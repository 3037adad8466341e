"""Dual-branch toy tracker: shared trunk on r, modality branch on m, linear head.

All parameters live in one flat float64 vector; layer weights are views into
it, so a checkpoint is just ``theta.copy()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..metrics import BBox
from ..rng import Xoshiro256

FEATURE_DIM = 8
WIDTH = 16
N_BOX_PARAMS = 4
TRUNK_DEPTH = 2
MAX_BRANCH_DEPTH = 6

FRAME_SIZE = 100.0
CENTER_MID, CENTER_HALF = 50.0, 30.0  # centers in (20, 80)
SIZE_MID, SIZE_HALF = 25.0, 15.0  # sides in (10, 40)


class NumericFailure(ArithmeticError):
    """Raised when training produces a non-finite gradient or parameter."""


def squash(params: np.ndarray) -> np.ndarray:
    """Map raw box parameters (..., 4) to (x, y, w, h) inside the frame."""
    params = np.asarray(params, dtype=np.float64)
    t = np.tanh(params)
    cx = CENTER_MID + CENTER_HALF * t[..., 0]
    cy = CENTER_MID + CENTER_HALF * t[..., 1]
    w = SIZE_MID + SIZE_HALF * t[..., 2]
    h = SIZE_MID + SIZE_HALF * t[..., 3]
    return np.stack([cx - w / 2.0, cy - h / 2.0, w, h], axis=-1)


def unsquash(boxes: np.ndarray) -> np.ndarray:
    """Inverse of :func:`squash`; boxes must lie strictly inside the valid range."""
    boxes = np.asarray(boxes, dtype=np.float64)
    x, y, w, h = np.moveaxis(boxes, -1, 0)
    cx, cy = x + w / 2.0, y + h / 2.0
    return np.stack(
        [
            np.arctanh((cx - CENTER_MID) / CENTER_HALF),
            np.arctanh((cy - CENTER_MID) / CENTER_HALF),
            np.arctanh((w - SIZE_MID) / SIZE_HALF),
            np.arctanh((h - SIZE_MID) / SIZE_HALF),
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class Layer:
    name: str
    fan_in: int
    fan_out: int
    w_offset: int
    b_offset: int


def _build_layout(branch_depth: int) -> tuple[list[Layer], list[Layer], Layer, int]:
    offset = 0

    def dense(name: str, fan_in: int, fan_out: int) -> Layer:
        nonlocal offset
        layer = Layer(name, fan_in, fan_out, offset, offset + fan_in * fan_out)
        offset += fan_in * fan_out + fan_out
        return layer

    trunk = [dense(f"trunk{i}", FEATURE_DIM if i == 0 else WIDTH, WIDTH) for i in range(TRUNK_DEPTH)]
    branch = [dense(f"branch{i}", FEATURE_DIM if i == 0 else WIDTH, WIDTH) for i in range(branch_depth)]
    head = dense("head", 2 * WIDTH, N_BOX_PARAMS)
    return trunk, branch, head, offset


@dataclass
class ToyModel:
    branch_depth: int = 3
    theta: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not 1 <= self.branch_depth <= MAX_BRANCH_DEPTH:
            raise ValueError(f"branch depth must be in 1..{MAX_BRANCH_DEPTH}, got {self.branch_depth}")
        self.trunk, self.branch, self.head, self.n_params = _build_layout(self.branch_depth)
        if self.theta is None:
            self.theta = np.zeros(self.n_params)
        else:
            self.theta = np.array(self.theta, dtype=np.float64)
            if self.theta.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {self.theta.shape}")

    @classmethod
    def initialized(cls, branch_depth: int, rng: Xoshiro256) -> ToyModel:
        """LeCun-normal weights, zero biases."""
        model = cls(branch_depth)
        for layer in model.layers:
            w = rng.normals((layer.fan_in, layer.fan_out)) / np.sqrt(layer.fan_in)
            model.weight(layer)[...] = w
        return model

    @property
    def layers(self) -> list[Layer]:
        return [*self.trunk, *self.branch, self.head]

    def weight(self, layer: Layer, theta: np.ndarray | None = None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        return theta[layer.w_offset : layer.b_offset].reshape(layer.fan_in, layer.fan_out)

    def bias(self, layer: Layer, theta: np.ndarray | None = None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        return theta[layer.b_offset : layer.b_offset + layer.fan_out]

    def with_theta(self, theta: np.ndarray) -> ToyModel:
        return ToyModel(self.branch_depth, theta)

    # forward / backward -------------------------------------------------

    def _forward(self, r: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, list, list]:
        trunk_acts = [r]
        for layer in self.trunk:
            trunk_acts.append(np.tanh(trunk_acts[-1] @ self.weight(layer) + self.bias(layer)))
        branch_acts = [m]
        for layer in self.branch:
            branch_acts.append(np.tanh(branch_acts[-1] @ self.weight(layer) + self.bias(layer)))
        z = np.concatenate([trunk_acts[-1], branch_acts[-1]], axis=1)
        out = z @ self.weight(self.head) + self.bias(self.head)
        return out, trunk_acts, branch_acts

    def predict_params(self, r: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Raw (pre-squash) box parameters for a batch, shape (B, 4)."""
        r = np.atleast_2d(np.asarray(r, dtype=np.float64))
        m = np.atleast_2d(np.asarray(m, dtype=np.float64))
        return self._forward(r, m)[0]

    def predict_boxes(self, r: np.ndarray, m: np.ndarray) -> np.ndarray:
        return squash(self.predict_params(r, m))

    def loss_and_grad(self, r: np.ndarray, m: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
        """Batch-mean MSE and its exact gradient w.r.t. ``theta``."""
        out, trunk_acts, branch_acts = self._forward(r, m)
        diff = out - target
        value = float(np.mean(diff * diff))
        grad = np.zeros_like(self.theta)

        d_out = 2.0 * diff / diff.size
        z = np.concatenate([trunk_acts[-1], branch_acts[-1]], axis=1)
        self._store(grad, self.head, z, d_out)
        d_z = d_out @ self.weight(self.head).T
        self._backprop(grad, self.trunk, trunk_acts, d_z[:, :WIDTH])
        self._backprop(grad, self.branch, branch_acts, d_z[:, WIDTH:])
        return value, grad

    def _store(self, grad: np.ndarray, layer: Layer, inputs: np.ndarray, d_pre: np.ndarray) -> None:
        grad[layer.w_offset : layer.b_offset] = (inputs.T @ d_pre).ravel()
        grad[layer.b_offset : layer.b_offset + layer.fan_out] = d_pre.sum(axis=0)

    def _backprop(self, grad: np.ndarray, layers: list[Layer], acts: list[np.ndarray], d_act: np.ndarray) -> None:
        for i in range(len(layers) - 1, -1, -1):
            d_pre = d_act * (1.0 - acts[i + 1] ** 2)
            self._store(grad, layers[i], acts[i], d_pre)
            if i:
                d_act = d_pre @ self.weight(layers[i]).T


def forward(model: ToyModel, r: np.ndarray, m: np.ndarray) -> BBox:
    """Predicted box for a single (r, m) pair."""
    x, y, w, h = model.predict_boxes(r, m)[0]
    return BBox(float(x), float(y), float(w), float(h))


def loss(pred_params: np.ndarray, target_params: np.ndarray) -> float:
    """Mean squared error in raw box-parameter space."""
    pred = np.asarray(pred_params, dtype=np.float64)
    target = np.asarray(target_params, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def backward(model: ToyModel, r: np.ndarray, m: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of the batch-mean loss w.r.t. every parameter."""
    if len(r) == 0:
        raise ValueError("empty batch")
    return model.loss_and_grad(np.asarray(r, float), np.asarray(m, float), np.asarray(target, float))[1]


def sgd_step(
    theta: np.ndarray,
    grad: np.ndarray,
    lr: float,
    momentum: float = 0.0,
    velocity: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Heavy-ball SGD: ``v = momentum * v + grad; theta -= lr * v``."""
    if not np.all(np.isfinite(grad)):
        raise NumericFailure("numeric failure: non-finite gradient")
    velocity = np.zeros_like(theta) if velocity is None else velocity
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is reported below
        velocity = momentum * velocity + grad
        new_theta = theta - lr * velocity
    if not np.all(np.isfinite(new_theta)):
        raise NumericFailure("numeric failure: non-finite parameters")
    return new_theta, velocity
