"""Dense tanh/sigmoid networks with exact input derivatives, plus Adam.

Parameters live in torch tensors so that reverse-mode gradients come from
torch autograd. Input derivatives are propagated forward alongside the
activations (one tangent per input coordinate), which keeps them exact and
differentiable with respect to the parameters: a PDE residual built from
them needs a single reverse sweep.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .exceptions import ShapeMismatch, TapeConsumed

CHECKPOINT_VERSION = 1

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def resolve_dtype(dtype):
    if isinstance(dtype, torch.dtype):
        return dtype
    return _DTYPES[dtype]


def glorot_init(fan_in, fan_out, rng: np.random.Generator):
    """Uniform Glorot matrix of shape (fan_in, fan_out)."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("layer dimensions must be positive")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseNet:
    """Feed-forward net: tanh hidden layers, sigmoid output scaled to [0, scale].

    Inputs are mapped affinely from ``input_bounds`` to [-1, 1] before the
    first layer.
    """

    def __init__(self, layer_sizes, rng=None, input_bounds=None, output_scale=None,
                 dtype="float64"):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}")
        self.dtype = resolve_dtype(dtype)
        rng = np.random.default_rng(rng)
        n_in, n_out = self.layer_sizes[0], self.layer_sizes[-1]
        if input_bounds is None:
            input_bounds = [(-1.0, 1.0)] * n_in
        self.input_bounds = np.asarray(input_bounds, dtype=float).reshape(n_in, 2)
        if output_scale is None:
            output_scale = np.ones(n_out)
        self.output_scale = np.broadcast_to(np.asarray(output_scale, dtype=float), (n_out,)).copy()
        self.params = []
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = torch.tensor(glorot_init(a, b, rng), dtype=self.dtype, requires_grad=True)
            bias = torch.zeros(b, dtype=self.dtype, requires_grad=True)
            self.params += [W, bias]

    @property
    def n_layers(self):
        return len(self.params) // 2

    def _affine_in(self):
        lo, hi = self.input_bounds[:, 0], self.input_bounds[:, 1]
        gain = 2.0 / (hi - lo)
        return (torch.tensor(gain, dtype=self.dtype),
                torch.tensor(-1.0 - lo * gain, dtype=self.dtype))

    def as_tensor(self, X):
        X = torch.as_tensor(np.asarray(X, dtype=float) if not torch.is_tensor(X) else X,
                            dtype=self.dtype)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.layer_sizes[0]:
            raise ShapeMismatch(f"expected {self.layer_sizes[0]} input columns, got {X.shape[1]}")
        return X

    def forward(self, X):
        """Outputs for a batch of inputs, shape (n, n_out)."""
        gain, shift = self._affine_in()
        h = self.as_tensor(X) * gain + shift
        scale = torch.tensor(self.output_scale, dtype=self.dtype)
        for k in range(self.n_layers):
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            h = torch.tanh(z) if k < self.n_layers - 1 else torch.sigmoid(z) * scale
        return h

    __call__ = forward

    def forward_with_jacobian(self, X):
        """Return outputs (n, n_out) and input derivatives (n_in, n, n_out).

        ``J[j]`` holds d(outputs)/d(input j) for every sample.
        """
        gain, shift = self._affine_in()
        X = self.as_tensor(X)
        n, n_in = X.shape
        h = X * gain + shift
        dh = torch.zeros((n_in, n, n_in), dtype=self.dtype)
        for j in range(n_in):
            dh[j, :, j] = gain[j]
        scale = torch.tensor(self.output_scale, dtype=self.dtype)
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W + b
            dz = dh @ W
            if k < self.n_layers - 1:
                h = torch.tanh(z)
                dh = (1.0 - h * h) * dz
            else:
                s = torch.sigmoid(z)
                h = s * scale
                dh = (s * (1.0 - s) * scale) * dz
        return h, dh

    def get_flat(self):
        return np.concatenate([p.detach().cpu().numpy().ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        i = 0
        with torch.no_grad():
            for p in self.params:
                n = p.numel()
                p.copy_(torch.as_tensor(flat[i:i + n].reshape(p.shape), dtype=self.dtype))
                i += n
        if i != flat.size:
            raise ShapeMismatch(f"expected {i} parameters, got {flat.size}")

    def n_params(self):
        return sum(p.numel() for p in self.params)


def input_jacobian(net: DenseNet, X):
    """(d out/dx, d out/dt) for a net with inputs (x, t)."""
    _, J = net.forward_with_jacobian(X)
    return J[0], J[1]


class Tape:
    """A recorded scalar loss that may be swept backwards exactly once."""

    def __init__(self, loss, params):
        if loss.ndim != 0:
            raise ShapeMismatch("a tape records a scalar loss")
        self.loss = loss
        self.params = list(params)
        self.consumed = False

    @property
    def value(self):
        return float(self.loss.detach())


def record(loss_fn, params):
    """Run ``loss_fn()`` and wrap its scalar output in a Tape."""
    return Tape(loss_fn(), params)


def grad_params(tape: Tape):
    """Reverse sweep: gradients of the taped loss for every parameter."""
    if tape.consumed:
        raise TapeConsumed("this tape was already swept")
    tape.consumed = True
    if not tape.loss.requires_grad:
        return [torch.zeros_like(p) for p in tape.params]
    grads = torch.autograd.grad(tape.loss, tape.params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(tape.params, grads)]


def linear_decay(epoch, total_epochs, lr0, floor=1e-2):
    """lr0 * (1 - epoch/total_epochs), never below lr0 * floor."""
    frac = 1.0 - epoch / total_epochs if total_epochs > 0 else 1.0
    return lr0 * max(frac, floor)


@dataclass
class AdamState:
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    floor: float = 1e-2
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def lr(self, epoch, total_epochs):
        return linear_decay(epoch, total_epochs, self.lr0, self.floor)


def adam_step(state: AdamState, params, grads, epoch, total_epochs):
    """In-place bias-corrected Adam update; returns the learning rate used."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [torch.zeros_like(p) for p in params]
        state.v = [torch.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeMismatch("optimizer state does not match the parameter list")
    state.step += 1
    lr = state.lr(epoch, total_epochs)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if p.shape != g.shape or m.shape != p.shape:
                raise ShapeMismatch(f"shape {tuple(g.shape)} vs {tuple(p.shape)}")
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            p.sub_(lr * (m / c1) / (torch.sqrt(v / c2) + state.eps))
    return lr


def save_checkpoint(path, nets, adam: AdamState, epoch, rng: np.random.Generator, extra=None):
    """Write nets, optimizer moments, RNG state and epoch counter to one .npz file."""
    arrays = {}
    meta = {
        "version": CHECKPOINT_VERSION,
        "epoch": int(epoch),
        "adam": {k: getattr(adam, k) for k in ("lr0", "beta1", "beta2", "eps", "floor", "step")},
        "rng": rng.bit_generator.state,
        "nets": [],
        "extra": extra or {},
    }
    for i, net in enumerate(nets):
        meta["nets"].append({
            "layer_sizes": list(net.layer_sizes),
            "input_bounds": net.input_bounds.tolist(),
            "output_scale": net.output_scale.tolist(),
            "dtype": str(net.dtype).replace("torch.", ""),
        })
        for j, p in enumerate(net.params):
            arrays[f"net{i}_p{j}"] = p.detach().numpy()
    for j, (m, v) in enumerate(zip(adam.m, adam.v)):
        arrays[f"adam_m{j}"] = m.numpy()
        arrays[f"adam_v{j}"] = v.numpy()
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns (nets, adam, epoch, rng, extra)."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        nets = []
        for i, spec in enumerate(meta["nets"]):
            net = DenseNet(spec["layer_sizes"], rng=0, input_bounds=spec["input_bounds"],
                           output_scale=spec["output_scale"], dtype=spec["dtype"])
            with torch.no_grad():
                for j, p in enumerate(net.params):
                    p.copy_(torch.from_numpy(z[f"net{i}_p{j}"]))
            nets.append(net)
        adam = AdamState(**meta["adam"])
        n_moments = sum(1 for k in z.files if k.startswith("adam_m"))
        adam.m = [torch.from_numpy(z[f"adam_m{j}"].copy()) for j in range(n_moments)]
        adam.v = [torch.from_numpy(z[f"adam_v{j}"].copy()) for j in range(n_moments)]
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    return nets, adam, meta["epoch"], rng, meta["extra"]
