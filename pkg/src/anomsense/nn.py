"""Three-layer ReLU MLPs with hand-written backprop and Adam.

Two heads: ``"softmax"`` (actor, probability vector over processes) and
``"scalar"`` (critic, value estimate). Inputs are single 1-d vectors; batching
is not needed for fully online training.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class MLP:
    """input -> hidden -> hidden -> output, ReLU between affine layers.

    All parameters live in one flat buffer ``theta``; ``weights``/``biases`` are
    views into it and gradients come back in the same flat layout.
    """

    def __init__(self, weights, biases, head):
        if head not in ("softmax", "scalar"):
            raise ValueError(f"unknown head {head!r}")
        if len(weights) != 3 or len(biases) != 3:
            raise ValueError("expected three affine layers")
        weights = [np.asarray(w, dtype=float) for w in weights]
        biases = [np.asarray(b, dtype=float) for b in biases]
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("layer shapes are inconsistent")
        for w0, w1 in zip(weights, weights[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ValueError("layer widths do not chain")
        if head == "scalar" and weights[-1].shape[1] != 1:
            raise ValueError("scalar head needs output width 1")
        self.head = head
        self.sizes = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        self.theta = np.concatenate([a.ravel() for w, b in zip(weights, biases) for a in (w, b)])
        self.weights, self.biases = self._views(self.theta)

    def _views(self, flat):
        weights, biases, at = [], [], 0
        for n_in, n_out in zip(self.sizes, self.sizes[1:]):
            weights.append(flat[at:at + n_in * n_out].reshape(n_in, n_out))
            at += n_in * n_out
            biases.append(flat[at:at + n_out])
            at += n_out
        return weights, biases

    def split(self, flat):
        """[W1, b1, W2, b2, W3, b3] views of a flat vector laid out like ``theta``."""
        weights, biases = self._views(flat)
        return [a for pair in zip(weights, biases) for a in pair]

    @classmethod
    def init(cls, n_in, hidden, n_out, head, rng):
        sizes = [n_in, hidden, hidden, n_out]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, head)

    @classmethod
    def zeros(cls, n_in, hidden, n_out, head):
        sizes = [n_in, hidden, hidden, n_out]
        return cls([np.zeros((a, b)) for a, b in zip(sizes, sizes[1:])], [np.zeros(b) for b in sizes[1:]], head)

    @property
    def params(self):
        return self.split(self.theta)

    def copy(self):
        return MLP(self.weights, self.biases, self.head)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.theta)))

    def forward(self, x):
        """Pre-head output and the cache needed by ``backward``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.sizes[0],):
            raise ValueError(f"input shape {x.shape} does not match width {self.sizes[0]}")
        w1, w2, w3 = self.weights
        b1, b2, b3 = self.biases
        z1 = x @ w1 + b1
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ w2 + b2
        h2 = np.maximum(z2, 0.0)
        out = h2 @ w3 + b3
        return out, (x, z1, h1, z2, h2)

    def backward(self, cache, upstream):
        """Flat gradient of ``upstream . output`` with respect to ``theta``."""
        x, z1, h1, z2, h2 = cache
        upstream = np.asarray(upstream, dtype=float).reshape(self.sizes[-1])
        grad = np.empty_like(self.theta)
        g_w1, g_b1, g_w2, g_b2, g_w3, g_b3 = self.split(grad)
        w1, w2, w3 = self.weights
        np.outer(h2, upstream, out=g_w3)
        g_b3[:] = upstream
        np.multiply(w3 @ upstream, z2 > 0, out=g_b2)
        np.outer(h1, g_b2, out=g_w2)
        np.multiply(w2 @ g_b2, z1 > 0, out=g_b1)
        np.outer(x, g_b1, out=g_w1)
        return grad


def softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_head(params, head):
    if params.head != head:
        raise ValueError(f"expected a {head} network, got {params.head}")


def forward_actor(params: MLP, belief) -> np.ndarray:
    _check_head(params, "softmax")
    logits, _ = params.forward(belief)
    return softmax(logits)


def forward_critic(params: MLP, x) -> float:
    _check_head(params, "scalar")
    out, _ = params.forward(x)
    return float(out[0])


def backward(params: MLP, x, upstream):
    _, cache = params.forward(x)
    return params.backward(cache, upstream)


def grad_log_prob(params: MLP, belief, action: int):
    """Flat gradient of log mu_action(belief), plus the action probabilities."""
    _check_head(params, "softmax")
    logits, cache = params.forward(belief)
    if not 0 <= action < logits.size:
        raise IndexError(f"action {action} outside 0..{logits.size - 1}")
    probs = softmax(logits)
    upstream = -probs
    upstream[action] += 1.0
    return params.backward(cache, upstream), probs


def critic_input(belief, prev_belief, r):
    return np.concatenate([belief, prev_belief, [r]])


class Adam:
    """Bias-corrected Adam over a flat parameter vector."""

    def __init__(self, theta, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros_like(theta)
        self.v = np.zeros_like(theta)

    def step(self, theta, grad, direction="descend"):
        """Update ``theta`` in place. ``direction="ascend"`` climbs the gradient."""
        if direction not in ("ascend", "descend"):
            raise ValueError(f"unknown direction {direction!r}")
        if grad.shape != theta.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match {theta.shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        self.t += 1
        tmp = np.multiply(grad, 1.0 - self.beta1)
        self.m *= self.beta1
        self.m += tmp
        np.multiply(grad, grad, out=tmp)
        tmp *= 1.0 - self.beta2
        self.v *= self.beta2
        self.v += tmp
        c1 = 1.0 - self.beta1 ** self.t
        c2 = np.sqrt(1.0 - self.beta2 ** self.t)
        # bias correction folded into the step size and eps, algebraically the textbook update
        np.sqrt(self.v, out=tmp)
        tmp += self.eps * c2
        np.divide(self.m, tmp, out=tmp)
        tmp *= self.lr * c2 / c1
        if direction == "ascend":
            theta += tmp
        else:
            theta -= tmp
        return theta

    def state_dict(self):
        return {"kind": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    def load_state_dict(self, d):
        self.lr, self.beta1, self.beta2, self.eps, self.t = d["lr"], d["beta1"], d["beta2"], d["eps"], d["t"]
        self.m = np.array(d["m"], dtype=float)
        self.v = np.array(d["v"], dtype=float)


class SGD:
    """Plain gradient step; used to check the actor update without Adam's rescaling."""

    def __init__(self, theta, lr):
        self.lr = lr
        self.t = 0

    def step(self, theta, grad, direction="descend"):
        self.t += 1
        if direction == "ascend":
            theta += self.lr * grad
        else:
            theta -= self.lr * grad
        return theta

    def state_dict(self):
        return {"kind": "sgd", "lr": self.lr, "t": self.t}


def network_to_dict(net: MLP):
    return {"head": net.head, "sizes": net.sizes, "theta": net.theta.tolist()}


def network_from_dict(d) -> MLP:
    net = MLP.zeros(*d["sizes"][:2], d["sizes"][3], d["head"])
    if d["sizes"] != net.sizes or len(d["theta"]) != net.theta.size:
        raise ValueError("checkpoint network shape mismatch")
    net.theta[:] = d["theta"]
    return net


def save_checkpoint(path, networks: dict, optimizers: dict, config_hash: str, extra=None):
    """Write networks and optimizer states as JSON; floats keep full double precision."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "networks": {k: network_to_dict(v) for k, v in networks.items()},
        "optimizers": {k: v.state_dict() for k, v in optimizers.items()},
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {k: network_from_dict(v) for k, v in doc["networks"].items()}
    opts = {}
    for k, state in doc["optimizers"].items():
        if state["kind"] == "adam":
            opt = Adam(nets[k].theta, state["lr"])
            opt.load_state_dict(state)
        else:
            opt = SGD(nets[k].theta, state["lr"])
            opt.t = state["t"]
        opts[k] = opt
    return nets, opts, doc
