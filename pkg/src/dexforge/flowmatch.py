"""Conditional flow matching at desk scale.

Trains a small dense network v(A_tau, tau, obs) to match the target field
u = A - eps along the linear-Gaussian path A_tau = tau*A + (1-tau)*eps, then
generates action chunks by forward-Euler integration from A0 ~ N(0, I).
The network is differentiated by hand (no ML framework) so gradient checks
and bit-for-bit seeded determinism are easy to uphold.

Notes:
* The loss uses the SQUARED norm mean ||v - u||^2 (differentiable at zero);
  pass squared=False for the plain-norm variant.
* The optimizer is gradient descent with Adam moments and DECOUPLED weight
  decay, plus global-norm gradient clipping.
* Checkpoints are a one-line JSON header plus a little-endian float32 blob;
  loss curves are ``epoch,loss`` CSV.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteState, ShapeMismatch, ValidationError
from .geometry import Pose

__all__ = [
    "FlowSample",
    "PolicyNet",
    "TrainConfig",
    "TrainReport",
    "sample_path",
    "fm_loss",
    "euler_sample",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "save_loss_curve",
    "toy_reaching_dataset",
]


@dataclass
class FlowSample:
    tau: float
    A: np.ndarray
    eps: np.ndarray
    A_tau: np.ndarray  # tau*A + (1-tau)*eps
    u_target: np.ndarray  # A - eps


def sample_path(A, tau: float, rng: np.random.Generator) -> FlowSample:
    """Draw eps ~ N(0, I) and build the path point and target field at tau."""
    A = np.asarray(A, dtype=float).reshape(-1)
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must be in [0, 1], got {tau}")
    eps = rng.standard_normal(A.shape[0])
    return FlowSample(tau=float(tau), A=A, eps=eps, A_tau=tau * A + (1.0 - tau) * eps,
                      u_target=A - eps)


class PolicyNet:
    """Dense tanh network: input (A_tau, tau, obs) -> vector field estimate.

    weights[i] has shape (fan_out, fan_in); hidden layers use tanh and the
    output layer is linear with the action's dimension.
    """

    def __init__(self, d_action: int, d_obs: int, weights, biases):
        self.d_action = int(d_action)
        self.d_obs = int(d_obs)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        want_in = self.d_action + 1 + self.d_obs
        if self.weights[0].shape[1] != want_in or self.weights[-1].shape[0] != self.d_action:
            raise ShapeMismatch(
                f"network edges {self.weights[0].shape[1]}->{self.weights[-1].shape[0]} "
                f"do not match d_action={self.d_action}, d_obs={self.d_obs}"
            )

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @staticmethod
    def create(d_action: int, d_obs: int, hidden=(64, 64), seed: int = 0) -> "PolicyNet":
        rng = np.random.default_rng(seed)
        sizes = [d_action + 1 + d_obs, *hidden, d_action]
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
            biases.append(np.zeros(fan_out))
        return PolicyNet(d_action, d_obs, weights, biases)

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _pack_input(self, a_tau: np.ndarray, tau: np.ndarray, obs: np.ndarray) -> np.ndarray:
        return np.concatenate([a_tau, tau[:, None], obs], axis=1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self._forward_cached(x)
        return y

    def _forward_cached(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ShapeMismatch(f"input shape {x.shape}, expected (B, {self.sizes[0]})")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def _backprop(self, acts, dy: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss wrt params, given dL/d(output)."""
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        delta = dy
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (1.0 - acts[i] ** 2)
        return grads

    def predict_field(self, a_tau: np.ndarray, tau, obs: np.ndarray) -> np.ndarray:
        """v(A_tau, tau, obs) for a batch: a_tau (B,D), tau (B,), obs (B,F)."""
        a_tau = np.atleast_2d(np.asarray(a_tau, dtype=float))
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        tau = np.broadcast_to(np.asarray(tau, dtype=float).reshape(-1), (a_tau.shape[0],))
        if a_tau.shape[1] != self.d_action:
            raise ShapeMismatch(f"A_tau dim {a_tau.shape[1]} != d_action {self.d_action}")
        if obs.shape[1] != self.d_obs:
            raise ShapeMismatch(f"obs dim {obs.shape[1]} != d_obs {self.d_obs}")
        if obs.shape[0] != a_tau.shape[0]:
            raise ShapeMismatch(f"batch {a_tau.shape[0]} A_tau rows vs {obs.shape[0]} obs rows")
        return self.forward(self._pack_input(a_tau, tau, obs))


def fm_loss(net: PolicyNet, samples, obs, squared: bool = True):
    """Flow-matching loss and parameter gradients for one batch.

    loss = mean over the batch of ||v - u_target||^2 (or the unsquared norm
    with squared=False).  Returns (loss, grads) with grads ordered W0, b0,
    W1, b1, ...
    """
    samples = list(samples)
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if len(samples) == 0:
        raise ShapeMismatch("empty batch")
    if obs.shape[0] != len(samples):
        raise ShapeMismatch(f"{len(samples)} samples but {obs.shape[0]} obs rows")
    a_tau = np.stack([s.A_tau for s in samples])
    if a_tau.shape[1] != net.d_action:
        raise ShapeMismatch(f"sample dim {a_tau.shape[1]} != d_action {net.d_action}")
    if obs.shape[1] != net.d_obs:
        raise ShapeMismatch(f"obs dim {obs.shape[1]} != d_obs {net.d_obs}")
    tau = np.array([s.tau for s in samples])
    target = np.stack([s.u_target for s in samples])
    x = net._pack_input(a_tau, tau, obs)
    y, acts = net._forward_cached(x)
    diff = y - target
    batch = y.shape[0]
    if squared:
        loss = float(np.mean(np.sum(diff**2, axis=1)))
        dy = 2.0 * diff / batch
    else:
        norms = np.linalg.norm(diff, axis=1)
        loss = float(np.mean(norms))
        safe = np.where(norms > 0.0, norms, 1.0)
        dy = diff / (safe[:, None] * batch)
        dy[norms == 0.0] = 0.0
    return loss, net._backprop(acts, dy)


def euler_sample(net: PolicyNet, obs, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Integrate the learned field from A0 ~ N(0, I) to tau = 1 in 1/delta steps."""
    steps = _check_delta(delta)
    obs = np.asarray(obs, dtype=float).reshape(1, -1)
    a = rng.standard_normal(net.d_action)
    tau = 0.0
    for _ in range(steps):
        v = net.predict_field(a[None, :], np.array([tau]), obs)[0]
        a = a + delta * v
        tau += delta
        if not np.all(np.isfinite(a)):
            raise NonFiniteState(f"Euler iterate diverged at tau={tau:.3f}")
    return a


def _check_delta(delta: float) -> int:
    if delta <= 0 or delta > 1:
        raise ValidationError(f"euler step must be in (0, 1], got {delta}")
    steps = round(1.0 / delta)
    if abs(steps * delta - 1.0) > 1e-9:
        raise ValidationError(f"euler step {delta} does not divide 1 evenly")
    return steps


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 1e-10  # decoupled, applied directly to weights
    max_norm: float = 1.0  # global gradient-norm clip
    epochs: int = 50
    seed: int = 0
    delta: float = 0.1  # euler step used by samplers sharing this config
    squared: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValidationError(f"learning rate must be >= 0, got {self.lr}")
        if self.max_norm <= 0:
            raise ValidationError(f"max_norm must be positive, got {self.max_norm}")
        _check_delta(self.delta)


@dataclass
class TrainReport:
    net: PolicyNet
    loss_curve: list[float] = field(default_factory=list)


class _AdamW:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.cfg = cfg
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        total = np.sqrt(sum(float(np.sum(g**2)) for g in grads))
        scale = 1.0 if total <= self.cfg.max_norm else self.cfg.max_norm / total
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g * scale
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p -= self.cfg.lr * self.cfg.weight_decay * p


def train(net: PolicyNet, obs_set, chunk_set, cfg: TrainConfig = TrainConfig()) -> TrainReport:
    """Train in place; fully deterministic given cfg.seed.

    Per step: draw tau ~ U[0,1] and eps per sample, evaluate fm_loss, clip
    the global gradient norm, and apply the decoupled-weight-decay update.
    The loss curve records the mean batch loss per epoch.
    """
    obs_set = np.atleast_2d(np.asarray(obs_set, dtype=float))
    chunk_set = np.atleast_2d(np.asarray(chunk_set, dtype=float))
    if obs_set.shape[0] != chunk_set.shape[0]:
        raise ShapeMismatch(f"{obs_set.shape[0]} obs rows vs {chunk_set.shape[0]} chunks")
    if obs_set.shape[0] == 0:
        raise ValidationError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = _AdamW(net.params(), cfg)
    curve: list[float] = []
    n = obs_set.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            taus = rng.uniform(0.0, 1.0, idx.shape[0])
            samples = [sample_path(chunk_set[i], t, rng) for i, t in zip(idx, taus)]
            loss, grads = fm_loss(net, samples, obs_set[idx], squared=cfg.squared)
            opt.step(net.params(), grads)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
    return TrainReport(net, curve)


def save_checkpoint(net: PolicyNet, path, extra: dict | None = None) -> None:
    """One JSON header line (shapes + metadata) then the float32 weight blob."""
    header = {
        "version": 1,
        "d_action": net.d_action,
        "d_obs": net.d_obs,
        "sizes": list(net.sizes),
        "activation": "tanh",
    }
    if extra:
        header["extra"] = extra
    blob = b"".join(p.astype("<f4").tobytes() for p in net.params())
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(blob)


def load_checkpoint(path) -> PolicyNet:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    if header.get("version") != 1:
        raise ValidationError(f"unsupported checkpoint version {header.get('version')}")
    sizes = header["sizes"]
    blob = np.frombuffer(raw[nl + 1 :], dtype="<f4").astype(float)
    weights = []
    biases = []
    off = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(blob[off : off + fan_in * fan_out].reshape(fan_out, fan_in))
        off += fan_in * fan_out
        biases.append(blob[off : off + fan_out])
        off += fan_out
    if off != blob.shape[0]:
        raise ValidationError(f"checkpoint blob has {blob.shape[0] - off} stray values")
    return PolicyNet(header["d_action"], header["d_obs"], weights, biases)


def save_loss_curve(curve, path) -> None:
    lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(curve)]
    Path(path).write_text("\n".join(lines) + "\n")


def toy_reaching_dataset(model, side: str, n: int, horizon: int = 4, seed: int = 0):
    """Synthetic 2-d reaching: obs = target point, chunk = straight-line wrist deltas.

    Wrist poses interpolate from the origin to (x, y, 0) over the horizon with
    identity rotation; joint slots hold the hand's mid-range pose.  Returns
    (obs (n,2), chunks (n, H*82)) ready for train().
    """
    from .faas import encode_chunk  # local import keeps module load light

    rng = np.random.default_rng(seed)
    q = model.kin.mid_q
    obs = rng.uniform(-0.3, 0.3, (n, 2))
    chunks = np.empty((n, horizon * 82))
    for i in range(n):
        tx, ty = obs[i]
        wrists = [
            Pose(np.eye(3), np.array([tx, ty, 0.0]) * (k / max(1, horizon - 1)))
            for k in range(horizon)
        ]
        chunk = encode_chunk(wrists, [q] * horizon, model, side)
        chunks[i] = np.concatenate([v.values for v in chunk.actions])
    return obs, chunks
