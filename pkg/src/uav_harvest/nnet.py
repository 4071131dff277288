"""Q-network and learning rules: forward pass, policies, DDQN loss, updates.

The network follows the standard conv-into-fc value head: the map stack
runs through ReLU conv stages, is flattened, concatenated with the
normalized remaining-flight-time scalar, and finishes in ReLU
fully-connected stages plus a linear head with one output per action.

All randomness (weight init, exploration draws) comes from numpy
generators passed in by the caller; torch is used as a deterministic
compute backend, which keeps training runs reproducible from a single
seed.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn as nn

from .encode import CENTERED, EncoderSpec, Observation
from .mdp import Action
from .replay import Transition

N_ACTIONS = len(Action)


class TrainingDiverged(RuntimeError):
    """The DDQN loss became non-finite; the offending update is not applied."""


@dataclass(frozen=True)
class ArchConfig:
    """Layer sizes; every stage is config-exposed."""

    conv: tuple[tuple[int, int, int], ...] = ((16, 5, 2), (16, 3, 1))  # (filters, kernel, stride)
    fc: tuple[int, ...] = (256, 256)

    def __post_init__(self):
        if not self.conv or not self.fc:
            raise ValueError("need at least one conv and one fc stage")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    temperature: float = 0.1
    learning_rate: float = 1e-4
    batch_size: int = 128
    target_update_rate: float = 0.005
    replay_capacity: int = 50_000
    total_steps: int = 150_000
    warmup: int | None = None           # defaults to batch_size
    eval_every_episodes: int = 10

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0.0 < self.target_update_rate <= 1.0:
            raise ValueError("target_update_rate must be in (0, 1]")

    @property
    def effective_warmup(self) -> int:
        return self.batch_size if self.warmup is None else self.warmup


class QNetwork(nn.Module):
    def __init__(self, arch: ArchConfig, side: int, channels: int):
        super().__init__()
        self.arch = arch
        self.side = side
        self.channels = channels
        convs = []
        in_ch, sz = channels, side
        for filters, kernel, stride in arch.conv:
            convs.append(nn.Conv2d(in_ch, filters, kernel, stride=stride))
            sz = (sz - kernel) // stride + 1
            if sz < 1:
                raise ValueError(f"conv stack shrinks a {side}-pixel input below 1")
            in_ch = filters
        self.convs = nn.ModuleList(convs)
        self.flat_size = in_ch * sz * sz
        fcs = []
        width = self.flat_size + 1  # + time scalar
        for out_width in arch.fc:
            fcs.append(nn.Linear(width, out_width))
            width = out_width
        self.fcs = nn.ModuleList(fcs)
        self.head = nn.Linear(width, N_ACTIONS)

    def forward(self, maps: torch.Tensor, scalars: torch.Tensor) -> torch.Tensor:
        x = maps
        for conv in self.convs:
            x = torch.relu(conv(x))
        x = torch.flatten(x, 1)
        x = torch.cat([x, scalars], dim=1)
        for fc in self.fcs:
            x = torch.relu(fc(x))
        return self.head(x)


def init_weights(net: QNetwork, rng: np.random.Generator) -> None:
    """Fan-in scaled uniform weights, zero biases; deterministic in rng."""
    with torch.no_grad():
        for name, param in net.named_parameters():
            if name.endswith("bias"):
                param.zero_()
                continue
            fan_in = int(np.prod(param.shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            values = rng.uniform(-bound, bound, size=tuple(param.shape))
            param.copy_(torch.from_numpy(values.astype(np.float32)))


def _obs_tensors(obs: Observation) -> tuple[torch.Tensor, torch.Tensor]:
    maps = torch.from_numpy(
        np.ascontiguousarray(obs.map_tensor.transpose(2, 0, 1))[None])
    scalar = torch.tensor([[obs.time_scalar]], dtype=torch.float32)
    return maps, scalar


def q_values(net: QNetwork, obs: Observation) -> np.ndarray:
    """Single-observation forward pass; returns the 6 action values."""
    with torch.no_grad():
        out = net(*_obs_tensors(obs))
    return out.numpy()[0].astype(np.float64)


def greedy_action(q: np.ndarray) -> Action:
    """Argmax action; ties go to the lowest action index."""
    return Action(int(np.argmax(q)))


def softmax_probabilities(q: np.ndarray, beta: float) -> np.ndarray:
    z = (np.asarray(q, dtype=np.float64) - np.max(q)) / beta
    e = np.exp(z)
    return e / e.sum()


def softmax_sample(q: np.ndarray, beta: float, rng: np.random.Generator) -> Action:
    """Boltzmann draw over actions at temperature beta (one uniform per call)."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    p = softmax_probabilities(q, beta)
    u = rng.random()
    return Action(int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, len(p) - 1)))


class TensorBatch:
    """Transitions stacked into torch tensors (maps in NCHW)."""

    def __init__(self, transitions: list[Transition]):
        def stack(obs_list):
            arr = np.stack([o.map_tensor for o in obs_list])
            return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))

        self.maps = stack([t.obs for t in transitions])
        self.next_maps = stack([t.next_obs for t in transitions])
        self.scalars = torch.tensor([[t.obs.time_scalar] for t in transitions],
                                    dtype=torch.float32)
        self.next_scalars = torch.tensor([[t.next_obs.time_scalar] for t in transitions],
                                         dtype=torch.float32)
        self.actions = torch.tensor([int(t.action) for t in transitions], dtype=torch.int64)
        self.rewards = torch.tensor([t.reward for t in transitions], dtype=torch.float32)
        self.terminal = torch.tensor([t.terminal for t in transitions], dtype=torch.bool)

    def __len__(self):
        return self.maps.shape[0]


def _target_values(batch: TensorBatch, online: QNetwork, target: QNetwork,
                   gamma: float) -> torch.Tensor:
    with torch.no_grad():
        best = online(batch.next_maps, batch.next_scalars).argmax(dim=1, keepdim=True)
        boot = target(batch.next_maps, batch.next_scalars).gather(1, best).squeeze(1)
        return batch.rewards + gamma * boot * (~batch.terminal)


def ddqn_target(batch, online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    """Per-sample targets: r + gamma * Q_target(s', argmax_a Q_online(s', a)).

    Terminal transitions bootstrap nothing and get Y = r.
    """
    if not isinstance(batch, TensorBatch):
        batch = TensorBatch(batch)
    return _target_values(batch, online, target, gamma).numpy().astype(np.float64)


def train_step(online: QNetwork, target: QNetwork, optimizer: torch.optim.Optimizer,
               batch, gamma: float) -> float:
    """One squared-error descent step on the DDQN targets.

    Targets are constants (no gradient flows through the bootstrap);
    returns the pre-update loss.
    """
    if not isinstance(batch, TensorBatch):
        batch = TensorBatch(batch)
    y = _target_values(batch, online, target, gamma)
    q = online(batch.maps, batch.scalars).gather(
        1, batch.actions.unsqueeze(1)).squeeze(1)
    loss = torch.mean((q - y) ** 2)
    value = float(loss.item())
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value}")
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return value


def soft_update(target: QNetwork, online: QNetwork, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    with torch.no_grad():
        for pt, po in zip(target.parameters(), online.parameters()):
            if pt.shape != po.shape:
                raise ValueError("target and online parameter shapes differ")
            pt.mul_(1.0 - tau).add_(po, alpha=tau)


def make_optimizer(net: QNetwork, learning_rate: float) -> torch.optim.Adam:
    return torch.optim.Adam(net.parameters(), lr=learning_rate)


# ---------------------------------------------------------------------------
# Checkpoints: versioned self-describing container, little-endian float32.

_MAGIC = b"UAVQNET1"


@dataclass
class Checkpoint:
    arch: ArchConfig
    side: int
    channels: int
    encoder: EncoderSpec
    learning_rate: float
    train_steps: int
    online_state: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    target_state: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    adam_m: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    adam_steps: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_networks(cls, online: QNetwork, target: QNetwork,
                      optimizer: torch.optim.Optimizer, encoder: EncoderSpec,
                      learning_rate: float, train_steps: int) -> "Checkpoint":
        def grab(net):
            return {k: v.detach().numpy().copy() for k, v in net.state_dict().items()}

        params = dict(online.named_parameters())
        adam_m, adam_v, adam_steps = {}, {}, {}
        for name, p in params.items():
            state = optimizer.state.get(p, {})
            if state:
                adam_m[name] = state["exp_avg"].numpy().copy()
                adam_v[name] = state["exp_avg_sq"].numpy().copy()
                adam_steps[name] = int(state["step"].item())
        return cls(arch=online.arch, side=online.side, channels=online.channels,
                   encoder=encoder, learning_rate=learning_rate,
                   train_steps=train_steps, online_state=grab(online),
                   target_state=grab(target), adam_m=adam_m, adam_v=adam_v,
                   adam_steps=adam_steps)

    def network(self) -> QNetwork:
        """Fresh online network carrying this checkpoint's weights."""
        net = QNetwork(self.arch, self.side, self.channels)
        net.load_state_dict({k: torch.from_numpy(v.copy())
                             for k, v in self.online_state.items()})
        return net

    def restore(self) -> tuple[QNetwork, QNetwork, torch.optim.Adam]:
        """Rebuild online/target networks plus the optimizer state."""
        online = self.network()
        target = QNetwork(self.arch, self.side, self.channels)
        target.load_state_dict({k: torch.from_numpy(v.copy())
                                for k, v in self.target_state.items()})
        optimizer = make_optimizer(online, self.learning_rate)
        for name, p in online.named_parameters():
            if name in self.adam_m:
                optimizer.state[p] = {
                    "step": torch.tensor(float(self.adam_steps[name])),
                    "exp_avg": torch.from_numpy(self.adam_m[name].copy()),
                    "exp_avg_sq": torch.from_numpy(self.adam_v[name].copy()),
                }
        return online, target, optimizer


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    groups = [("online", ckpt.online_state), ("target", ckpt.target_state),
              ("adam_m", ckpt.adam_m), ("adam_v", ckpt.adam_v)]
    manifest, blobs, offset = [], [], 0
    for group, arrays in groups:
        for name, arr in sorted(arrays.items()):
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            manifest.append({"name": f"{group}/{name}", "shape": list(arr.shape),
                             "dtype": "<f4", "offset": offset, "nbytes": len(data)})
            blobs.append(data)
            offset += len(data)
    header = {
        "format_version": 1,
        "byte_order": "little",
        "arch": asdict(ckpt.arch),
        "input": {"side": ckpt.side, "channels": ckpt.channels},
        "encoder": asdict(ckpt.encoder),
        "optimizer": {"name": "adam", "learning_rate": ckpt.learning_rate,
                      "steps": ckpt.adam_steps},
        "train_steps": ckpt.train_steps,
        "arrays": manifest,
    }
    payload = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        if header["format_version"] != 1:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        body = fh.read()
    groups: dict[str, dict[str, np.ndarray]] = {
        "online": {}, "target": {}, "adam_m": {}, "adam_v": {}}
    for entry in header["arrays"]:
        group, name = entry["name"].split("/", 1)
        arr = np.frombuffer(body, dtype=entry["dtype"], count=int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1,
                            offset=entry["offset"]).reshape(entry["shape"]).copy()
        groups[group][name] = arr
    arch = ArchConfig(conv=tuple(tuple(c) for c in header["arch"]["conv"]),
                      fc=tuple(header["arch"]["fc"]))
    enc = EncoderSpec(**header["encoder"])
    return Checkpoint(arch=arch, side=header["input"]["side"],
                      channels=header["input"]["channels"], encoder=enc,
                      learning_rate=header["optimizer"]["learning_rate"],
                      train_steps=header["train_steps"],
                      online_state=groups["online"], target_state=groups["target"],
                      adam_m=groups["adam_m"], adam_v=groups["adam_v"],
                      adam_steps={k: int(v) for k, v in
                                  header["optimizer"]["steps"].items()})
