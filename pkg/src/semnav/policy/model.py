"""Target-driven navigation policy: cost regression over actions from the
map, pose belief, egocentric observation, target class and collision bit."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..autodiff import (Array, BatchNormState, RecurrentCellParams, add,
                        batchnorm_spatial, concat, conv2d, dropout, l1_loss,
                        load_arrays, lstm_step, matmul, maxpool_2x2, relu,
                        reshape, save_arrays)
from ..mapper.config import ProjectionConfig
from ..world.graph import ACTIONS, UNREACHABLE, Action, EnvGraph, Pose
from ..world.render import Observation

N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class PolicyConfig:
    hidden: int = 128          # recurrent state width
    embed: int = 128           # per-pathway embedding width
    dropout_rate: float = 0.3
    temperature: float = 1.0
    map_conv_channels: int = 8
    ego_channels: tuple[int, ...] = (8, 16, 16)  # stride-2 ego encoder stages
    n_target_classes: int = 5
    image_h: int = 32
    image_w: int = 48
    use_ego: bool = True       # False: policy sees a zeroed egocentric embedding

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ego_channels"] = list(self.ego_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        d = dict(d)
        if "ego_channels" in d:
            d["ego_channels"] = tuple(d["ego_channels"])
        return cls(**d)


def _conv_init(rng, k, cin, cout, dtype):
    w = rng.normal(0.0, 1.0 / np.sqrt(k * k * cin), (k, k, cin, cout))
    return Array(w.astype(dtype), requires_grad=True)


def _fc_init(rng, d_in, d_out, dtype):
    w = rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_out))
    return (Array(w.astype(dtype), requires_grad=True),
            Array(np.zeros(d_out, dtype=dtype), requires_grad=True))


def _zeros(shape, dtype):
    return Array(np.zeros(shape, dtype=dtype), requires_grad=True)


@dataclass
class PolicyParams:
    config: PolicyConfig
    map_config: ProjectionConfig
    map_conv: Array
    map_conv_b: Array
    bn_gamma: Array
    bn_beta: Array
    bn_state: BatchNormState
    map_fc: tuple[Array, Array]
    ego_convs: list[tuple[Array, Array]]
    ego_fc: tuple[Array, Array]
    target_fc: tuple[Array, Array]
    cell: RecurrentCellParams
    head: tuple[Array, Array]

    @classmethod
    def create(cls, rng: np.random.Generator, config: PolicyConfig,
               map_config: ProjectionConfig, dtype=np.float64) -> "PolicyParams":
        u, v = map_config.u, map_config.v
        cm = config.map_conv_channels
        map_cin = map_config.n + map_config.r
        pooled = ((u + 1) // 2) * ((v + 1) // 2) * cm
        ego_convs = []
        cin = 3 + map_config.c_s + map_config.c_d
        h, w = config.image_h, config.image_w
        for cout in config.ego_channels:
            ego_convs.append((_conv_init(rng, 3, cin, cout, dtype),
                              _zeros(cout, dtype)))
            cin = cout
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        lstm_in = 3 * config.embed + 1  # map + ego + target embeddings, collision bit
        return cls(
            config=config, map_config=map_config,
            map_conv=_conv_init(rng, 3, map_cin, cm, dtype),
            map_conv_b=_zeros(cm, dtype),
            bn_gamma=Array(np.ones(cm, dtype=dtype), requires_grad=True),
            bn_beta=_zeros(cm, dtype),
            bn_state=BatchNormState.create(cm, dtype),
            map_fc=_fc_init(rng, pooled, config.embed, dtype),
            ego_convs=ego_convs,
            ego_fc=_fc_init(rng, h * w * cin, config.embed, dtype),
            target_fc=_fc_init(rng, config.n_target_classes, config.embed, dtype),
            cell=RecurrentCellParams.create(rng, lstm_in, config.hidden, dtype),
            head=_fc_init(rng, config.hidden, N_ACTIONS, dtype),
        )

    def arrays(self) -> dict[str, Array]:
        out = {
            "map_conv.kernel": self.map_conv, "map_conv.bias": self.map_conv_b,
            "bn.gamma": self.bn_gamma, "bn.beta": self.bn_beta,
            "map_fc.w": self.map_fc[0], "map_fc.b": self.map_fc[1],
            "ego_fc.w": self.ego_fc[0], "ego_fc.b": self.ego_fc[1],
            "target_fc.w": self.target_fc[0], "target_fc.b": self.target_fc[1],
            "head.w": self.head[0], "head.b": self.head[1],
        }
        for i, (k, b) in enumerate(self.ego_convs):
            out[f"ego_conv.{i}.kernel"] = k
            out[f"ego_conv.{i}.bias"] = b
        for name, arr in self.cell.arrays().items():
            out[f"cell.{name}"] = arr
        return out

    def load_state(self, named: dict[str, np.ndarray]) -> None:
        own = self.arrays()
        extra = {"bn.running_mean", "bn.running_var"}
        if set(own) != set(named) - extra:
            raise ValueError("checkpoint parameter names do not match this config")
        for name, arr in own.items():
            arr.data = named[name].astype(arr.dtype).reshape(arr.shape)
        if "bn.running_mean" in named:
            self.bn_state.running_mean = named["bn.running_mean"].astype(
                self.bn_gamma.dtype)
            self.bn_state.running_var = named["bn.running_var"].astype(
                self.bn_gamma.dtype)


def save_policy(path, params: PolicyParams) -> None:
    named = {k: v.data for k, v in params.arrays().items()}
    named["bn.running_mean"] = params.bn_state.running_mean
    named["bn.running_var"] = params.bn_state.running_var
    save_arrays(path, named)
    Path(str(path) + ".yaml").write_text(yaml.safe_dump({
        "policy": params.config.to_dict(),
        "map": params.map_config.to_dict(),
    }))


def load_policy(path, dtype=np.float64) -> PolicyParams:
    meta = yaml.safe_load(Path(str(path) + ".yaml").read_text())
    params = PolicyParams.create(np.random.default_rng(0),
                                 PolicyConfig.from_dict(meta["policy"]),
                                 ProjectionConfig.from_dict(meta["map"]), dtype)
    params.load_state(load_arrays(path))
    return params


# ---------------------------------------------------------------------------


@dataclass
class PolicyInputs:
    map_features: Array        # (u, v, n)
    belief: Array              # (u, v, r)
    observation: Observation
    target_class: int
    collision_bit: int


def ego_stack(obs: Observation, c_s: int, c_d: int) -> np.ndarray:
    """(h, w, 3 + c_s + c_d) stack of RGB, segmentation one-hot, detections."""
    h, w = obs.segmentation.shape
    seg = np.zeros((h, w, c_s))
    labels = np.clip(obs.segmentation, 0, c_s - 1)
    seg[np.arange(h)[:, None], np.arange(w)[None, :], labels] = 1.0
    det = np.moveaxis(obs.detections, 0, -1)
    return np.concatenate([obs.rgb, seg, det], axis=2)


def _fc(x: Array, wb) -> Array:
    w, b = wb
    return add(reshape(matmul(reshape(x, (1, x.shape[0])), w), (w.shape[1],)), b)


def policy_forward(params: PolicyParams, inputs: PolicyInputs, state,
                   rng: np.random.Generator | None = None,
                   training: bool = False):
    """Predict per-action costs; returns (costs, (h, c)) with costs ordered
    MoveForward, RotateLeft, RotateRight."""
    cfg, mcfg = params.config, params.map_config
    dtype = params.head[0].dtype
    if training and rng is None:
        raise ValueError("training mode needs an rng for dropout")

    # map + belief pathway
    mb = concat([inputs.map_features, inputs.belief], axis=2)
    x = add(conv2d(mb, params.map_conv, pad=1), params.map_conv_b)
    x = batchnorm_spatial(x, params.bn_gamma, params.bn_beta,
                          params.bn_state, training)
    x = maxpool_2x2(x)
    x = relu(_fc(reshape(x, (int(np.prod(x.shape)),)), params.map_fc))
    map_emb = dropout(x, cfg.dropout_rate, rng, training)

    # egocentric pathway
    if cfg.use_ego:
        e = Array(ego_stack(inputs.observation, mcfg.c_s, mcfg.c_d).astype(dtype))
        for k, b in params.ego_convs:
            e = relu(add(conv2d(e, k, pad=1, stride=2), b))
        ego_emb = relu(_fc(reshape(e, (int(np.prod(e.shape)),)), params.ego_fc))
    else:
        ego_emb = Array(np.zeros(cfg.embed, dtype=dtype))

    onehot = np.zeros(cfg.n_target_classes, dtype=dtype)
    onehot[inputs.target_class] = 1.0
    target_emb = _fc(Array(onehot), params.target_fc)

    coll = Array(np.array([float(inputs.collision_bit)], dtype=dtype))
    joint = concat([map_emb, ego_emb, target_emb, coll], axis=0)

    if state is None:
        h = Array(np.zeros(cfg.hidden, dtype=dtype))
        c = Array(np.zeros(cfg.hidden, dtype=dtype))
    else:
        h, c = state
    h_new, c_new = lstm_step(params.cell, joint, h, c)
    costs = _fc(h_new, params.head)
    return costs, (h_new, c_new)


# ---------------------------------------------------------------------------
# supervision and control


def cost_targets(graph: EnvGraph, pose: Pose, action: Action,
                 target_class: int) -> float:
    """Per-action cost label: -2 reaching a goal, +1 on collision, otherwise
    the signed BFS-distance change in {-1, 0, 1}."""
    dist = graph.distance_table(target_class)
    d = dist[pose]
    if d == UNREACHABLE:
        raise ValueError(f"target class {target_class} unreachable from {pose}")
    nxt, collided = graph.step(pose, action)
    if dist[nxt] == 0:
        return -2.0
    if collided:
        return 1.0
    # the graph is directed (forward moves are not directly reversible), so
    # the distance can grow by more than 1; the label is the change's sign
    return float(np.sign(dist[nxt] - d))


def cost_target_vector(graph: EnvGraph, pose: Pose, target_class: int) -> np.ndarray:
    return np.array([cost_targets(graph, pose, a, target_class) for a in ACTIONS])


def nav_loss(predicted: list[Array], targets: list[np.ndarray]) -> Array:
    """Mean absolute error over T steps x |A| actions."""
    if len(predicted) != len(targets):
        raise ValueError("prediction / target length mismatch")
    if not predicted:
        raise ValueError("empty episode")
    stacked = concat([reshape(p, (1, N_ACTIONS)) for p in predicted], axis=0)
    return l1_loss(stacked, Array(np.stack(targets).astype(stacked.dtype)))


def action_probabilities(costs: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    logits = -np.asarray(costs, dtype=np.float64) / temperature
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def select_action(costs, rng: np.random.Generator,
                  temperature: float = 1.0) -> Action:
    data = costs.data if isinstance(costs, Array) else np.asarray(costs)
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite action costs")
    probs = action_probabilities(data, temperature)
    return ACTIONS[int(rng.choice(N_ACTIONS, p=probs))]
