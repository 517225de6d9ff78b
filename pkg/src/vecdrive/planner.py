"""Command-conditioned vectorized trajectory planner.

The model fuses a learnable ego query with agent and map features through
two single-layer cross-attention stages (ego-agent, then ego-map), and a
two-layer planning head decodes the fused features, the ego state and the
one-hot command into T_F future waypoints:

    q1  = attention(stage 1, ego_query, agent rows, positional terms)
    q2  = attention(stage 2, q1, map rows, positional terms)
    out = plan_head([q1, q2, s_ego, one-hot command])  ->  T_F x 2

Attention adds MLP positional embeddings to queries and keys before the
per-stage projections; values are the raw key rows projected. Masked
(padded) slots never enter the computation, so their parameters receive
exactly zero gradient, and a stage whose keys are all masked returns the
zero vector.

Everything is float64 and single-threaded; forward, backward and training
are bit-deterministic. Gradients are hand-written reverse mode, checked
against central finite differences in the test suite.

Coordinate-like inputs (positions, speeds, extents) are scaled by
INPUT_SCALE = 0.1 before entering any MLP so that tanh hidden layers stay
in their active range at street-scale coordinates.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .oracle import Format, Oracle
from .rng import SplitMix64
from .scene import (
    A_MAX,
    M_MAX,
    MetaAction,
    POLYLINE_POINTS,
    Scenario,
    T_F,
    Trajectory,
)

INPUT_SCALE = 0.1
AGENT_FEATURES = 7          # x, y, cos(h), sin(h), speed, length, width
MAP_FEATURES = POLYLINE_POINTS * 2
EGO_STATE_FEATURES = 3      # speed, accel, constant 1
N_COMMANDS = 3

_COMMAND_INDEX = {
    MetaAction.GO_STRAIGHT: 0,
    MetaAction.TURN_LEFT: 1,
    MetaAction.TURN_RIGHT: 2,
}


class PlannerError(Exception):
    pass


class CheckpointError(PlannerError):
    pass


class TrainingDiverged(PlannerError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    d_model: int = 32
    n_heads: int = 2
    hidden: int = 64
    t_f: int = T_F
    a_max: int = A_MAX
    m_max: int = M_MAX
    p_m: int = POLYLINE_POINTS

    def validate(self) -> None:
        for name in ("d_model", "n_heads", "hidden"):
            if getattr(self, name) <= 0:
                raise PlannerError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise PlannerError(
                f"n_heads={self.n_heads} must divide d_model={self.d_model}"
            )
        fixed = {"t_f": T_F, "a_max": A_MAX, "m_max": M_MAX, "p_m": POLYLINE_POINTS}
        for name, expected in fixed.items():
            if getattr(self, name) != expected:
                raise PlannerError(f"{name} must equal {expected}")

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model, "n_heads": self.n_heads, "hidden": self.hidden,
            "t_f": self.t_f, "a_max": self.a_max, "m_max": self.m_max, "p_m": self.p_m,
        }


def param_layout(config: PlannerConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Closed parameter set in the fixed initialization order.

    Two-layer tanh MLPs for the agent/map encoders, both positional
    embeddings and the planning head; four square projections per
    attention stage. Biases are the names ending in .b1/.b2.
    """
    d, h = config.d_model, config.hidden
    head_in = 2 * d + EGO_STATE_FEATURES + N_COMMANDS
    layout: list[tuple[str, tuple[int, ...]]] = [("ego_query", (d,))]
    for prefix, n_in in (("agent_enc", AGENT_FEATURES), ("map_enc", MAP_FEATURES),
                         ("pe1", 2), ("pe2", 2)):
        layout += [
            (f"{prefix}.w1", (h, n_in)),
            (f"{prefix}.b1", (h,)),
            (f"{prefix}.w2", (d, h)),
            (f"{prefix}.b2", (d,)),
        ]
    for stage in ("attn1", "attn2"):
        layout += [(f"{stage}.{w}", (d, d)) for w in ("wq", "wk", "wv", "wo")]
    layout += [
        ("plan_head.w1", (h, head_in)),
        ("plan_head.b1", (h,)),
        ("plan_head.w2", (T_F * 2, h)),
        ("plan_head.b2", (T_F * 2,)),
    ]
    return layout


@dataclass
class PlannerModel:
    config: PlannerConfig
    params: dict[str, np.ndarray] = field(repr=False)

    def validate(self) -> None:
        self.config.validate()
        expected = dict(param_layout(self.config))
        names = set(self.params)
        if names != set(expected):
            missing = sorted(set(expected) - names)
            extra = sorted(names - set(expected))
            raise PlannerError(f"parameter set mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            arr = self.params[name]
            if arr.shape != shape:
                raise PlannerError(f"{name}: shape {arr.shape} != {shape}")
            if not np.all(np.isfinite(arr)):
                raise PlannerError(f"{name}: non-finite values")

    def copy(self) -> "PlannerModel":
        return PlannerModel(self.config, {k: v.copy() for k, v in self.params.items()})


def init_model(config: PlannerConfig, seed: int) -> PlannerModel:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases, fixed draw order.

    fan_in is the input width (last axis) of each weight; the ego query
    uses d_model. Values are drawn elementwise in row-major order, one
    parameter after another in param_layout() order, from a single
    splitmix64 stream.
    """
    config.validate()
    rng = SplitMix64(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_layout(config):
        if name.endswith(".b1") or name.endswith(".b2"):
            params[name] = np.zeros(shape)
            continue
        fan_in = shape[-1] if len(shape) > 1 else config.d_model
        bound = math.sqrt(1.0 / fan_in)
        size = int(np.prod(shape))
        flat = np.array([rng.uniform(-bound, bound) for _ in range(size)])
        params[name] = flat.reshape(shape)
    model = PlannerModel(config, params)
    model.validate()
    return model


def zero_gradients(config: PlannerConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in param_layout(config)}


# --- feature extraction ---------------------------------------------------------

def agent_features(scenario: Scenario) -> np.ndarray:
    """(n_agents, 7) rows: scaled x, y, cos/sin heading, scaled speed/extent."""
    rows = [
        (a.position[0] * INPUT_SCALE, a.position[1] * INPUT_SCALE,
         math.cos(a.heading), math.sin(a.heading),
         a.speed * INPUT_SCALE, a.extent[0] * INPUT_SCALE, a.extent[1] * INPUT_SCALE)
        for a in scenario.agents
    ]
    return np.array(rows).reshape(len(rows), AGENT_FEATURES)


def map_features(scenario: Scenario) -> np.ndarray:
    """(n_polylines, 8) rows: the four points flattened, scaled."""
    rows = [
        [c * INPUT_SCALE for p in line.points for c in p]
        for line in scenario.map
    ]
    return np.array(rows).reshape(len(rows), MAP_FEATURES)


def ego_state_vector(scenario: Scenario) -> np.ndarray:
    return np.array([scenario.ego.speed * INPUT_SCALE,
                     scenario.ego.accel * INPUT_SCALE, 1.0])


def command_one_hot(command: MetaAction) -> np.ndarray:
    vec = np.zeros(N_COMMANDS)
    vec[_COMMAND_INDEX[command]] = 1.0
    return vec


# --- MLP ------------------------------------------------------------------------

def _mlp_forward(params, prefix: str, x: np.ndarray):
    """y = w2 @ tanh(w1 @ x + b1) + b2, rows of x independent."""
    h = np.tanh(x @ params[f"{prefix}.w1"].T + params[f"{prefix}.b1"])
    y = h @ params[f"{prefix}.w2"].T + params[f"{prefix}.b2"]
    return y, (x, h)


def _mlp_backward(params, grads, prefix: str, grad_y: np.ndarray, cache) -> np.ndarray:
    x, h = cache
    grads[f"{prefix}.w2"] += grad_y.T @ h
    grads[f"{prefix}.b2"] += grad_y.sum(axis=0)
    gz = (grad_y @ params[f"{prefix}.w2"]) * (1.0 - h * h)
    grads[f"{prefix}.w1"] += gz.T @ x
    grads[f"{prefix}.b1"] += gz.sum(axis=0)
    return gz @ params[f"{prefix}.w1"]


# --- attention --------------------------------------------------------------------

def _attention_forward(params, config, stage: str, q_in, k_src, q_pos, k_pos):
    """Single-query multi-head attention over valid keys only.

    Returns (output vector, cache); with zero keys the output is exactly
    zero and the cache is None (skip-attention convention).
    """
    n = k_src.shape[0]
    d = config.d_model
    if n == 0:
        return np.zeros(d), None
    n_heads = config.n_heads
    dh = d // n_heads
    q = q_in + q_pos
    keys = k_src + k_pos
    qp = params[f"{stage}.wq"] @ q
    kp = keys @ params[f"{stage}.wk"].T
    vp = k_src @ params[f"{stage}.wv"].T
    qh = qp.reshape(n_heads, dh)
    kh = kp.reshape(n, n_heads, dh)
    vh = vp.reshape(n, n_heads, dh)
    logits = np.einsum("nhd,hd->hn", kh, qh) / math.sqrt(dh)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    weights = expd / expd.sum(axis=1, keepdims=True)          # (n_heads, n)
    heads_out = np.einsum("hn,nhd->hd", weights, vh)
    cat = heads_out.reshape(d)
    out = params[f"{stage}.wo"] @ cat
    cache = (q, keys, k_src, qp, kp, vp, weights, cat)
    return out, cache


def _attention_backward(params, grads, config, stage: str, grad_out, cache):
    """Returns (grad_q_in, grad_q_pos, grad_k_src, grad_k_pos)."""
    d = config.d_model
    if cache is None:
        return np.zeros(d), np.zeros(d), None, None
    q, keys, k_src, qp, kp, vp, weights, cat = cache
    n = k_src.shape[0]
    n_heads = config.n_heads
    dh = d // n_heads

    grads[f"{stage}.wo"] += np.outer(grad_out, cat)
    g_cat = params[f"{stage}.wo"].T @ grad_out
    g_heads = g_cat.reshape(n_heads, dh)

    vh = vp.reshape(n, n_heads, dh)
    g_weights = np.einsum("hd,nhd->hn", g_heads, vh)
    g_vh = np.einsum("hn,hd->nhd", weights, g_heads)

    # Softmax backward per head.
    dot = (weights * g_weights).sum(axis=1, keepdims=True)
    g_logits = weights * (g_weights - dot)

    kh = kp.reshape(n, n_heads, dh)
    qh = qp.reshape(n_heads, dh)
    scale = 1.0 / math.sqrt(dh)
    g_qh = np.einsum("hn,nhd->hd", g_logits, kh) * scale
    g_kh = np.einsum("hn,hd->nhd", g_logits, qh) * scale

    g_qp = g_qh.reshape(d)
    g_kp = g_kh.reshape(n, d)
    g_vp = g_vh.reshape(n, d)

    grads[f"{stage}.wq"] += np.outer(g_qp, q)
    g_q = params[f"{stage}.wq"].T @ g_qp
    grads[f"{stage}.wk"] += g_kp.T @ keys
    g_keys = g_kp @ params[f"{stage}.wk"]
    grads[f"{stage}.wv"] += g_vp.T @ k_src
    g_k_src = g_vp @ params[f"{stage}.wv"] + g_keys
    return g_q, g_q.copy(), g_k_src, g_keys


def cross_attention(model: PlannerModel, stage: str, q_in: np.ndarray,
                    k_src: np.ndarray, q_pos_emb: np.ndarray,
                    k_pos_embs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Public attention entry over padded key arrays with a validity mask."""
    if stage not in ("attn1", "attn2"):
        raise PlannerError(f"unknown attention stage {stage!r}")
    mask = np.asarray(mask, dtype=bool)
    out, _ = _attention_forward(
        model.params, model.config, stage,
        np.asarray(q_in, dtype=float),
        np.asarray(k_src, dtype=float)[mask],
        np.asarray(q_pos_emb, dtype=float),
        np.asarray(k_pos_embs, dtype=float)[mask],
    )
    return out


# --- scene encoding ----------------------------------------------------------------

@dataclass
class SceneEncoding:
    q_a: np.ndarray          # (A_MAX, d_model), zero rows past the valid count
    q_m: np.ndarray          # (M_MAX, d_model)
    agent_mask: np.ndarray   # (A_MAX,) bool
    map_mask: np.ndarray     # (M_MAX,) bool


def encode_scene(model: PlannerModel, scenario: Scenario) -> SceneEncoding:
    """Agent/map query rows with validity masks; absent slots are zero."""
    d = model.config.d_model
    q_a = np.zeros((A_MAX, d))
    q_m = np.zeros((M_MAX, d))
    agent_mask = np.zeros(A_MAX, dtype=bool)
    map_mask = np.zeros(M_MAX, dtype=bool)
    n_a = len(scenario.agents)
    n_m = len(scenario.map)
    if n_a:
        q_a[:n_a], _ = _mlp_forward(model.params, "agent_enc", agent_features(scenario))
        agent_mask[:n_a] = True
    if n_m:
        q_m[:n_m], _ = _mlp_forward(model.params, "map_enc", map_features(scenario))
        map_mask[:n_m] = True
    return SceneEncoding(q_a=q_a, q_m=q_m, agent_mask=agent_mask, map_mask=map_mask)


# --- forward / backward --------------------------------------------------------------

def _positions_for_pe(scenario: Scenario):
    ego_pos = np.array([scenario.ego.position]) * INPUT_SCALE            # (1, 2)
    agent_pos = np.array(
        [a.position for a in scenario.agents]
    ).reshape(len(scenario.agents), 2) * INPUT_SCALE
    map_pos = np.array(
        [line.points[0] for line in scenario.map]
    ).reshape(len(scenario.map), 2) * INPUT_SCALE
    return ego_pos, agent_pos, map_pos


def _run_forward(model: PlannerModel, scenario: Scenario, command: MetaAction):
    p = model.params
    ego_pos, agent_pos, map_pos = _positions_for_pe(scenario)

    a_feat = agent_features(scenario)
    q_a, agent_cache = _mlp_forward(p, "agent_enc", a_feat)
    m_feat = map_features(scenario)
    q_m, map_cache = _mlp_forward(p, "map_enc", m_feat)

    pe1_in = np.concatenate([ego_pos, agent_pos], axis=0)
    pe1_out, pe1_cache = _mlp_forward(p, "pe1", pe1_in)
    pe2_in = np.concatenate([ego_pos, map_pos], axis=0)
    pe2_out, pe2_cache = _mlp_forward(p, "pe2", pe2_in)

    q1, attn1_cache = _attention_forward(
        p, model.config, "attn1", p["ego_query"], q_a, pe1_out[0], pe1_out[1:])
    q2, attn2_cache = _attention_forward(
        p, model.config, "attn2", q1, q_m, pe2_out[0], pe2_out[1:])

    s_ego = ego_state_vector(scenario)
    head_in = np.concatenate([q1, q2, s_ego, command_one_hot(command)])[None, :]
    head_out, head_cache = _mlp_forward(p, "plan_head", head_in)
    pred = head_out.reshape(T_F, 2)

    cache = {
        "agent": agent_cache, "map": map_cache,
        "pe1": pe1_cache, "pe2": pe2_cache,
        "attn1": attn1_cache, "attn2": attn2_cache,
        "head": head_cache, "pred": pred,
        "n_a": len(scenario.agents), "n_m": len(scenario.map),
    }
    return pred, cache


def forward(model: PlannerModel, scenario: Scenario, command: MetaAction) -> Trajectory:
    """Predict the T_F-step ego trajectory for a scenario and command."""
    pred, _ = _run_forward(model, scenario, command)
    return Trajectory(tuple((float(x), float(y)) for x, y in pred))


def attention_weights(model: PlannerModel, scenario: Scenario,
                      command: MetaAction) -> dict[str, np.ndarray]:
    """Introspection hook: per-stage softmax weights over the valid keys.

    Arrays have shape (n_heads, n_valid_keys); empty key sets yield
    zero-column arrays.
    """
    _, cache = _run_forward(model, scenario, command)
    out = {}
    for key, name in (("attn1", "agents"), ("attn2", "map")):
        stage_cache = cache[key]
        if stage_cache is None:
            out[name] = np.zeros((model.config.n_heads, 0))
        else:
            out[name] = stage_cache[6].copy()
    return out


def imitation_loss(pred: Trajectory, gt: Trajectory) -> float:
    """Mean squared Euclidean waypoint distance."""
    if len(pred) != T_F or len(gt) != T_F:
        raise ValueError(f"trajectories must have {T_F} waypoints")
    total = 0.0
    for (px, py), (gx, gy) in zip(pred, gt):
        dx, dy = px - gx, py - gy
        total += dx * dx + dy * dy
    return total / T_F


def backward(model: PlannerModel, scenario: Scenario, command: MetaAction,
             gt: Trajectory) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact reverse-mode gradients for every model parameter."""
    p = model.params
    config = model.config
    d = config.d_model
    pred, cache = _run_forward(model, scenario, command)

    gt_arr = np.array([[x, y] for x, y in gt])
    diff = pred - gt_arr
    loss = imitation_loss(Trajectory(tuple((float(x), float(y)) for x, y in pred)), gt)

    grads = zero_gradients(config)
    g_out = (2.0 / T_F) * diff.reshape(1, T_F * 2)
    g_head_in = _mlp_backward(p, grads, "plan_head", g_out, cache["head"])[0]

    g_q1 = g_head_in[:d].copy()
    g_q2 = g_head_in[d:2 * d]

    g_q1_from_attn2, g_qpos2, g_qm, g_kpos2 = _attention_backward(
        p, grads, config, "attn2", g_q2, cache["attn2"])
    g_q1 += g_q1_from_attn2

    g_ego_query, g_qpos1, g_qa, g_kpos1 = _attention_backward(
        p, grads, config, "attn1", g_q1, cache["attn1"])
    grads["ego_query"] += g_ego_query

    n_a, n_m = cache["n_a"], cache["n_m"]
    if n_a:
        _mlp_backward(p, grads, "agent_enc", g_qa, cache["agent"])
        g_pe1 = np.vstack([g_qpos1[None, :], g_kpos1])
    else:
        g_pe1 = g_qpos1[None, :]
    _mlp_backward(p, grads, "pe1", g_pe1, cache["pe1"])
    if n_m:
        _mlp_backward(p, grads, "map_enc", g_qm, cache["map"])
        g_pe2 = np.vstack([g_qpos2[None, :], g_kpos2])
    else:
        g_pe2 = g_qpos2[None, :]
    _mlp_backward(p, grads, "pe2", g_pe2, cache["pe2"])
    return loss, grads


# --- training --------------------------------------------------------------------

def train(model: PlannerModel, scenarios: list[Scenario], oracle: Oracle,
          epochs: int, lr: float, seed: int) -> tuple[PlannerModel, list[float]]:
    """Plain per-sample SGD with a seeded shuffle per epoch.

    The command for each scenario comes from the frozen oracle (SHORT
    format), not from the stored route intent. Returns the trained copy
    and the per-epoch mean loss curve.
    """
    if not scenarios:
        raise PlannerError("cannot train on an empty scenario list")
    trained = model.copy()
    commands = [oracle.decide(s, Format.SHORT).action for s in scenarios]
    rng = SplitMix64(seed)
    curve: list[float] = []
    order = list(range(len(scenarios)))
    for epoch in range(epochs):
        rng.shuffle(order)
        total = 0.0
        for i in order:
            loss, grads = backward(trained, scenarios[i], commands[i],
                                   scenarios[i].gt_future)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, scenario {scenarios[i].id!r}; "
                    f"the learning rate {lr} is likely too high"
                )
            for name, grad in grads.items():
                trained.params[name] -= lr * grad
            total += loss
        curve.append(total / len(scenarios))
    return trained, curve


# --- checkpoints -------------------------------------------------------------------

def save_checkpoint(model: PlannerModel, path: str | os.PathLike) -> None:
    """Single JSON object, sorted parameter names, canonical floats."""
    model.validate()
    obj = {
        "version": 1,
        "config": model.config.to_dict(),
        "params": {
            name: {
                "shape": list(model.params[name].shape),
                "data": [float(v) for v in model.params[name].ravel()],
            }
            for name in sorted(model.params)
        },
    }
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        fh.write(jsonio.dumps(obj))
        fh.write("\n")


def load_checkpoint(path: str | os.PathLike) -> PlannerModel:
    with open(os.fspath(path), "r", encoding="utf-8") as fh:
        try:
            obj = jsonio.loads(fh.read())
        except ValueError as e:
            raise CheckpointError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(obj, dict) or obj.get("version") != 1:
        raise CheckpointError(f"{path}: unsupported checkpoint version")
    try:
        config = PlannerConfig(**obj["config"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: bad config: {e}") from None
    expected = dict(param_layout(config))
    raw = obj.get("params")
    if not isinstance(raw, dict):
        raise CheckpointError(f"{path}: missing params object")
    if set(raw) != set(expected):
        missing = sorted(set(expected) - set(raw))
        extra = sorted(set(raw) - set(expected))
        raise CheckpointError(f"{path}: parameter names mismatch: "
                              f"missing={missing} extra={extra}")
    params = {}
    for name, shape in expected.items():
        entry = raw[name]
        if tuple(entry.get("shape", ())) != shape:
            raise CheckpointError(f"{path}: {name}: shape {entry.get('shape')} != {list(shape)}")
        data = np.array(entry["data"], dtype=float)
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"{path}: {name}: data length {data.size}")
        params[name] = data.reshape(shape)
    model = PlannerModel(config, params)
    try:
        model.validate()
    except PlannerError as e:
        raise CheckpointError(f"{path}: {e}") from None
    return model
