import math

import numpy as np
import pytest

from vecdrive.planner import (
    INPUT_SCALE,
    CheckpointError,
    PlannerConfig,
    PlannerError,
    attention_weights,
    backward,
    command_one_hot,
    cross_attention,
    encode_scene,
    forward,
    imitation_loss,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
    TrainingDiverged,
)
from vecdrive.oracle import RuleOracle
from vecdrive.rng import SplitMix64
from vecdrive.scene import MetaAction, Trajectory

from conftest import make_agent, make_polyline, make_scenario
from helpers_grad import fd_gradients, max_relative_error

TINY = PlannerConfig(d_model=2, n_heads=1, hidden=2)


def zero_model(config=TINY):
    model = init_model(config, seed=1)
    for arr in model.params.values():
        arr[:] = 0.0
    return model


def rand_model(config=TINY, seed=3):
    return init_model(config, seed)


# --- config / init -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(PlannerError):
        PlannerConfig(d_model=5, n_heads=2).validate()
    with pytest.raises(PlannerError):
        PlannerConfig(t_f=7).validate()
    with pytest.raises(PlannerError):
        PlannerConfig(hidden=0).validate()
    PlannerConfig().validate()


def test_init_same_seed_identical():
    a = init_model(PlannerConfig(), 42)
    b = init_model(PlannerConfig(), 42)
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])


def test_init_different_seeds_differ():
    a = init_model(TINY, 1)
    b = init_model(TINY, 2)
    assert any(not np.array_equal(a.params[n], b.params[n]) for n in a.params)


def test_init_fan_in_bounds():
    # hidden=4 puts fan_in=4 on every *.w2, so the bound is 0.5.
    model = init_model(PlannerConfig(d_model=4, n_heads=2, hidden=4), 9)
    for name, arr in model.params.items():
        if name.endswith(".w2"):
            assert np.all(np.abs(arr) <= 0.5)
    pooled = np.concatenate([model.params[n].ravel()
                             for n in model.params if n.endswith(".w2")])
    assert np.max(np.abs(pooled)) > 0.4   # the range is actually used


def test_init_biases_zero():
    model = init_model(TINY, 5)
    for name, arr in model.params.items():
        if name.endswith(".b1") or name.endswith(".b2"):
            assert np.all(arr == 0.0)


def test_param_layout_closed_set():
    model = init_model(TINY, 1)
    model.validate()
    model.params["bogus"] = np.zeros(2)
    with pytest.raises(PlannerError):
        model.validate()
    del model.params["bogus"]
    del model.params["ego_query"]
    with pytest.raises(PlannerError):
        model.validate()


# --- encode_scene --------------------------------------------------------------

def test_encode_empty_scene():
    model = rand_model()
    enc = encode_scene(model, make_scenario(agents=(), polylines=()))
    assert not enc.agent_mask.any()
    assert not enc.map_mask.any()
    assert np.all(enc.q_a == 0.0)
    assert np.all(enc.q_m == 0.0)


def test_encode_identical_agents_identical_rows():
    model = rand_model()
    a = make_agent(agent_id=1, position=(5.0, 2.0))
    b = make_agent(agent_id=2, position=(5.0, 2.0))
    enc = encode_scene(model, make_scenario(agents=(a, b)))
    assert np.array_equal(enc.q_a[0], enc.q_a[1])
    assert enc.agent_mask[:2].all() and not enc.agent_mask[2:].any()


def test_encode_hand_computed_row():
    # d_model=2, hidden=2, explicit weights: row = w2 @ tanh(w1 @ f) + b2.
    model = zero_model()
    model.params["agent_enc.w1"][:] = [[0.1, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0],
                                       [0.0, 0.3, 0.0, 0.0, 0.1, 0.0, 0.0]]
    model.params["agent_enc.b1"][:] = [0.05, -0.02]
    model.params["agent_enc.w2"][:] = [[1.0, -0.5], [0.25, 0.75]]
    model.params["agent_enc.b2"][:] = [0.01, 0.02]
    agent = make_agent(agent_id=1, position=(4.0, -2.0), heading=0.5, speed=3.0,
                       extent=(4.2, 1.8))
    enc = encode_scene(model, make_scenario(agents=(agent,)))
    f = [4.0 * INPUT_SCALE, -2.0 * INPUT_SCALE, math.cos(0.5), math.sin(0.5),
         3.0 * INPUT_SCALE, 4.2 * INPUT_SCALE, 1.8 * INPUT_SCALE]
    h0 = math.tanh(0.1 * f[0] + 0.2 * f[2] + 0.05)
    h1 = math.tanh(0.3 * f[1] + 0.1 * f[4] - 0.02)
    expected = (1.0 * h0 - 0.5 * h1 + 0.01, 0.25 * h0 + 0.75 * h1 + 0.02)
    assert enc.q_a[0] == pytest.approx(expected, abs=1e-15)


# --- cross_attention -------------------------------------------------------------

def test_attention_all_masked_returns_zero():
    model = rand_model()
    out = cross_attention(
        model, "attn1",
        q_in=np.ones(2), k_src=np.ones((3, 2)), q_pos_emb=np.zeros(2),
        k_pos_embs=np.zeros((3, 2)), mask=np.zeros(3, dtype=bool),
    )
    assert np.array_equal(out, np.zeros(2))


def test_attention_single_key_ignores_logits():
    model = rand_model(seed=8)
    k = np.array([0.7, -1.3])
    out = cross_attention(
        model, "attn2",
        q_in=np.array([5.0, -2.0]), k_src=k[None, :],
        q_pos_emb=np.array([1.0, 1.0]), k_pos_embs=np.array([[0.3, 0.4]]),
        mask=np.ones(1, dtype=bool),
    )
    expected = model.params["attn2.wo"] @ (model.params["attn2.wv"] @ k)
    assert out == pytest.approx(expected, abs=1e-12)


def test_attention_two_keys_hand_computed():
    model = zero_model()
    model.params["attn1.wq"][:] = [[1.0, 0.0], [0.0, 1.0]]
    model.params["attn1.wk"][:] = [[0.5, 0.0], [0.0, 0.5]]
    model.params["attn1.wv"][:] = [[0.0, 1.0], [1.0, 0.0]]
    model.params["attn1.wo"][:] = [[2.0, 0.0], [0.0, 2.0]]
    q_in = np.array([1.0, 0.5])
    q_pos = np.array([0.1, -0.1])
    k_src = np.array([[1.0, 0.0], [0.0, 1.0]])
    k_pos = np.array([[0.0, 0.2], [0.2, 0.0]])
    out = cross_attention(model, "attn1", q_in, k_src, q_pos, k_pos,
                          mask=np.ones(2, dtype=bool))
    # Hand evaluation with scalar arithmetic (single head, d_k = 2).
    q = (1.1, 0.4)
    keys = [(0.5 * 1.0, 0.5 * 0.2), (0.5 * 0.2, 0.5 * 1.0)]
    logits = [(q[0] * k[0] + q[1] * k[1]) / math.sqrt(2.0) for k in keys]
    m = max(logits)
    w = [math.exp(l - m) for l in logits]
    total = sum(w)
    w = [x / total for x in w]
    values = [(0.0 * 1.0 + 1.0 * 0.0, 1.0 * 1.0 + 0.0 * 0.0),
              (0.0 * 0.0 + 1.0 * 1.0, 1.0 * 0.0 + 0.0 * 1.0)]
    mixed = (w[0] * values[0][0] + w[1] * values[1][0],
             w[0] * values[0][1] + w[1] * values[1][1])
    expected = (2.0 * mixed[0], 2.0 * mixed[1])
    assert out == pytest.approx(expected, abs=1e-12)


def test_attention_weights_sum_to_one():
    model = init_model(PlannerConfig(), 7)
    s = make_scenario(agents=(make_agent(1), make_agent(2, position=(8.0, -3.0))),
                      polylines=(make_polyline(1), make_polyline(2, y=3.5)))
    weights = attention_weights(model, s, MetaAction.GO_STRAIGHT)
    for name in ("agents", "map"):
        sums = weights[name].sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-9)


# --- forward ---------------------------------------------------------------------

def test_forward_zero_params_zero_waypoints():
    model = zero_model()
    out = forward(model, make_scenario(agents=(make_agent(),)), MetaAction.GO_STRAIGHT)
    assert all(p == (0.0, 0.0) for p in out)


def test_forward_deterministic():
    model = init_model(PlannerConfig(), 11)
    s = make_scenario(agents=(make_agent(),))
    a = forward(model, s, MetaAction.TURN_LEFT)
    b = forward(model, s, MetaAction.TURN_LEFT)
    assert a == b


def test_forward_empty_scene_equals_hand_plan_head():
    model = zero_model()
    rng = SplitMix64(21)
    for name in ("plan_head.w1", "plan_head.b1", "plan_head.w2", "plan_head.b2"):
        arr = model.params[name]
        arr[:] = np.array([rng.uniform(-0.4, 0.4) for _ in range(arr.size)]).reshape(arr.shape)
    s = make_scenario(agents=(), polylines=(), speed=3.0)
    out = forward(model, s, MetaAction.TURN_RIGHT)
    # With no keys both attention stages give zero vectors.
    x = np.concatenate([np.zeros(2), np.zeros(2),
                        [3.0 * INPUT_SCALE, 0.0, 1.0], command_one_hot(MetaAction.TURN_RIGHT)])
    h = np.tanh(model.params["plan_head.w1"] @ x + model.params["plan_head.b1"])
    y = model.params["plan_head.w2"] @ h + model.params["plan_head.b2"]
    expected = y.reshape(6, 2)
    flat = np.array(list(out.waypoints))
    assert np.allclose(flat, expected, atol=1e-15)


def test_forward_permutation_invariant_over_keys():
    model = init_model(PlannerConfig(), 13)
    agents = tuple(make_agent(agent_id=i, position=(4.0 + 2 * i, (-1) ** i * 2.5))
                   for i in range(5))
    lines = tuple(make_polyline(i, y=3.5 * (i - 1)) for i in range(3))
    s = make_scenario(agents=agents, polylines=lines)
    base = np.array(list(forward(model, s, MetaAction.GO_STRAIGHT).waypoints))
    perm_agents = (agents[3], agents[0], agents[4], agents[2], agents[1])
    perm_lines = (lines[2], lines[0], lines[1])
    s2 = make_scenario(agents=perm_agents, polylines=perm_lines)
    permuted = np.array(list(forward(model, s2, MetaAction.GO_STRAIGHT).waypoints))
    assert np.max(np.abs(base - permuted)) <= 1e-9


def test_forward_output_shape_and_finite():
    model = init_model(PlannerConfig(), 19)
    s = make_scenario(agents=(make_agent(),))
    out = forward(model, s, MetaAction.TURN_LEFT)
    assert len(out) == 6
    assert all(math.isfinite(x) and math.isfinite(y) for x, y in out)


# --- imitation loss ----------------------------------------------------------------

def test_loss_identical_zero():
    t = Trajectory(tuple((0.5 * k, 0.0) for k in range(1, 7)))
    assert imitation_loss(t, t) == 0.0


def test_loss_unit_offset():
    t = Trajectory(tuple((0.5 * k, 0.0) for k in range(1, 7)))
    shifted = Trajectory(tuple((x + 1.0, y) for x, y in t))
    assert imitation_loss(shifted, t) == pytest.approx(1.0)


def test_loss_random_matches_reference():
    rng = SplitMix64(2)
    a = Trajectory(tuple((rng.uniform(-3, 3), rng.uniform(-3, 3)) for _ in range(6)))
    b = Trajectory(tuple((rng.uniform(-3, 3), rng.uniform(-3, 3)) for _ in range(6)))
    expected = sum((ax - bx) ** 2 + (ay - by) ** 2
                   for (ax, ay), (bx, by) in zip(a, b)) / 6
    assert imitation_loss(a, b) == pytest.approx(expected, abs=1e-15)


# --- backward ----------------------------------------------------------------------

def grad_scenario():
    agents = (make_agent(1, position=(6.0, 2.0), heading=0.3),
              make_agent(2, position=(10.0, -3.0), heading=-0.7, speed=1.5))
    lines = (make_polyline(1, y=0.0), make_polyline(2, y=3.5))
    return make_scenario(agents=agents, polylines=lines, speed=3.5,
                         route_intent=MetaAction.TURN_LEFT)


def test_backward_zero_model_zero_gt():
    model = zero_model()
    s = make_scenario(gt_future=Trajectory(((0.0, 0.0),) * 6), speed=0.0)
    loss, grads = backward(model, s, MetaAction.GO_STRAIGHT, s.gt_future)
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())


def test_backward_matches_finite_differences_tiny():
    model = init_model(TINY, seed=4)
    s = grad_scenario()
    loss, grads = backward(model, s, MetaAction.TURN_LEFT, s.gt_future)
    numeric = fd_gradients(model, s, MetaAction.TURN_LEFT, s.gt_future)
    assert max_relative_error(grads, numeric, loss) <= 1e-4
    assert loss > 0


def test_backward_empty_scene_agent_params_zero_grad():
    model = init_model(TINY, seed=6)
    s = make_scenario(agents=(), polylines=())
    _, grads = backward(model, s, MetaAction.GO_STRAIGHT, s.gt_future)
    for name in grads:
        if name.startswith(("agent_enc", "map_enc", "attn1", "attn2", "ego_query")):
            assert np.all(grads[name] == 0.0), name


def test_backward_loss_equals_forward_loss():
    model = init_model(TINY, seed=9)
    s = grad_scenario()
    loss, _ = backward(model, s, MetaAction.TURN_LEFT, s.gt_future)
    assert loss == pytest.approx(
        imitation_loss(forward(model, s, MetaAction.TURN_LEFT), s.gt_future), abs=1e-15
    )


# --- train -------------------------------------------------------------------------

def train_set(n=4):
    scenarios = []
    for i in range(n):
        scenarios.append(make_scenario(
            scenario_id=f"t{i}", agents=(make_agent(1, position=(5.0 + i, 2.0)),),
            speed=2.0 + i,
        ))
    return scenarios


def test_train_lr_zero_no_change():
    model = init_model(TINY, 3)
    trained, curve = train(model, train_set(), RuleOracle(), epochs=3, lr=0.0, seed=5)
    for name in model.params:
        assert np.array_equal(model.params[name], trained.params[name])
    assert len(curve) == 3
    assert curve[0] == pytest.approx(curve[1]) == pytest.approx(curve[2])


def test_train_overfits_single_scenario():
    model = init_model(PlannerConfig(d_model=8, n_heads=2, hidden=16), 3)
    scenarios = train_set(1)
    trained, curve = train(model, scenarios, RuleOracle(), epochs=300, lr=1e-2, seed=5)
    assert curve[-1] < 0.01 * curve[0]


def test_train_same_seed_bitwise_identical():
    model = init_model(TINY, 3)
    a, curve_a = train(model, train_set(), RuleOracle(), epochs=4, lr=1e-2, seed=7)
    b, curve_b = train(model, train_set(), RuleOracle(), epochs=4, lr=1e-2, seed=7)
    assert curve_a == curve_b
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])


def test_train_does_not_mutate_input_model():
    model = init_model(TINY, 3)
    snapshot = {k: v.copy() for k, v in model.params.items()}
    train(model, train_set(), RuleOracle(), epochs=2, lr=1e-2, seed=7)
    for name in snapshot:
        assert np.array_equal(snapshot[name], model.params[name])


def test_train_divergence_raises():
    model = init_model(TINY, 3)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged) as err:
            train(model, train_set(), RuleOracle(), epochs=200, lr=1e6, seed=5)
    assert "learning rate" in str(err.value)


def test_train_empty_rejected():
    with pytest.raises(PlannerError):
        train(init_model(TINY, 3), [], RuleOracle(), epochs=1, lr=0.1, seed=1)


# --- checkpoints ---------------------------------------------------------------------

def test_checkpoint_round_trip_bit_identical(tmp_path):
    model = init_model(PlannerConfig(), 23)
    p = tmp_path / "model.json"
    save_checkpoint(model, p)
    loaded = load_checkpoint(p)
    assert loaded.config == model.config
    for name in model.params:
        assert np.array_equal(loaded.params[name], model.params[name])


def test_checkpoint_write_deterministic(tmp_path):
    model = init_model(TINY, 23)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(model, p1)
    save_checkpoint(model, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_missing_param(tmp_path):
    model = init_model(TINY, 23)
    p = tmp_path / "model.json"
    save_checkpoint(model, p)
    obj = __import__("json").loads(p.read_text())
    del obj["params"]["ego_query"]
    p.write_text(__import__("json").dumps(obj))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(p)
    assert "ego_query" in str(err.value)


def test_checkpoint_rejects_bad_shape(tmp_path):
    model = init_model(TINY, 23)
    p = tmp_path / "model.json"
    save_checkpoint(model, p)
    obj = __import__("json").loads(p.read_text())
    obj["params"]["ego_query"]["shape"] = [3]
    p.write_text(__import__("json").dumps(obj))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
