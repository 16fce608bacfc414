import math

import numpy as np
import pytest

from meta_attn_lib.attention import AttentionAction, AttentionWindow, crop
from meta_attn_lib.environment import LayoutMode, render, reset
from meta_attn_lib.errors import ConfigurationError
from meta_attn_lib.gradcheck import random_contexts
from meta_attn_lib.meta_controller import (
    AttentionController,
    MetaControllerNet,
    NoAttentionController,
    NoAttentionNet,
    ScriptedController,
    StepContext,
    build_controller,
    forward_attention,
    forward_no_attention,
    select_action,
)


def fixed_observation():
    state, obs = reset(LayoutMode.FIXED, np.random.default_rng(0))
    return state, obs


def test_zero_params_uniform():
    net = MetaControllerNet()
    _, obs = fixed_observation()
    p_g, p_a, hidden, _ = forward_attention(
        net, crop(obs, AttentionWindow(0)), obs.instruction, net.initial_hidden()
    )
    np.testing.assert_allclose(p_g, [0.25] * 4)
    np.testing.assert_allclose(p_a, [1 / 3] * 3)
    assert hidden.h.shape == (32,)


def test_zero_params_uniform_no_attention():
    _, obs = fixed_observation()
    p_g, _ = forward_no_attention(NoAttentionNet(), obs.image, obs.instruction)
    np.testing.assert_allclose(p_g, [0.25] * 4)


def test_forward_deterministic():
    net = MetaControllerNet(np.random.default_rng(1))
    _, obs = fixed_observation()
    view = crop(obs, AttentionWindow(2))

    first = forward_attention(net, view, obs.instruction, net.initial_hidden())
    second = forward_attention(net, view, obs.instruction, net.initial_hidden())
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    np.testing.assert_array_equal(first[2].c, second[2].c)


def test_hidden_state_carries_history():
    net = MetaControllerNet(np.random.default_rng(2), init_scale=0.5)
    _, obs = fixed_observation()
    view = crop(obs, AttentionWindow(0))

    _, _, hidden, _ = forward_attention(net, view, obs.instruction, net.initial_hidden())
    p_g_fresh, *_ = forward_attention(net, view, obs.instruction, net.initial_hidden())
    p_g_later, *_ = forward_attention(net, view, obs.instruction, hidden)
    assert not np.allclose(p_g_fresh, p_g_later)


def test_forward_shape_errors():
    _, obs = fixed_observation()
    net = MetaControllerNet()
    with pytest.raises(ConfigurationError):
        forward_attention(net, obs.image, obs.instruction, net.initial_hidden())
    with pytest.raises(ConfigurationError):
        forward_no_attention(NoAttentionNet(), obs.image[:5], obs.instruction)
    with pytest.raises(ConfigurationError):
        forward_no_attention(NoAttentionNet(), obs.image, np.ones(3))


def test_select_action_degenerate():
    action = select_action(np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0]), np.random.default_rng(0))
    assert action.subgoal == 0
    assert action.attention == AttentionAction.DOWN
    assert action.joint_log_prob == 0


def test_select_action_joint_log_prob():
    p_g = np.array([0.1, 0.2, 0.3, 0.4])
    p_a = np.array([0.2, 0.5, 0.3])
    rng = np.random.default_rng(3)
    for _ in range(20):
        action = select_action(p_g, p_a, rng)
        expected = math.log(p_g[action.subgoal]) + math.log(p_a[action.attention])
        assert action.joint_log_prob == pytest.approx(expected)


def test_select_action_without_attention_head():
    action = select_action(np.array([0.0, 0, 1.0, 0]), None, np.random.default_rng(0))
    assert action.subgoal == 2
    assert action.attention == AttentionAction.NOOP


def test_select_action_reproducible():
    p_g = np.full(4, 0.25)
    p_a = np.full(3, 1 / 3)

    def draws(seed):
        rng = np.random.default_rng(seed)
        return [select_action(p_g, p_a, rng) for _ in range(30)]

    assert draws(4) == draws(4)


@pytest.mark.parametrize('uses_attention', [True, False])
def test_backprop_reaches_every_parameter(uses_attention):
    rng = np.random.default_rng(5)
    controller = build_controller(uses_attention, rng)

    for _ in range(8):
        controller.start_episode()
        contexts = random_contexts(rng, 4)
        for context in contexts:
            controller.decide(context, rng)
        controller.backward(list(rng.normal(size=len(contexts))))

    for name, g in controller.store.grads.items():
        assert np.any(g != 0), name


def test_backward_length_mismatch():
    rng = np.random.default_rng(6)
    controller = build_controller(True, rng)
    controller.start_episode()
    for context in random_contexts(rng, 2):
        controller.decide(context, rng)
    with pytest.raises(ConfigurationError):
        controller.backward([1.0])


def test_build_controller_kinds():
    assert isinstance(build_controller(True), AttentionController)
    assert isinstance(build_controller(False), NoAttentionController)


def test_build_controller_init_from(tmp_path):
    trained = build_controller(True, np.random.default_rng(7))
    trained.store.save(tmp_path / 'ckpt.npz')

    loaded = build_controller(True, np.random.default_rng(8), init_from=tmp_path / 'ckpt.npz')
    for name in trained.store:
        np.testing.assert_array_equal(loaded.store[name], trained.store[name])


def test_scripted_controller_no_attention(canonical_state):
    state = canonical_state(row=0)
    context = StepContext(observation=render(state), window=AttentionWindow(0), state=state)
    action = ScriptedController(uses_attention=False).decide(context, np.random.default_rng(0))
    assert action.subgoal == state.target_color
    assert action.attention == AttentionAction.NOOP


def test_scripted_controller_lowest_visible_room(canonical_state):
    state = canonical_state(row=0)
    controller = ScriptedController(uses_attention=True)

    context = StepContext(observation=render(state), window=AttentionWindow(0), state=state)
    action = controller.decide(context, np.random.default_rng(0))
    # room 1 (green) is the lowest room visible from the top window
    assert action.subgoal == 1
    assert action.attention == AttentionAction.DOWN

    context = StepContext(observation=render(state), window=AttentionWindow(4), state=state)
    assert controller.decide(context, np.random.default_rng(0)).subgoal == state.target_color


@pytest.mark.parametrize('perturbed, unchanged', [('attn', 0), ('goal', 1)])
def test_heads_independent(perturbed, unchanged):
    net = MetaControllerNet(np.random.default_rng(9), init_scale=0.5)
    _, obs = fixed_observation()
    view = crop(obs, AttentionWindow(1))
    _, _, hidden, _ = forward_attention(net, view, obs.instruction, net.initial_hidden())

    before = forward_attention(net, view, obs.instruction, hidden)
    rng = np.random.default_rng(10)
    for suffix in ('w', 'b'):
        p = net.store[f'{perturbed}.{suffix}']
        p += rng.normal(size=p.shape)
    after = forward_attention(net, view, obs.instruction, hidden)

    np.testing.assert_array_equal(before[unchanged], after[unchanged])
    assert not np.allclose(before[1 - unchanged], after[1 - unchanged])
