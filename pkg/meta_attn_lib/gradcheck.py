from collections.abc import Callable
from dataclasses import replace
from functools import partial

import numpy as np

from .attention import MAX_TOP_ROW, AttentionWindow
from .config import config
from .environment import LayoutMode, render, reset
from .meta_controller import NUM_ATTENTION_ACTIONS, NUM_SUBGOALS, StepContext, build_controller
from .numeric import (
    LSTMCellState,
    ParamStore,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    log_prob_grad,
    lstm_step,
    lstm_step_backward,
    relu,
    relu_backward,
    softmax,
)
from .utils import GRADCHECK_STREAM, make_rng


def finite_diff_check(
    store: ParamStore,
    loss_fn: Callable[[bool], float],
    epsilon: float = 1e-5,
    *,
    floor: float = 1e-8,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    kink_key: Callable[[], object] | None = None,
) -> float:
    """
    Compares analytic gradients against central differences, returns the worst relative error

    loss_fn(backward) evaluates the loss at the current parameters; with backward=True it
    also accumulates the analytic gradient into store.grads.
    max_entries limits the checked coordinates per tensor (sampled with rng).
    kink_key, if given, is read after each evaluation; coordinates where it differs between
    +epsilon and -epsilon crossed a nondifferentiable point and are skipped.
    """

    assert epsilon > 0

    store.zero_grad()
    loss_fn(True)
    analytic = {name: g.copy() for name, g in store.grads.items()}
    store.zero_grad()

    worst = 0.0

    for name, p in store.params.items():
        flat = p.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            indices = rng.choice(flat.size, size=max_entries, replace=False)

        a_flat = analytic[name].reshape(-1)

        for i in indices:
            orig = flat[i]

            flat[i] = orig + epsilon
            f_plus = loss_fn(False)
            key_plus = kink_key() if kink_key else None
            flat[i] = orig - epsilon
            f_minus = loss_fn(False)
            key_minus = kink_key() if kink_key else None
            flat[i] = orig

            if key_plus != key_minus:
                continue

            numeric = (f_plus - f_minus) / (2 * epsilon)
            a = a_flat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)

    store.zero_grad()
    return worst


# suite

TOLERANCE = 1e-4
EPSILON = 1e-5

# below these magnitudes central-difference roundoff (~1e-10) dominates the relative error
LAYER_FLOOR = 1e-6
NET_FLOOR = 1e-5

NET_INIT_SCALE = 0.5
NET_MAX_ENTRIES = 40


def _conv_check(rng: np.random.Generator) -> float:
    store = ParamStore()
    x = store.add('input', rng.normal(size=(5, 5, 5)))
    kernels = store.add('kernels', rng.normal(scale=0.5, size=(3, 3, 5, 8)))
    bias = store.add('bias', rng.normal(size=8))
    proj = rng.normal(size=(3, 3, 8))

    def loss_fn(backward: bool) -> float:
        out = conv2d_forward(x, kernels, bias)
        if backward:
            dx, dk, db = conv2d_backward(proj, x, kernels)
            store.grads['input'] += dx
            store.grads['kernels'] += dk
            store.grads['bias'] += db
        return float(np.sum(out * proj))

    return finite_diff_check(store, loss_fn, EPSILON, floor=LAYER_FLOOR)


def _relu_check(rng: np.random.Generator) -> float:
    store = ParamStore()
    # keep clear of the kink at 0
    magnitude = rng.uniform(0.1, 1.0, size=20)
    x = store.add('input', magnitude * rng.choice([-1.0, 1.0], size=20))
    proj = rng.normal(size=20)

    def loss_fn(backward: bool) -> float:
        if backward:
            store.grads['input'] += relu_backward(proj, x)
        return float(np.sum(relu(x) * proj))

    return finite_diff_check(store, loss_fn, EPSILON, floor=LAYER_FLOOR)


def _dense_check(rng: np.random.Generator) -> float:
    store = ParamStore()
    x = store.add('input', rng.normal(size=6))
    w = store.add('w', rng.normal(size=(6, 4)))
    b = store.add('b', rng.normal(size=4))
    proj = rng.normal(size=4)

    def loss_fn(backward: bool) -> float:
        out = dense_forward(x, w, b)
        if backward:
            dx, dw, db = dense_backward(proj, x, w)
            store.grads['input'] += dx
            store.grads['w'] += dw
            store.grads['b'] += db
        return float(out @ proj)

    return finite_diff_check(store, loss_fn, EPSILON, floor=LAYER_FLOOR)


def _lstm_check(rng: np.random.Generator, steps: int = 3, n_in: int = 4, n_hidden: int = 3) -> float:
    store = ParamStore()
    xs = store.add('inputs', rng.normal(size=(steps, n_in)))
    w = store.add('w', rng.normal(scale=0.5, size=(n_in + n_hidden, 4 * n_hidden)))
    b = store.add('b', rng.normal(scale=0.5, size=4 * n_hidden))
    h_proj = rng.normal(size=(steps, n_hidden))
    c_proj = rng.normal(size=n_hidden)

    def loss_fn(backward: bool) -> float:
        state = LSTMCellState.zeros(n_hidden)
        caches = []
        loss = 0.0
        for t in range(steps):
            h, state, cache = lstm_step(xs[t], state, w, b)
            caches.append(cache)
            loss += float(h @ h_proj[t])
        loss += float(state.c @ c_proj)

        if backward:
            dh_next = np.zeros(n_hidden)
            dc_next = c_proj.copy()
            for t in reversed(range(steps)):
                dx, dh_next, dc_next, dw, db = lstm_step_backward(
                    h_proj[t] + dh_next, dc_next, caches[t], w
                )
                store.grads['inputs'][t] += dx
                store.grads['w'] += dw
                store.grads['b'] += db
        return loss

    return finite_diff_check(store, loss_fn, EPSILON, floor=LAYER_FLOOR)


def _softmax_head_check(rng: np.random.Generator) -> float:
    store = ParamStore()
    logits = store.add('logits', rng.normal(size=4))
    index = int(rng.integers(4))
    advantage = rng.normal()

    def loss_fn(backward: bool) -> float:
        p = softmax(logits)
        if backward:
            store.grads['logits'] += -advantage * log_prob_grad(p, index)
        return float(-advantage * np.log(p[index]))

    return finite_diff_check(store, loss_fn, EPSILON, floor=LAYER_FLOOR)


def random_contexts(rng: np.random.Generator, steps: int) -> list[StepContext]:
    """
    Observations from random layouts, agent rows and windows
    """

    contexts = []
    for _ in range(steps):
        state, _ = reset(LayoutMode.DYNAMIC, rng)
        state = replace(state, agent_row=int(rng.integers(config.grid_rows)))
        window = AttentionWindow(int(rng.integers(MAX_TOP_ROW + 1)))
        contexts.append(StepContext(observation=render(state), window=window, state=state))
    return contexts


def episode_loss_fn(controller, contexts, actions, advantages) -> Callable[[bool], float]:
    """
    Surrogate loss -sum_t A_t * log pi(a_t) of a fixed episode, as a finite_diff_check loss
    """

    def loss_fn(backward: bool) -> float:
        controller.start_episode()
        loss = 0.0
        for context, (subgoal, attention), advantage in zip(contexts, actions, advantages):
            controller.step(context)
            loss -= advantage * controller.choose(subgoal, attention)
        if backward:
            controller.backward([-a for a in advantages])
        return loss

    return loss_fn


def relu_pattern(controller) -> bytes:
    """
    On/off pattern of every ReLU in the recorded episode
    """

    parts = []
    for step in controller.steps:
        processor = step.cache.processor
        parts.append(np.packbits(processor.conv_pre > 0).tobytes())
        parts.append(np.packbits(processor.fc_pre > 0).tobytes())
    return b''.join(parts)


def _net_check(
    rng: np.random.Generator,
    uses_attention: bool,
    steps: int,
    floor: float = NET_FLOOR,
    max_entries: int | None = NET_MAX_ENTRIES,
) -> float:
    controller = build_controller(uses_attention, rng, init_scale=NET_INIT_SCALE)
    contexts = random_contexts(rng, steps)
    actions = [
        (int(rng.integers(NUM_SUBGOALS)), int(rng.integers(NUM_ATTENTION_ACTIONS)))
        for _ in range(steps)
    ]
    advantages = list(rng.normal(size=steps))

    loss_fn = episode_loss_fn(controller, contexts, actions, advantages)
    return finite_diff_check(
        controller.store,
        loss_fn,
        EPSILON,
        floor=floor,
        max_entries=max_entries,
        rng=rng,
        kink_key=partial(relu_pattern, controller),
    )


CHECKS = {
    'conv2d': _conv_check,
    'relu': _relu_check,
    'dense': _dense_check,
    'lstm': _lstm_check,
    'softmax_head': _softmax_head_check,
    'attention_net': partial(_net_check, uses_attention=True, steps=3),
    'no_attention_net': partial(_net_check, uses_attention=False, steps=2),
    # every coordinate at the default floor
    'no_attention_net_full': partial(_net_check, uses_attention=False, steps=2, floor=1e-8, max_entries=None),
}


def run_gradcheck_suite(seeds: int = 20) -> dict[str, float]:
    """
    Worst relative error per check over the given number of seeds
    """

    results = {}
    for name, check in CHECKS.items():
        results[name] = max(check(make_rng(seed, GRADCHECK_STREAM)) for seed in range(seeds))
        status = 'ok' if results[name] < TOLERANCE else 'FAILED'
        print(f'  {name}: max relative error {results[name]:.2e} {status}')
    return results
