from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionAction, AttentionWindow, crop, visible_rooms
from .config import config
from .environment import NUM_CHANNELS, Color, GridState, Observation
from .errors import ConfigurationError
from .numeric import (
    LSTMCache,
    LSTMCellState,
    ParamStore,
    categorical_sample,
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


NUM_SUBGOALS = len(Color)
NUM_ATTENTION_ACTIONS = len(AttentionAction)

KERNEL_SIZE = 3
CONV_FILTERS = 8
FC_SIZE = 32
HIDDEN_SIZE = 32

# the controller's summary of past and current attentions
MetaHidden = LSTMCellState


@dataclass(frozen=True)
class MetaAction:
    subgoal: int
    attention: AttentionAction
    joint_log_prob: float


@dataclass(frozen=True)
class StepContext:
    """
    What the rollout hands a controller at each meta-step
    """

    observation: Observation
    window: AttentionWindow
    state: GridState


# state processor: conv -> relu -> flatten -> concat instruction -> fc -> relu


def _add_state_processor(store: ParamStore, input_shape: tuple[int, int, int]):
    h, w, c = input_shape
    conv_out = (h - KERNEL_SIZE + 1) * (w - KERNEL_SIZE + 1) * CONV_FILTERS
    store.add('conv.kernels', np.zeros((KERNEL_SIZE, KERNEL_SIZE, c, CONV_FILTERS)))
    store.add('conv.bias', np.zeros(CONV_FILTERS))
    store.add('fc.w', np.zeros((conv_out + NUM_SUBGOALS, FC_SIZE)))
    store.add('fc.b', np.zeros(FC_SIZE))


@dataclass(frozen=True)
class ProcessorCache:
    x: np.ndarray
    conv_pre: np.ndarray
    fc_in: np.ndarray
    fc_pre: np.ndarray


def _state_processor_forward(store: ParamStore, x: np.ndarray, instruction: np.ndarray):
    if instruction.shape != (NUM_SUBGOALS,):
        raise ConfigurationError(f'instruction must have shape ({NUM_SUBGOALS},)')

    conv_pre = conv2d_forward(x, store['conv.kernels'], store['conv.bias'])
    fc_in = np.concatenate([relu(conv_pre).reshape(-1), instruction])
    fc_pre = dense_forward(fc_in, store['fc.w'], store['fc.b'])
    return relu(fc_pre), ProcessorCache(x=x, conv_pre=conv_pre, fc_in=fc_in, fc_pre=fc_pre)


def _state_processor_backward(store: ParamStore, dfeatures: np.ndarray, cache: ProcessorCache):
    g = store.grads

    dfc_pre = relu_backward(dfeatures, cache.fc_pre)
    dfc_in, dw, db = dense_backward(dfc_pre, cache.fc_in, store['fc.w'])
    g['fc.w'] += dw
    g['fc.b'] += db

    dconv = dfc_in[: cache.conv_pre.size].reshape(cache.conv_pre.shape)
    dconv_pre = relu_backward(dconv, cache.conv_pre)
    _, dk, dbias = conv2d_backward(dconv_pre, cache.x, store['conv.kernels'])
    g['conv.kernels'] += dk
    g['conv.bias'] += dbias


def _head_backward(store: ParamStore, name: str, dlogits: np.ndarray, h: np.ndarray) -> np.ndarray:
    store.grads[f'{name}.w'] += np.outer(h, dlogits)
    store.grads[f'{name}.b'] += dlogits
    return store[f'{name}.w'] @ dlogits


# networks


class MetaControllerNet:
    """
    State processor over the attention crop, an LSTM, and independent subgoal and attention heads
    """

    input_shape = (config.window_size, config.grid_cols, NUM_CHANNELS)

    def __init__(self, rng: np.random.Generator | None = None, init_scale: float = config.init_scale):
        self.store = ParamStore()
        _add_state_processor(self.store, self.input_shape)
        self.store.add('lstm.w', np.zeros((FC_SIZE + HIDDEN_SIZE, 4 * HIDDEN_SIZE)))
        self.store.add('lstm.b', np.zeros(4 * HIDDEN_SIZE))
        self.store.add('goal.w', np.zeros((HIDDEN_SIZE, NUM_SUBGOALS)))
        self.store.add('goal.b', np.zeros(NUM_SUBGOALS))
        self.store.add('attn.w', np.zeros((HIDDEN_SIZE, NUM_ATTENTION_ACTIONS)))
        self.store.add('attn.b', np.zeros(NUM_ATTENTION_ACTIONS))

        if rng is not None:
            self.store.init_uniform(rng, init_scale)

    def initial_hidden(self) -> MetaHidden:
        return MetaHidden.zeros(HIDDEN_SIZE)


class NoAttentionNet:
    """
    Feedforward state processor over the full grid image with a subgoal head
    """

    input_shape = (config.grid_rows, config.grid_cols, NUM_CHANNELS)

    def __init__(self, rng: np.random.Generator | None = None, init_scale: float = config.init_scale):
        self.store = ParamStore()
        _add_state_processor(self.store, self.input_shape)
        self.store.add('goal.w', np.zeros((FC_SIZE, NUM_SUBGOALS)))
        self.store.add('goal.b', np.zeros(NUM_SUBGOALS))

        if rng is not None:
            self.store.init_uniform(rng, init_scale)


@dataclass(frozen=True)
class AttentionCache:
    processor: ProcessorCache
    lstm: LSTMCache
    h: np.ndarray


def forward_attention(
    net: MetaControllerNet, crop_: np.ndarray, instruction: np.ndarray, hidden: MetaHidden
):
    """
    Returns (P_g, P_a, new hidden, cache for backprop)
    """

    if crop_.shape != net.input_shape:
        raise ConfigurationError(f'crop must have shape {net.input_shape}, got {crop_.shape}')

    store = net.store
    features, processor = _state_processor_forward(store, crop_, instruction)
    h, hidden, lstm_cache = lstm_step(features, hidden, store['lstm.w'], store['lstm.b'])

    p_g = softmax(dense_forward(h, store['goal.w'], store['goal.b']))
    p_a = softmax(dense_forward(h, store['attn.w'], store['attn.b']))
    return p_g, p_a, hidden, AttentionCache(processor=processor, lstm=lstm_cache, h=h)


def backward_attention(
    net: MetaControllerNet,
    caches: Sequence[AttentionCache],
    dlogits_g: Sequence[np.ndarray],
    dlogits_a: Sequence[np.ndarray],
):
    """
    Backprop through time over one episode, accumulating into net.store.grads
    """

    store = net.store
    dh_next = np.zeros(HIDDEN_SIZE)
    dc_next = np.zeros(HIDDEN_SIZE)

    for t in reversed(range(len(caches))):
        cache = caches[t]
        dh = dh_next
        dh = dh + _head_backward(store, 'goal', dlogits_g[t], cache.h)
        dh = dh + _head_backward(store, 'attn', dlogits_a[t], cache.h)

        dx, dh_next, dc_next, dw, db = lstm_step_backward(dh, dc_next, cache.lstm, store['lstm.w'])
        store.grads['lstm.w'] += dw
        store.grads['lstm.b'] += db

        _state_processor_backward(store, dx, cache.processor)


@dataclass(frozen=True)
class NoAttentionCache:
    processor: ProcessorCache
    features: np.ndarray


def forward_no_attention(net: NoAttentionNet, image: np.ndarray, instruction: np.ndarray):
    """
    Returns (P_g, cache for backprop)
    """

    if image.shape != net.input_shape:
        raise ConfigurationError(f'image must have shape {net.input_shape}, got {image.shape}')

    store = net.store
    features, processor = _state_processor_forward(store, image, instruction)
    p_g = softmax(dense_forward(features, store['goal.w'], store['goal.b']))
    return p_g, NoAttentionCache(processor=processor, features=features)


def backward_no_attention(net: NoAttentionNet, cache: NoAttentionCache, dlogits_g: np.ndarray):
    dfeatures = _head_backward(net.store, 'goal', dlogits_g, cache.features)
    _state_processor_backward(net.store, dfeatures, cache.processor)


def select_action(p_g: np.ndarray, p_a: np.ndarray | None, rng: np.random.Generator) -> MetaAction:
    """
    Independent samples from the two heads; without an attention head the window stays put
    """

    subgoal, log_p_g = categorical_sample(p_g, rng)
    if p_a is None:
        return MetaAction(subgoal=subgoal, attention=AttentionAction.NOOP, joint_log_prob=log_p_g)

    attention, log_p_a = categorical_sample(p_a, rng)
    return MetaAction(
        subgoal=subgoal,
        attention=AttentionAction(attention),
        joint_log_prob=log_p_g + log_p_a,
    )


# controllers: a network plus the per-episode tape needed for backprop through time


@dataclass
class _Step:
    cache: object
    p_g: np.ndarray
    p_a: np.ndarray | None
    subgoal: int | None = None
    attention: int | None = None


class _TapeController:
    uses_attention = False

    def __init__(self, net):
        self.net = net
        self.store: ParamStore = net.store
        self.start_episode()

    def start_episode(self):
        self.steps: list[_Step] = []

    def choose(self, subgoal: int, attention: int = AttentionAction.NOOP) -> float:
        """
        Records the action taken at the latest step and returns its joint log-probability
        """

        step = self.steps[-1]
        step.subgoal = int(subgoal)
        step.attention = int(attention)

        log_prob = float(np.log(step.p_g[step.subgoal]))
        if step.p_a is not None:
            log_prob += float(np.log(step.p_a[step.attention]))
        return log_prob

    def decide(self, context: StepContext, rng: np.random.Generator) -> MetaAction:
        p_g, p_a = self.step(context)
        action = select_action(p_g, p_a, rng)
        self.choose(action.subgoal, action.attention)
        return action

    def step(self, context: StepContext):
        raise NotImplementedError

    def backward(self, dlog_probs: Sequence[float]):
        raise NotImplementedError

    def _dlogits(self, dlog_probs: Sequence[float]):
        if len(dlog_probs) != len(self.steps):
            raise ConfigurationError(
                f'{len(dlog_probs)} log-prob gradients for {len(self.steps)} recorded steps'
            )

        dg, da = [], []
        for step, d in zip(self.steps, dlog_probs):
            dg.append(d * log_prob_grad(step.p_g, step.subgoal))
            if step.p_a is not None:
                da.append(d * log_prob_grad(step.p_a, step.attention))
        return dg, da


class AttentionController(_TapeController):
    uses_attention = True

    def start_episode(self):
        super().start_episode()
        self.hidden = self.net.initial_hidden()

    def step(self, context: StepContext):
        view = crop(context.observation, context.window)
        p_g, p_a, self.hidden, cache = forward_attention(
            self.net, view, context.observation.instruction, self.hidden
        )
        self.steps.append(_Step(cache=cache, p_g=p_g, p_a=p_a))
        return p_g, p_a

    def backward(self, dlog_probs: Sequence[float]):
        dg, da = self._dlogits(dlog_probs)
        backward_attention(self.net, [s.cache for s in self.steps], dg, da)


class NoAttentionController(_TapeController):
    def step(self, context: StepContext):
        obs = context.observation
        p_g, cache = forward_no_attention(self.net, obs.image, obs.instruction)
        self.steps.append(_Step(cache=cache, p_g=p_g, p_a=None))
        return p_g, None

    def backward(self, dlog_probs: Sequence[float]):
        dg, _ = self._dlogits(dlog_probs)
        for step, d in zip(self.steps, dg):
            backward_no_attention(self.net, step.cache, d)


class ScriptedController:
    """
    Hand-written optimal policy: the target room when no attention is used, otherwise the
    lowest visible room while the window slides down
    """

    def __init__(self, uses_attention: bool):
        self.uses_attention = uses_attention
        self.store = ParamStore()

    def start_episode(self):
        pass

    def decide(self, context: StepContext, rng: np.random.Generator) -> MetaAction:
        state = context.state
        if not self.uses_attention:
            return MetaAction(
                subgoal=int(state.target_color), attention=AttentionAction.NOOP, joint_log_prob=0.0
            )

        visible = visible_rooms(state.layout, context.window)
        room = state.target_room if state.target_room in visible else max(visible)
        return MetaAction(
            subgoal=int(state.layout.colors[room]),
            attention=AttentionAction.DOWN,
            joint_log_prob=0.0,
        )

    def backward(self, dlog_probs: Sequence[float]):
        pass


def build_controller(
    uses_attention: bool,
    rng: np.random.Generator | None = None,
    init_scale: float = config.init_scale,
    init_from: Path | None = None,
):
    if uses_attention:
        controller = AttentionController(MetaControllerNet(rng, init_scale))
    else:
        controller = NoAttentionController(NoAttentionNet(rng, init_scale))

    if init_from is not None:
        print(f'  loading parameters from {init_from}')
        controller.store.load(init_from)

    return controller
