from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NaNGradientError


CHECKPOINT_VERSION = 1


class ParamStore:
    """
    Named float64 parameter tensors, each with a gradient accumulator of the same shape
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self.params:
            raise ConfigurationError(f'duplicate parameter: {name}')

        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def scale_grads(self, factor: float):
        for g in self.grads.values():
            g *= factor

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.grads.values())))

    def check_finite(self):
        for name, g in self.grads.items():
            if not np.all(np.isfinite(g)):
                bad = int(np.sum(~np.isfinite(g)))
                raise NaNGradientError(name, f'{bad} of {g.size} entries')

    def init_uniform(self, rng: np.random.Generator, scale: float):
        """
        Uniform in [-scale, scale] per parameter, drawn in insertion order
        """

        for p in self.params.values():
            p[...] = rng.uniform(-scale, scale, size=p.shape)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.params.items()}

    def save(self, path: Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f'param/{name}': p for name, p in self.params.items()}
        with path.open('wb') as fp:
            np.savez(fp, __version__=np.array(CHECKPOINT_VERSION), **arrays)

    def load(self, path: Path):
        with np.load(Path(path)) as data:
            version = int(data['__version__'])
            if version != CHECKPOINT_VERSION:
                raise ConfigurationError(f'unsupported checkpoint version: {version}')

            names = {k.removeprefix('param/') for k in data.files if k.startswith('param/')}
            if names != set(self.params):
                raise ConfigurationError(
                    f'checkpoint parameters {sorted(names)} do not match {sorted(self.params)}'
                )

            for name, p in self.params.items():
                value = data[f'param/{name}']
                if value.shape != p.shape:
                    raise ConfigurationError(
                        f'checkpoint shape {value.shape} for {name}, expected {p.shape}'
                    )
                p[...] = value


@dataclass(frozen=True)
class LSTMCellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> 'LSTMCellState':
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))


def _check_shape(name: str, array: np.ndarray, shape: tuple):
    if array.shape != shape:
        raise ConfigurationError(f'{name}: expected shape {shape}, got {array.shape}')


# convolution


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None = None):
    """
    Valid (no padding), stride 1 convolution

    x: H x W x Cin, kernels: K x K x Cin x Cout -> (H-K+1) x (W-K+1) x Cout
    """

    if x.ndim != 3 or kernels.ndim != 4:
        raise ConfigurationError(f'conv2d: bad ranks {x.shape} / {kernels.shape}')

    k, k2, c_in, c_out = kernels.shape
    h, w, c = x.shape
    if k != k2:
        raise ConfigurationError(f'conv2d: kernels must be square, got {kernels.shape}')
    if c != c_in:
        raise ConfigurationError(f'conv2d: input has {c} channels, kernels expect {c_in}')
    if h < k or w < k:
        raise ConfigurationError(f'conv2d: input {x.shape} smaller than kernel {k}x{k}')

    # windows: Ho x Wo x Cin x K x K
    windows = sliding_window_view(x, (k, k), axis=(0, 1))
    out = np.einsum('ijcab,abco->ijo', windows, kernels)
    if bias is not None:
        _check_shape('conv2d bias', bias, (c_out,))
        out = out + bias
    return out


def conv2d_backward(dout: np.ndarray, x: np.ndarray, kernels: np.ndarray):
    """
    Returns (dx, dkernels, dbias)
    """

    k = kernels.shape[0]
    ho, wo, _ = dout.shape

    windows = sliding_window_view(x, (k, k), axis=(0, 1))
    dkernels = np.einsum('ijcab,ijo->abco', windows, dout)
    dbias = dout.sum(axis=(0, 1))

    dx = np.zeros_like(x)
    for a in range(k):
        for b in range(k):
            dx[a : a + ho, b : b + wo, :] += dout @ kernels[a, b].T

    return dx, dkernels, dbias


# elementwise


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return dout * (x > 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# dense


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape != (w.shape[0],):
        raise ConfigurationError(f'dense: input {x.shape} does not match weights {w.shape}')
    return x @ w + b


def dense_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """
    Returns (dx, dw, db)
    """

    return w @ dout, np.outer(x, dout), dout.copy()


# lstm


@dataclass(frozen=True)
class LSTMCache:
    xh: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def lstm_step(x: np.ndarray, state: LSTMCellState, w: np.ndarray, b: np.ndarray):
    """
    One LSTM cell step; gates packed as [input, forget, output, candidate]

    w: (n_in + n_hidden) x 4*n_hidden, b: 4*n_hidden
    Returns (h, new_state, cache)
    """

    n = state.h.shape[0]
    n_in = w.shape[0] - n
    if w.shape[1] != 4 * n or state.c.shape != (n,):
        raise ConfigurationError(f'lstm: weights {w.shape} do not match hidden size {n}')
    if x.shape != (n_in,):
        raise ConfigurationError(f'lstm: input {x.shape}, expected ({n_in},)')
    _check_shape('lstm bias', b, (4 * n,))

    xh = np.concatenate([x, state.h])
    z = xh @ w + b

    i = sigmoid(z[:n])
    f = sigmoid(z[n : 2 * n])
    o = sigmoid(z[2 * n : 3 * n])
    g = np.tanh(z[3 * n :])

    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c

    cache = LSTMCache(xh=xh, c_prev=state.c, i=i, f=f, o=o, g=g, tanh_c=tanh_c)
    return h, LSTMCellState(h, c), cache


def lstm_step_backward(dh: np.ndarray, dc: np.ndarray, cache: LSTMCache, w: np.ndarray):
    """
    dh, dc: gradients flowing into this step's h and c (from the loss and from the next step)
    Returns (dx, dh_prev, dc_prev, dw, db)
    """

    n = dh.shape[0]

    do = dh * cache.tanh_c
    dc = dc + dh * cache.o * (1.0 - cache.tanh_c**2)

    di = dc * cache.g
    dg = dc * cache.i
    df = dc * cache.c_prev
    dc_prev = dc * cache.f

    dz = np.concatenate(
        [
            di * cache.i * (1.0 - cache.i),
            df * cache.f * (1.0 - cache.f),
            do * cache.o * (1.0 - cache.o),
            dg * (1.0 - cache.g**2),
        ]
    )

    dw = np.outer(cache.xh, dz)
    dxh = w @ dz
    n_in = dxh.shape[0] - n
    return dxh[:n_in], dxh[n_in:], dc_prev, dw, dz


# heads


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def log_prob_grad(probs: np.ndarray, index: int) -> np.ndarray:
    """
    d log softmax(z)[index] / dz
    """

    grad = -probs.copy()
    grad[index] += 1.0
    return grad


def categorical_sample(probs: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """
    Returns (index, log probability of index)
    """

    if probs.shape[0] == 0:
        raise ConfigurationError('categorical_sample: empty probability vector')

    total = float(np.sum(probs))
    if abs(total - 1.0) > 1e-9:
        raise ConfigurationError(f'categorical_sample: probabilities sum to {total}')

    cumulative = np.cumsum(probs)
    u = rng.random() * cumulative[-1]
    # side='right' skips zero-probability entries sitting on a plateau
    index = int(np.searchsorted(cumulative, u, side='right'))
    index = min(index, probs.shape[0] - 1)
    return index, float(np.log(probs[index]))
