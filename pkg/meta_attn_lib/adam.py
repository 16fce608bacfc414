import numpy as np

from .config import config
from .errors import ConfigurationError
from .numeric import ParamStore


class AdamState:
    """
    Per-parameter first and second moments plus the step counter
    """

    def __init__(
        self,
        lr: float = config.lr,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ConfigurationError(f'adam: betas must be in (0, 1), got {beta1}, {beta2}')
        if lr < 0.0 or eps <= 0.0:
            raise ConfigurationError(f'adam: bad lr {lr} or eps {eps}')

        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0


def adam_step(store: ParamStore, state: AdamState):
    """
    Bias-corrected Adam update from the accumulated gradients, which are reset afterwards
    """

    store.check_finite()

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t

    for name, p in store.params.items():
        g = store.grads[name]

        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)

        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    store.zero_grad()
