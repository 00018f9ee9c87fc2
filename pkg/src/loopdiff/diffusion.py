"""Simplex diffusion over tokenized loops.

Token rows are mapped to logits at scale +/-K per attribute
sub-vocabulary, noised with Gaussian noise of matching scale, and
squashed back onto the simplex with a per-attribute softmax. Inference
iterates denoise / clamp / resample / renoise from s=T down to 1.
All state is stored per attribute: nine (N, size_a) float64 arrays.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .codec import TokenizedLoop
from .errors import UnsatisfiablePrior
from .priors import apply_prior, enforce_hard
from .rng import RngHub
from .schedule import NoiseSchedule, cosine_schedule
from .vocab import NUM_ATTRIBUTES, Vocabulary

DEFAULT_SLOTS = 128


@dataclass(frozen=True)
class DiffusionConfig:
    K: float = 5.0
    T: int = 100
    top_p: float = 0.9
    schedule: NoiseSchedule = field(default_factory=cosine_schedule)
    seed: int = 0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must lie in (0, 1]")

    def with_seed(self, seed: int) -> "DiffusionConfig":
        return dataclasses.replace(self, seed=seed)


class _PerAttribute:
    """Nine (N, size_a) arrays, one per attribute sub-vocabulary."""

    __slots__ = ("parts",)

    def __init__(self, parts):
        parts = tuple(np.asarray(p, dtype=np.float64) for p in parts)
        if len(parts) != NUM_ATTRIBUTES:
            raise ValueError(f"expected {NUM_ATTRIBUTES} parts, got {len(parts)}")
        n = parts[0].shape[0]
        for p in parts:
            if p.ndim != 2 or p.shape[0] != n:
                raise ValueError("parts disagree on slot count")
        object.__setattr__(self, "parts", parts)

    def __setattr__(self, name, value):
        raise AttributeError("immutable")

    @property
    def n_slots(self) -> int:
        return self.parts[0].shape[0]

    def copy_parts(self):
        return [p.copy() for p in self.parts]


class LogitTensor(_PerAttribute):
    pass


class SimplexState(_PerAttribute):
    pass


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_state(logits: LogitTensor) -> SimplexState:
    return SimplexState([_softmax_rows(p) for p in logits.parts])


def logit_generation(tokens: TokenizedLoop, K: float,
                     vocab: Vocabulary) -> LogitTensor:
    n = tokens.n_slots
    parts = []
    for a in range(NUM_ATTRIBUTES):
        arr = np.full((n, vocab.sizes[a]), -K, dtype=np.float64)
        arr[np.arange(n), tokens.tokens[:, a]] = K
        parts.append(arr)
    return LogitTensor(parts)


def forward_noise(logits0: LogitTensor, t: float, schedule: NoiseSchedule,
                  K: float, rng: np.random.Generator) -> LogitTensor:
    ab = schedule.alpha_bar(t)
    signal = np.sqrt(ab)
    noise = np.sqrt(1.0 - ab)
    return LogitTensor([p * signal + rng.normal(0.0, K, size=p.shape) * noise
                        for p in logits0.parts])


def make_training_example(tokens: TokenizedLoop, cfg: DiffusionConfig,
                          vocab: Vocabulary, rng: np.random.Generator):
    """Draw t ~ U[0,1] and return (p_t, t, target)."""
    t = float(rng.uniform())
    noisy = forward_noise(logit_generation(tokens, cfg.K, vocab), t,
                          cfg.schedule, cfg.K, rng)
    return softmax_state(noisy), t, tokens


def cross_entropy(pred: LogitTensor, target: TokenizedLoop) -> float:
    """Mean NLL of target tokens under per-attribute softmax of pred."""
    n = target.n_slots
    total = 0.0
    for a in range(NUM_ATTRIBUTES):
        x = pred.parts[a]
        m = x.max(axis=1)
        lse = m + np.log(np.exp(x - m[:, None]).sum(axis=1))
        total += float(np.sum(lse - x[np.arange(n), target.tokens[:, a]]))
    return total / (n * NUM_ATTRIBUTES)


def init_inference(cfg: DiffusionConfig, vocab: Vocabulary,
                   rng: np.random.Generator,
                   n_slots: int = DEFAULT_SLOTS) -> SimplexState:
    parts = [rng.normal(0.0, cfg.K, size=(n_slots, vocab.sizes[a]))
             for a in range(NUM_ATTRIBUTES)]
    return softmax_state(LogitTensor(parts))


def _top_p_rows(p: np.ndarray, top_p: float, u: np.ndarray) -> np.ndarray:
    # stable argsort on -p keeps equal-probability ties in index order
    order = np.argsort(-p, axis=1, kind="stable")
    ps = np.take_along_axis(p, order, axis=1)
    cs = np.cumsum(ps, axis=1)
    reached = cs >= top_p
    reached[:, -1] = True            # cumsum may fall short of 1 in float
    cut = reached.argmax(axis=1)
    inside = np.arange(p.shape[1])[None, :] <= cut[:, None]
    ps = np.where(inside, ps, 0.0)
    ps /= ps.sum(axis=1, keepdims=True)
    draws = (u[:, None] > np.cumsum(ps, axis=1)).sum(axis=1)
    draws = np.minimum(draws, cut)
    return np.take_along_axis(order, draws[:, None], axis=1)[:, 0]


def top_p_sample(p0: SimplexState, top_p: float,
                 rng: np.random.Generator) -> TokenizedLoop:
    n = p0.n_slots
    tokens = np.empty((n, NUM_ATTRIBUTES), dtype=np.int16)
    for a in range(NUM_ATTRIBUTES):
        u = rng.random(n)
        tokens[:, a] = _top_p_rows(p0.parts[a], top_p, u)
    return TokenizedLoop(tokens)


def _resample_rows(state: SimplexState, positions, K: float,
                   rng: np.random.Generator) -> SimplexState:
    """Replace the listed (slot, attribute) rows with fresh noise rows."""
    parts = state.copy_parts()
    for slot, attr in positions:
        row = rng.normal(0.0, K, size=parts[attr].shape[1])
        parts[attr][slot] = _softmax_rows(row)
    return SimplexState(parts)


def inference_step(state: SimplexState, s: int, denoiser, prior,
                   cfg: DiffusionConfig, hub: RngHub):
    """One reverse step at s (t = s/T); returns (next state, sampled tokens)."""
    t = s / cfg.T
    try:
        p_in = apply_prior(state, prior)
    except UnsatisfiablePrior as e:
        # zero product mass: measure-zero collision of hard prior with
        # noise; retry those rows once with fresh noise
        state = _resample_rows(state, e.positions, cfg.K,
                               hub.stream("diffusion.retry", s))
        p_in = apply_prior(state, prior)
    p0 = softmax_state(denoiser(p_in, t))
    p0 = enforce_hard(p0, prior)
    what = top_p_sample(p0, cfg.top_p, hub.stream("diffusion.sample", s))
    regen = _logits_like(what, p0, cfg.K)
    renoised = forward_noise(regen, (s - 1) / cfg.T, cfg.schedule, cfg.K,
                             hub.stream("diffusion.renoise", s))
    return softmax_state(renoised), what


def _logits_like(tokens: TokenizedLoop, shaped: SimplexState,
                 K: float) -> LogitTensor:
    n = tokens.n_slots
    parts = []
    for a in range(NUM_ATTRIBUTES):
        arr = np.full((n, shaped.parts[a].shape[1]), -K, dtype=np.float64)
        arr[np.arange(n), tokens.tokens[:, a]] = K
        parts.append(arr)
    return LogitTensor(parts)


def generate(denoiser, prior, cfg: DiffusionConfig, vocab: Vocabulary,
             n_slots: int = None, start_state: SimplexState = None,
             start_step: int = None, collect=None) -> TokenizedLoop:
    """Full reverse loop from s=T (or start_step) down to 1.

    The slot count defaults to the prior's; passing a different one is
    rejected rather than left to fail as a shape error mid-loop.
    """
    if n_slots is None:
        n_slots = prior.n_slots
    elif n_slots != prior.n_slots:
        raise ValueError(f"n_slots={n_slots} but prior covers {prior.n_slots}")
    if start_state is not None and start_state.n_slots != n_slots:
        raise ValueError(f"start state covers {start_state.n_slots} slots, "
                         f"prior covers {n_slots}")
    hub = RngHub(cfg.seed)
    if start_state is None:
        state = init_inference(cfg, vocab, hub.stream("diffusion.init"), n_slots)
    else:
        state = start_state
    first = cfg.T if start_step is None else int(start_step)
    if not 1 <= first <= cfg.T:
        raise ValueError(f"start step {first} outside 1..{cfg.T}")
    what = None
    for s in range(first, 0, -1):
        state, what = inference_step(state, s, denoiser, prior, cfg, hub)
        if collect is not None:
            collect(s, state, what)
    return what
