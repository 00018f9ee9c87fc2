"""The denoiser: an encoder-only transformer over N orderless note slots.

Input is a probability state; each attribute contributes the expectation
of its token embeddings, the nine expectations summed per slot, so
attention runs over N positions. No positional encoding anywhere: slot
order carries no meaning and the network must commute with slot
permutations. Time conditioning is additive at the input. Output heads
are per-attribute projections, so logits outside a sub-vocabulary do
not exist rather than being masked.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .diffusion import LogitTensor, SimplexState
from .errors import NonFiniteActivation
from .vocab import ATTRIBUTE_NAMES, NUM_ATTRIBUTES, Vocabulary


@dataclass(frozen=True)
class DenoiserConfig:
    layers: int = 2
    heads: int = 4
    hidden: int = 64
    ff: int = 128
    n_slots: int = 32
    time_dim: int = 32
    vocab_version: str = ""

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError("hidden size must be divisible by heads")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")

    @staticmethod
    def desk(vocab: Vocabulary, n_slots: int = 32) -> "DenoiserConfig":
        return DenoiserConfig(layers=2, heads=4, hidden=64, ff=128,
                              n_slots=n_slots, vocab_version=vocab.version)

    @staticmethod
    def full(vocab: Vocabulary, n_slots: int = 128) -> "DenoiserConfig":
        return DenoiserConfig(layers=8, heads=8, hidden=512, ff=1024,
                              n_slots=n_slots, time_dim=128,
                              vocab_version=vocab.version)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DenoiserConfig":
        return DenoiserConfig(**d)


def _xavier(rng, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(cfg: DenoiserConfig, vocab: Vocabulary,
                rng: np.random.Generator) -> dict:
    """Fresh parameter dict; insertion order is the canonical block order."""
    d = cfg.hidden
    p = {}
    for a, name in enumerate(ATTRIBUTE_NAMES):
        p[f"embed.{name}"] = ad.parameter(_xavier(rng, vocab.sizes[a], d))
    p["time.w1"] = ad.parameter(_xavier(rng, cfg.time_dim, cfg.time_dim))
    p["time.b1"] = ad.parameter(np.zeros(cfg.time_dim))
    p["time.w2"] = ad.parameter(_xavier(rng, cfg.time_dim, d))
    p["time.b2"] = ad.parameter(np.zeros(d))
    p["ln0.gain"] = ad.parameter(np.ones(d))
    p["ln0.bias"] = ad.parameter(np.zeros(d))
    for l in range(cfg.layers):
        for w in ("wq", "wk", "wv", "wo"):
            p[f"attn.{l}.{w}"] = ad.parameter(_xavier(rng, d, d))
        for b in ("bq", "bk", "bv", "bo"):
            p[f"attn.{l}.{b}"] = ad.parameter(np.zeros(d))
        p[f"ln1.{l}.gain"] = ad.parameter(np.ones(d))
        p[f"ln1.{l}.bias"] = ad.parameter(np.zeros(d))
        p[f"ff.{l}.w1"] = ad.parameter(_xavier(rng, d, cfg.ff))
        p[f"ff.{l}.b1"] = ad.parameter(np.zeros(cfg.ff))
        p[f"ff.{l}.w2"] = ad.parameter(_xavier(rng, cfg.ff, d))
        p[f"ff.{l}.b2"] = ad.parameter(np.zeros(d))
        p[f"ln2.{l}.gain"] = ad.parameter(np.ones(d))
        p[f"ln2.{l}.bias"] = ad.parameter(np.zeros(d))
    for a, name in enumerate(ATTRIBUTE_NAMES):
        p[f"head.{name}.w"] = ad.parameter(_xavier(rng, d, vocab.sizes[a]))
        p[f"head.{name}.b"] = ad.parameter(np.zeros(vocab.sizes[a]))
    return p


# geometric frequencies; the top one is kept low enough that the map
# stays smooth at the 1e-6 scale probed by tests
_MAX_FREQ = 100.0


def time_features(t, dim: int) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(_MAX_FREQ), half))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def time_embed(t, params: dict, cfg: DenoiserConfig) -> ad.Tensor:
    feats = ad.constant(time_features(t, cfg.time_dim))
    h = ad.gelu(ad.add(ad.matmul(feats, params["time.w1"]), params["time.b1"]))
    return ad.add(ad.matmul(h, params["time.w2"]), params["time.b2"])


def embed_state(parts, params: dict, vocab: Vocabulary) -> ad.Tensor:
    """Probability-weighted token embeddings, summed over attributes.

    parts: nine (B, N, S_a) arrays. Rows are renormalized first, so any
    mass placed outside a sub-vocabulary (impossible in this storage) or
    unnormalized input is ignored.
    """
    total = None
    for a, name in enumerate(ATTRIBUTE_NAMES):
        pa = np.asarray(parts[a], dtype=np.float64)
        mass = pa.sum(axis=-1, keepdims=True)
        pa = pa / np.where(mass > 0.0, mass, 1.0)
        b, n, s = pa.shape
        flat = ad.constant(pa.reshape(b * n, s))
        emb = ad.reshape(ad.matmul(flat, params[f"embed.{name}"]), (b, n, -1))
        total = emb if total is None else ad.add(total, emb)
    return total


def _attention(x: ad.Tensor, l: int, params: dict, cfg: DenoiserConfig) -> ad.Tensor:
    b, n, d = x.shape
    h = cfg.heads
    dh = d // h

    def split(t):
        return ad.swapaxes(ad.reshape(t, (b, n, h, dh)), 1, 2)

    q = split(ad.add(ad.matmul(x, params[f"attn.{l}.wq"]), params[f"attn.{l}.bq"]))
    k = split(ad.add(ad.matmul(x, params[f"attn.{l}.wk"]), params[f"attn.{l}.bk"]))
    v = split(ad.add(ad.matmul(x, params[f"attn.{l}.wv"]), params[f"attn.{l}.bv"]))
    scores = ad.mul(ad.matmul(q, ad.swapaxes(k, 2, 3)), 1.0 / np.sqrt(dh))
    ctx = ad.matmul(ad.softmax(scores), v)
    merged = ad.reshape(ad.swapaxes(ctx, 1, 2), (b, n, d))
    return ad.add(ad.matmul(merged, params[f"attn.{l}.wo"]), params[f"attn.{l}.bo"])


def forward(parts, t, params: dict, cfg: DenoiserConfig,
            vocab: Vocabulary) -> list:
    """Batched forward pass; returns nine (B, N, S_a) logit Tensors."""
    x = embed_state(parts, params, vocab)
    tvec = time_embed(t, params, cfg)                    # (B, hidden)
    x = ad.add(x, ad.reshape(tvec, (tvec.shape[0], 1, cfg.hidden)))
    x = ad.layer_norm(x, params["ln0.gain"], params["ln0.bias"])
    for l in range(cfg.layers):
        x = ad.layer_norm(ad.add(x, _attention(x, l, params, cfg)),
                          params[f"ln1.{l}.gain"], params[f"ln1.{l}.bias"])
        h = ad.gelu(ad.add(ad.matmul(x, params[f"ff.{l}.w1"]),
                           params[f"ff.{l}.b1"]))
        ff = ad.add(ad.matmul(h, params[f"ff.{l}.w2"]), params[f"ff.{l}.b2"])
        x = ad.layer_norm(ad.add(x, ff),
                          params[f"ln2.{l}.gain"], params[f"ln2.{l}.bias"])
    out = []
    for name in ATTRIBUTE_NAMES:
        out.append(ad.add(ad.matmul(x, params[f"head.{name}.w"]),
                          params[f"head.{name}.b"]))
    return out


class Denoiser:
    """Callable wrapper binding params for the inference loop."""

    def __init__(self, params: dict, cfg: DenoiserConfig, vocab: Vocabulary):
        self.params = params
        self.cfg = cfg
        self.vocab = vocab

    def __call__(self, state: SimplexState, t: float) -> LogitTensor:
        parts = [p[None, :, :] for p in state.parts]
        with ad.no_grad():
            logits = forward(parts, np.array([t]), self.params, self.cfg,
                             self.vocab)
        arrays = []
        for a in range(NUM_ATTRIBUTES):
            arr = logits[a].data[0]
            if not np.isfinite(arr).all():
                raise NonFiniteActivation(
                    f"non-finite logits in attribute {ATTRIBUTE_NAMES[a]} "
                    f"at t={t:.4f}")
            arrays.append(arr)
        return LogitTensor(arrays)
