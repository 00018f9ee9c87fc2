"""Training loop: Adam on mean cross-entropy with epoch-wise lr decay."""

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .checkpoint import load_params, save_params
from .codec import TokenizedLoop
from .diffusion import DiffusionConfig, make_training_example
from .errors import ConfigError, NonFiniteGradient
from .model import DenoiserConfig, forward, init_params
from .rng import RngHub
from .vocab import NUM_ATTRIBUTES, Vocabulary


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    decay: float = 0.99          # applied once per epoch
    batch_size: int = 200
    epochs: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")


class Adam:
    def __init__(self, params: dict, beta1: float, beta2: float, eps: float):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / b1c
            vhat = self.v[k] / b2c
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_blocks(self) -> dict:
        out = {"opt.t": np.array(float(self.t))}
        for k in self.m:
            out[f"opt.m.{k}"] = self.m[k]
            out[f"opt.v.{k}"] = self.v[k]
        return out

    def load_blocks(self, blocks: dict):
        self.t = int(blocks["opt.t"])
        for k in self.m:
            self.m[k] = blocks[f"opt.m.{k}"]
            self.v[k] = blocks[f"opt.v.{k}"]


def batch_loss(parts, t_vec, targets, params, cfg: DenoiserConfig,
               vocab: Vocabulary) -> ad.Tensor:
    """Mean NLL over batch x slots x attributes.

    parts: nine (B, N, S_a) arrays; targets: (B, N, 9) ints.
    """
    logits = forward(parts, t_vec, params, cfg, vocab)
    b, n = targets.shape[0], targets.shape[1]
    total = None
    for a in range(NUM_ATTRIBUTES):
        flat = ad.reshape(logits[a], (b * n, vocab.sizes[a]))
        nll = ad.gather_rows(ad.log_softmax(flat), targets[:, :, a].ravel())
        s = ad.tsum(nll)
        total = s if total is None else ad.add(total, s)
    return ad.mul(total, -1.0 / (b * n * NUM_ATTRIBUTES))


def _stack_examples(loops, diff_cfg, vocab, streams):
    states, ts, targets = [], [], []
    for loop, rng in zip(loops, streams):
        state, t, target = make_training_example(loop, diff_cfg, vocab, rng)
        states.append(state)
        ts.append(t)
        targets.append(target.tokens)
    parts = [np.stack([st.parts[a] for st in states])
             for a in range(NUM_ATTRIBUTES)]
    return parts, np.array(ts), np.stack(targets).astype(np.int64)


def train_step(parts, t_vec, targets, params, opt: Adam, lr: float,
               cfg: DenoiserConfig, tcfg: TrainConfig,
               vocab: Vocabulary) -> float:
    for p in params.values():
        p.grad = None
    loss = batch_loss(parts, t_vec, targets, params, cfg, vocab)
    loss.backward()
    grads = {}
    sq = 0.0
    for k, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient in block {k!r}")
        grads[k] = g
        sq += float((g * g).sum())
    norm = np.sqrt(sq)
    if tcfg.clip > 0 and norm > tcfg.clip:
        scale = tcfg.clip / norm
        grads = {k: g * scale for k, g in grads.items()}
    opt.step(params, grads, lr)
    return float(loss.data)


def train_loop(dataset, model_cfg: DenoiserConfig, tcfg: TrainConfig,
               diff_cfg: DiffusionConfig, vocab: Vocabulary, params: dict = None,
               log_path=None, checkpoint_path=None, checkpoint_every: int = 0,
               resume_from=None, max_steps: int = None, progress=None):
    """Returns (params, opt, metrics list). Streams are keyed by absolute
    epoch/step indices, so a resumed run retraces the original batches,
    noise, and losses exactly.
    """
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("dataset is empty")
    n_slots = dataset[0].n_slots
    for lp in dataset:
        if not isinstance(lp, TokenizedLoop) or lp.n_slots != n_slots:
            raise ConfigError("dataset must be TokenizedLoops of equal N")
    if n_slots != model_cfg.n_slots:
        raise ConfigError(f"dataset N={n_slots} != model N={model_cfg.n_slots}")

    hub = RngHub(tcfg.seed)
    step = 0
    start_epoch = 0
    start_batch = 0
    opt = None
    if resume_from is not None:
        params, cfg_dict, train_state, extra = load_params(
            resume_from, vocab.version)
        loaded_cfg = DenoiserConfig.from_dict(cfg_dict)
        if loaded_cfg != model_cfg:
            raise ConfigError(f"checkpoint config {cfg_dict} differs from "
                              f"requested {model_cfg.to_dict()}")
        opt = Adam(params, tcfg.beta1, tcfg.beta2, tcfg.eps)
        opt.load_blocks(extra)
        step = int(train_state.get("step", 0))
        start_epoch = int(train_state.get("epoch", 0))
        start_batch = int(train_state.get("batch_index", 0))
    elif params is None:
        params = init_params(model_cfg, vocab, hub.stream("train.init"))
    if opt is None:
        opt = Adam(params, tcfg.beta1, tcfg.beta2, tcfg.eps)

    log_fh = open(log_path, "a") if log_path else None
    metrics = []

    def checkpoint(epoch, batch_index):
        if checkpoint_path:
            save_params(checkpoint_path, params, model_cfg.to_dict(),
                        vocab.version,
                        train_state={"step": step, "epoch": epoch,
                                     "batch_index": batch_index},
                        extra_blocks=opt.state_blocks())

    try:
        done = False
        for epoch in range(start_epoch, tcfg.epochs):
            order = hub.stream("train.shuffle", epoch).permutation(len(dataset))
            batches = [order[i:i + tcfg.batch_size]
                       for i in range(0, len(order), tcfg.batch_size)]
            first = start_batch if epoch == start_epoch else 0
            lr = tcfg.lr * tcfg.decay ** epoch
            for bi in range(first, len(batches)):
                loops = [dataset[i] for i in batches[bi]]
                streams = [hub.stream("train.noise", step, j)
                           for j in range(len(loops))]
                parts, t_vec, targets = _stack_examples(
                    loops, diff_cfg, vocab, streams)
                loss = train_step(parts, t_vec, targets, params, opt, lr,
                                  model_cfg, tcfg, vocab)
                step += 1
                rec = {"step": step, "epoch": epoch, "loss": loss, "lr": lr}
                metrics.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                if progress:
                    progress(rec)
                if checkpoint_every and step % checkpoint_every == 0:
                    checkpoint(epoch, bi + 1)
                if max_steps is not None and step >= max_steps:
                    done = True
                    break
            if done:
                break
        checkpoint(tcfg.epochs if not done else epoch,
                   0 if not done else bi + 1)
    finally:
        if log_fh:
            log_fh.close()
    return params, opt, metrics
