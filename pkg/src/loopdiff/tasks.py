"""Generation tasks: named recipes that compile into vocabulary priors.

Each task kind maps user-level parameters (a source loop, a box, an
instrument set, ...) onto a prior, plus for variations a partially
renoised start state. Presets carry per-task step counts and nucleus
thresholds; these are tuning defaults, not contracts.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .codec import TokenizedLoop
from .diffusion import (
    DiffusionConfig, forward_noise, generate, logit_generation, softmax_state,
)
from .errors import ConfigError
from .priors import (
    VocabularyPrior, prior_from_loop, prior_infill_box, prior_instrumentation,
    prior_regenerate, prior_rhythm, prior_tonality, prior_uninformative,
    select_slots_by_instrument,
)
from .rng import RngHub
from .vocab import NUM_ATTRIBUTES, Vocabulary

TASK_KINDS = (
    "unconditional", "fullyDetermined", "infillBox", "instrumentation",
    "tonality", "rhythm", "regenerateAttributes", "variation",
)


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}; expected one "
                              f"of {', '.join(TASK_KINDS)}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}

    @staticmethod
    def from_dict(d: dict) -> "TaskSpec":
        extra = set(d) - {"kind", "params"}
        if extra:
            raise ConfigError(f"unknown task spec keys: {sorted(extra)}")
        if "kind" not in d:
            raise ConfigError("task spec is missing 'kind'")
        return TaskSpec(kind=d["kind"], params=dict(d.get("params", {})))


PRESETS = [
    {"kind": "unconditional", "title": "Generate from scratch",
     "T": 200, "top_p": 0.9, "needs_loop": False, "defaults": {}},
    {"kind": "fullyDetermined", "title": "Reproduce a loop",
     "T": 50, "top_p": 0.9, "needs_loop": True, "defaults": {}},
    {"kind": "infillBox", "title": "Infill a box",
     "T": 200, "top_p": 0.9, "needs_loop": True,
     "defaults": {"time_range": [4, 8], "pitch_range": [48, 72],
                  "min_notes": 1, "max_notes": 8, "pin_tempo_tag": True}},
    {"kind": "instrumentation", "title": "Generate for chosen instruments",
     "T": 200, "top_p": 0.9, "needs_loop": False,
     "defaults": {"instruments": ["Drums", "Bass"]}},
    {"kind": "tonality", "title": "Constrain tonality",
     "T": 200, "top_p": 0.9, "needs_loop": False,
     "defaults": {"pitch_classes": [0, 2, 4, 5, 7, 9, 11]}},
    {"kind": "rhythm", "title": "Constrain onsets",
     "T": 200, "top_p": 0.9, "needs_loop": False,
     "defaults": {"onsets": [[b, 0] for b in range(16)]}},
    {"kind": "regenerateAttributes", "title": "Regenerate attributes",
     "T": 150, "top_p": 0.9, "needs_loop": True,
     "defaults": {"attributes": ["pitch"], "instruments": ["Bass"]}},
    {"kind": "variation", "title": "Vary a loop",
     "T": 100, "top_p": 0.95, "needs_loop": True,
     "defaults": {"t_reveal": 0.5}},
]


def preset_for(kind: str) -> dict:
    for p in PRESETS:
        if p["kind"] == kind:
            return p
    raise ConfigError(f"no preset for task kind {kind!r}")


def _require(params: dict, key: str):
    if key not in params:
        raise ConfigError(f"task parameter {key!r} is required")
    return params[key]


def _loop_from_params(params: dict, n_slots: int,
                      vocab: Vocabulary) -> TokenizedLoop:
    obj = _require(params, "loop")
    if isinstance(obj, TokenizedLoop):
        loop = obj
    else:
        try:
            tokens = np.asarray(obj["tokens"], dtype=np.int16)
        except (TypeError, KeyError) as e:
            raise ConfigError("'loop' must carry a 'tokens' array") from e
        if tokens.ndim != 2 or tokens.shape[1] != NUM_ATTRIBUTES:
            raise ConfigError(f"loop tokens must be (N, {NUM_ATTRIBUTES}), "
                              f"got {tokens.shape}")
        loop = TokenizedLoop(tokens)
    if loop.n_slots != n_slots:
        raise ConfigError(f"loop has {loop.n_slots} slots, expected {n_slots}")
    for a in range(NUM_ATTRIBUTES):
        col = loop.tokens[:, a]
        if col.min() < 0 or col.max() >= vocab.sizes[a]:
            raise ConfigError(f"loop tokens out of range in attribute {a}")
    return loop


def compile_task(spec: TaskSpec, vocab: Vocabulary, n_slots: int):
    """Returns (prior, start) where start is None or {"loop", "t_reveal"}."""
    p = dict(spec.params)
    kind = spec.kind
    if kind == "unconditional":
        return prior_uninformative(n_slots, vocab), None
    if kind == "fullyDetermined":
        return prior_from_loop(_loop_from_params(p, n_slots, vocab), vocab), None
    if kind == "infillBox":
        loop = _loop_from_params(p, n_slots, vocab)
        return prior_infill_box(
            loop, _require(p, "time_range"), _require(p, "pitch_range"),
            int(p.get("min_notes", 1)), int(p.get("max_notes", 1)),
            vocab, pin_tempo_tag=bool(p.get("pin_tempo_tag", True))), None
    if kind == "instrumentation":
        return prior_instrumentation(_require(p, "instruments"), n_slots,
                                     vocab), None
    if kind == "tonality":
        return prior_tonality(_require(p, "pitch_classes"), n_slots,
                              vocab), None
    if kind == "rhythm":
        return prior_rhythm(_require(p, "onsets"), n_slots, vocab), None
    if kind == "regenerateAttributes":
        loop = _loop_from_params(p, n_slots, vocab)
        if "slots" in p:
            slots = p["slots"]
        elif "instruments" in p:
            slots = select_slots_by_instrument(loop, p["instruments"], vocab)
        else:
            raise ConfigError("regenerateAttributes needs 'slots' or "
                              "'instruments'")
        return prior_regenerate(loop, _require(p, "attributes"), slots,
                                vocab), None
    if kind == "variation":
        loop = _loop_from_params(p, n_slots, vocab)
        t_reveal = float(_require(p, "t_reveal"))
        if not 0.0 < t_reveal <= 1.0:
            raise ConfigError("t_reveal must lie in (0, 1]")
        prior = dataclasses.replace(prior_uninformative(n_slots, vocab),
                                    task="variation")
        return prior, {"loop": loop, "t_reveal": t_reveal}
    raise ConfigError(f"unknown task kind {kind!r}")


def variation_start(loop: TokenizedLoop, t_reveal: float,
                    cfg: DiffusionConfig, vocab: Vocabulary, hub: RngHub):
    """Partially renoise the source; returns (state, start_step)."""
    start_step = max(1, round(t_reveal * cfg.T))
    noisy = forward_noise(logit_generation(loop, cfg.K, vocab), t_reveal,
                          cfg.schedule, cfg.K, hub.stream("variation.start"))
    return softmax_state(noisy), start_step


def run_task(spec: TaskSpec, denoiser, cfg: DiffusionConfig,
             vocab: Vocabulary, n_slots: int, collect=None) -> TokenizedLoop:
    """Compile and generate in one call; deterministic given cfg.seed."""
    prior, start = compile_task(spec, vocab, n_slots)
    state = None
    step = None
    if start is not None:
        state, step = variation_start(start["loop"], start["t_reveal"], cfg,
                                      vocab, RngHub(cfg.seed))
    return generate(denoiser, prior, cfg, vocab, n_slots=n_slots,
                    start_state=state, start_step=step, collect=collect)
