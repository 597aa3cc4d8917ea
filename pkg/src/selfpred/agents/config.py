"""Agent hyperparameters and the variant table."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

from ..objectives.models import TARGET_MODES
from .schedules import Schedule, parse_schedule

VARIANTS = ("model-free", "zp-l2", "zp-fkl", "zp-rkl", "op", "phased-rp-zp", "phased-rp-op")

# variant -> (aux kind, phased)
_AUX = {
    "model-free": (None, False),
    "zp-l2": ("zp-l2", False),
    "zp-fkl": ("zp-fkl", False),
    "zp-rkl": ("zp-rkl", False),
    "op": ("op", False),
    "phased-rp-zp": ("zp-l2", True),
    "phased-rp-op": ("op", True),
}


@dataclass(frozen=True)
class AgentConfig:
    variant: str = "zp-l2"
    aux_coef: float | None = None  # None picks the per-variant default
    normalize_aux: bool | None = None  # divide by aux output dim; default: discrete only
    target_mode: str = "ema"
    target_mix: float = 0.005
    gamma: float = 0.99
    batch_size: int = 64
    lr: float = 1e-3
    exploration: str = "linear(1.0,0.1,100000)"
    exploration_clip: float = 0.3
    latent_dim: int = 32
    hidden: int = 64
    warmup_steps: int = 1000
    update_every: int = 1
    n_step: int = 1
    window: int = 1
    replay_capacity: int = 100_000
    eval_every: int = 2000
    eval_episodes: int = 10
    rank_batch: int = 256
    max_grad_norm: float = 100.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        if self.aux_coef is not None and self.aux_coef < 0:
            raise ValueError("aux_coef must be non-negative")
        if self.variant == "model-free" and self.aux_coef not in (None, 0.0):
            raise ValueError("model-free runs have no auxiliary loss; aux_coef must be 0")
        if self.variant != "model-free" and self.aux_coef == 0.0:
            raise ValueError("aux_coef = 0 is the model-free variant; set variant='model-free'")
        if not (0.0 < self.target_mix <= 1.0):
            raise ValueError("target_mix must lie in (0, 1]")
        if min(self.batch_size, self.latent_dim, self.hidden, self.update_every,
               self.n_step, self.window, self.eval_episodes) < 1:
            raise ValueError("sizes and counts must be positive")
        parse_schedule(self.exploration)

    @property
    def aux_kind(self) -> str | None:
        return _AUX[self.variant][0]

    @property
    def phased(self) -> bool:
        return _AUX[self.variant][1]

    @property
    def schedule(self) -> Schedule:
        return parse_schedule(self.exploration)

    def coefficient(self, aux_out_dim: int, discrete: bool = False) -> float:
        """Effective lambda on the auxiliary loss.

        Defaults: continuous runs use 10 for zp-l2 and 1 for the KL and OP
        objectives; discrete runs use 1 for ZP, 0.01 for OP and 1 for the
        phased variants, divided by the aux output dimension.
        """
        kind = self.aux_kind
        if kind is None:
            return 0.0
        lam = self.aux_coef
        if lam is None:
            if discrete:
                lam = 0.01 if kind == "op" and not self.phased else 1.0
            else:
                lam = 10.0 if kind == "zp-l2" else 1.0
        normalize = discrete if self.normalize_aux is None else self.normalize_aux
        return lam / aux_out_dim if normalize else lam

    def replace(self, **kw) -> "AgentConfig":
        return AgentConfig(**{**asdict(self), **kw})

    def canonical(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]
