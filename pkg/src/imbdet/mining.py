"""Hard-negative mining: keep all foreground, sample background at a fixed ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyForegroundError, InvalidConfigError, InvalidInputError

SELECTIONS = ("hardest", "random")


@dataclass(frozen=True)
class MiningConfig:
    """Background-to-foreground ratio and how negatives are picked."""

    bg_per_fg: float = 3.0
    selection: str = "hardest"
    seed: int | None = None

    def __post_init__(self):
        if self.bg_per_fg <= 0:
            raise InvalidConfigError(f"bg_per_fg must be > 0, got {self.bg_per_fg}")
        if self.selection not in SELECTIONS:
            raise InvalidConfigError(
                f"selection must be one of {SELECTIONS}, got {self.selection!r}"
            )


def mine_batch(
    proposals,
    per_proposal_losses,
    cfg: MiningConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Indices to train on: every foreground plus the mined backgrounds.

    The background quota is floor(bg_per_fg * num_foreground), clamped to the
    available backgrounds.  With selection="hardest" the highest-loss
    backgrounds win, ties broken by ascending proposal index; with
    selection="random" a seeded uniform sample is drawn (``rng`` takes
    precedence over cfg.seed).  Returned indices are ascending within each
    group: foreground first, then the chosen backgrounds.
    """
    labels = np.asarray(getattr(proposals, "labels", proposals), dtype=np.int64)
    losses = np.asarray(per_proposal_losses, dtype=np.float64)
    if labels.ndim != 1 or losses.shape != labels.shape:
        raise InvalidInputError(
            f"losses must align one-to-one with proposals, got {losses.shape} vs {labels.shape}"
        )
    fg = np.flatnonzero(labels > 0)
    if fg.size == 0:
        raise EmptyForegroundError("batch has no foreground proposals")
    bg = np.flatnonzero(labels == 0)
    quota = min(int(np.floor(cfg.bg_per_fg * fg.size)), bg.size)
    if cfg.selection == "hardest":
        # stable sort on negated loss keeps ascending index among ties
        order = np.argsort(-losses[bg], kind="stable")
        chosen = bg[order[:quota]]
    else:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        chosen = rng.permutation(bg)[:quota]
    chosen = np.sort(chosen)
    return np.concatenate([fg, chosen])
