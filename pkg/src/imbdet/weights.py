"""Per-class static loss weights and the schemes that derive them from stats.

Schemes: uniform, hand-balanced, inverse class frequency (linear ``k / f`` and
logarithmic ``log(q / f)``), and the effective-number-of-samples scheme
``E = (1 - beta**n) / (1 - beta)`` with weights inversely proportional to E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import fileio
from .classes import ClassStats, ClassTable
from .errors import InvalidConfigError, InvalidInputError, ZeroCountError, ZeroFrequencyError

SCHEMES = ("uniform", "balanced", "inverse_linear", "inverse_log", "effective_number")
COUNT_MODES = ("raw", "per_image")


@dataclass(frozen=True)
class WeightVector:
    """Per-class loss weights, aligned with a ClassTable (background included)."""

    classes: ClassTable
    values: np.ndarray
    provenance: Mapping | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.shape != (self.classes.size,):
            raise InvalidInputError(
                f"weights have shape {v.shape}, expected ({self.classes.size},)"
            )
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInputError("weights must be finite and > 0")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def weight_for(self, name: str) -> float:
        return float(self.values[self.classes.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(w) for name, w in zip(self.classes.names, self.values)}


def _floor_set(classes: ClassTable, majority_floor: Iterable[str] | None) -> set[str]:
    floor = set(majority_floor or ())
    for name in floor:
        if not classes.is_foreground(name):
            raise InvalidConfigError(f"majority_floor entry {name!r} is not a foreground class")
    return floor


def uniform_weights(classes: ClassTable) -> WeightVector:
    """All classes weighted 1, the plain cross-entropy setting."""
    return WeightVector(classes, np.ones(classes.size), provenance={"scheme": "uniform"})


def balanced_weights(classes: ClassTable, manual: Mapping[str, float]) -> WeightVector:
    """Hand-chosen weights for selected foreground classes; everything else 1."""
    values = np.ones(classes.size)
    for name, w in manual.items():
        idx = classes.index(name)
        if idx == 0:
            raise InvalidConfigError("balanced weights may not target the background class")
        values[idx] = float(w)
    return WeightVector(
        classes,
        values,
        provenance={"scheme": "balanced", "manual_weights": dict(manual)},
    )


def inverse_linear_weights(
    stats: ClassStats,
    k: float,
    majority_floor: Iterable[str] | None = None,
    min_weight: float | None = None,
) -> WeightVector:
    """w = k / f per foreground class; floored classes and background get 1."""
    if not (math.isfinite(k) and k > 0):
        raise InvalidConfigError(f"k must be > 0, got {k}")
    classes = stats.classes
    floor = _floor_set(classes, majority_floor)
    values = np.ones(classes.size)
    for name in classes.foreground:
        if name in floor:
            continue
        f = stats.frequency(name)
        if f == 0:
            raise ZeroFrequencyError(name)
        w = k / f
        if min_weight is not None:
            w = max(w, min_weight)
        values[classes.index(name)] = w
    return WeightVector(
        classes,
        values,
        provenance={"scheme": "inverse_linear", "k": k, "majority_floor": sorted(floor)},
    )


def inverse_log_weights(
    stats: ClassStats,
    q: float,
    majority_floor: Iterable[str] | None = None,
    base: float | None = None,
    min_weight: float | None = None,
) -> WeightVector:
    """w = log(q / f) per foreground class (natural log unless base is given)."""
    if not (math.isfinite(q) and q > 0):
        raise InvalidConfigError(f"q must be > 0, got {q}")
    classes = stats.classes
    floor = _floor_set(classes, majority_floor)
    log_base = math.log(base) if base is not None else 1.0
    values = np.ones(classes.size)
    for name in classes.foreground:
        f = stats.frequency(name)
        if name in floor:
            continue
        if q <= f:
            raise InvalidConfigError(f"q must exceed every frequency; q={q} <= f({name})={f}")
        w = math.log(q / f) / log_base
        if min_weight is not None:
            w = max(w, min_weight)
        values[classes.index(name)] = w
    return WeightVector(
        classes,
        values,
        provenance={
            "scheme": "inverse_log",
            "q": q,
            "base": base,
            "majority_floor": sorted(floor),
        },
    )


def effective_numbers(stats: ClassStats, beta: float, count_mode: str = "raw") -> dict[str, float]:
    """E = (1 - beta**n) / (1 - beta) per foreground class.

    ``count_mode`` selects what n is: the raw instance count ("raw") or the
    average instances per image ("per_image").
    """
    if not (0 <= beta < 1):
        raise InvalidConfigError(f"beta must be in [0, 1), got {beta}")
    if count_mode not in COUNT_MODES:
        raise InvalidConfigError(f"count_mode must be one of {COUNT_MODES}, got {count_mode!r}")
    out = {}
    for name in stats.classes.foreground:
        n = stats.count(name) if count_mode == "raw" else stats.frequency(name)
        if n == 0:
            raise ZeroCountError(name)
        out[name] = (1.0 - beta**n) / (1.0 - beta)
    return out


def effective_number_weights(
    stats: ClassStats,
    beta: float,
    normalize_reference: str | None = None,
    count_mode: str = "raw",
    literal: bool = False,
) -> WeightVector:
    """Weights inversely proportional to the effective number of samples.

    The result is rescaled so ``normalize_reference`` (default: the most
    frequent class) has weight exactly 1; background is 1.  ``literal=True``
    instead returns E itself as the weight, the formula as printed in its
    source, which grows with n and is kept only for fidelity checks.
    """
    classes = stats.classes
    e = effective_numbers(stats, beta, count_mode)
    values = np.ones(classes.size)
    ref = None
    if literal:
        for name, e_j in e.items():
            values[classes.index(name)] = e_j
    else:
        ref = normalize_reference if normalize_reference is not None else stats.most_frequent()
        if not classes.is_foreground(ref):
            raise InvalidConfigError(f"normalize_reference {ref!r} is not a foreground class")
        e_ref = e[ref]
        for name, e_j in e.items():
            values[classes.index(name)] = e_ref / e_j
    return WeightVector(
        classes,
        values,
        provenance={
            "scheme": "effective_number",
            "beta": beta,
            "count_mode": count_mode,
            "literal": literal,
            "normalize_reference": ref,
        },
    )


@dataclass(frozen=True)
class SchemeConfig:
    """Which weighting scheme to apply and its hyper-parameters."""

    scheme: str
    k: float | None = None
    q: float | None = None
    beta: float | None = None
    manual_weights: Mapping[str, float] | None = None
    normalize_reference: str | None = None
    majority_floor: tuple[str, ...] = ()
    count_mode: str = "raw"
    log_base: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        required = {"inverse_linear": "k", "inverse_log": "q", "effective_number": "beta"}
        param = required.get(self.scheme)
        if param is not None and getattr(self, param) is None:
            raise InvalidConfigError(f"scheme {self.scheme!r} requires parameter {param!r}")
        if self.manual_weights is not None:
            object.__setattr__(self, "manual_weights", dict(self.manual_weights))
        object.__setattr__(self, "majority_floor", tuple(self.majority_floor))


def compute_weights(
    cfg: SchemeConfig, stats: ClassStats | None = None, classes: ClassTable | None = None
) -> WeightVector:
    """Route a SchemeConfig to the matching scheme.

    ``stats`` is required for the frequency-driven schemes; ``classes`` may be
    given alone for uniform/balanced.  The result carries the scheme and its
    hyper-parameters as provenance for serialization.
    """
    if classes is None:
        if stats is None:
            raise InvalidConfigError("either stats or classes must be provided")
        classes = stats.classes
    if cfg.scheme == "uniform":
        return uniform_weights(classes)
    if cfg.scheme == "balanced":
        return balanced_weights(classes, cfg.manual_weights or {})
    if stats is None:
        raise InvalidConfigError(f"scheme {cfg.scheme!r} requires class statistics")
    if cfg.scheme == "inverse_linear":
        return inverse_linear_weights(stats, cfg.k, cfg.majority_floor)
    if cfg.scheme == "inverse_log":
        return inverse_log_weights(stats, cfg.q, cfg.majority_floor, base=cfg.log_base)
    return effective_number_weights(
        stats,
        cfg.beta,
        normalize_reference=cfg.normalize_reference,
        count_mode=cfg.count_mode,
    )


def save_weights(wv: WeightVector, path: str | Path, run_metadata: Mapping | None = None) -> None:
    """Write a weight file: one name/weight record per class plus scheme header."""
    provenance = dict(wv.provenance or {})
    doc = {
        "format_version": fileio.FORMAT_VERSION,
        "kind": "weight_vector",
        "scheme": provenance.pop("scheme", None),
        "hyperparameters": provenance,
        "classes": [
            {"name": name, "weight": float(w)} for name, w in zip(wv.classes.names, wv.values)
        ],
    }
    if run_metadata is not None:
        doc["run"] = dict(run_metadata)
    fileio.write_json_atomic(path, doc)


def load_weights(path: str | Path) -> WeightVector:
    doc = fileio.read_json(path)
    if doc.get("kind") != "weight_vector":
        raise InvalidInputError(f"{path} is not a weight file")
    names = tuple(rec["name"] for rec in doc["classes"])
    values = np.array([rec["weight"] for rec in doc["classes"]], dtype=np.float64)
    provenance = None
    if doc.get("scheme") is not None:
        provenance = {"scheme": doc["scheme"], **doc.get("hyperparameters", {})}
    return WeightVector(ClassTable(names), values, provenance=provenance)
