"""Marginal probabilities and fusion feature vectors.

The knowledge-informed marginal for one axis sums the backbone's prior
confidence on the opposite axis against the conditional matrix:

    marginal_object[j] = sum_i state_prior[i] * P(object_j | state_i)
    marginal_state[j]  = sum_i object_prior[i] * P(state_j | object_i)

Priors and marginals for both axes are concatenated into one fusion feature
vector of length 2 * (N_states + N_objects), in the fixed layout
[state priors | state marginals | object priors | object marginals].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import ClassCatalog
from .knowledge import ConditionalMatrix

KINDS = ("object", "state")
SPLITS = ("train", "validation", "test")

# The dataset file abbreviates split names.
_SPLIT_TO_FILE = {"train": "train", "validation": "val", "test": "test"}
_SPLIT_FROM_FILE = {v: k for k, v in _SPLIT_TO_FILE.items()}

FEATURE_LAYOUT = "state_prior|state_marginal|object_prior|object_marginal"


class FusionError(Exception):
    """Dimension or kind mismatch between fusion inputs."""


@dataclass
class ConfidenceVector:
    """A probability distribution over objects or states.

    Vectors whose sum drifts from 1 by more than 1e-3 are renormalized with
    a warning (exported confidences often lose mass to rounding); smaller
    drift is corrected silently.
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FusionError(f"kind must be one of {KINDS}, got {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise FusionError("confidence values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise FusionError("confidence values must be finite and >= 0")
        total = values.sum()
        if total <= 0:
            raise FusionError("confidence values must have positive mass")
        drift = abs(total - 1.0)
        if drift > 1e-3:
            warnings.warn(
                f"{self.kind} confidences sum to {total:.6f}; renormalizing",
                stacklevel=2,
            )
            values = values / total
        elif drift > 1e-6:
            values = values / total
        self.values = values

    def __len__(self) -> int:
        return self.values.size

    def argmax(self) -> int:
        # Ties break to the lowest index everywhere in the system.
        return int(np.argmax(self.values))


@dataclass
class MarginalVector:
    """Knowledge-informed class probabilities for one axis."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FusionError(f"kind must be one of {KINDS}, got {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise FusionError("marginal values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise FusionError("marginal values must be finite and >= 0")
        if abs(values.sum() - 1.0) > 1e-6:
            raise FusionError(f"marginal values must sum to 1, got {values.sum():.9f}")
        self.values = values

    def __len__(self) -> int:
        return self.values.size

    def argmax(self) -> int:
        return int(np.argmax(self.values))


@dataclass
class FusionFeatureVector:
    values: np.ndarray
    layout: str = FEATURE_LAYOUT

    def __len__(self) -> int:
        return self.values.size


@dataclass
class Sample:
    """One image's worth of backbone output plus ground truth."""

    sample_id: str
    split: str
    true_object: int
    true_state: int
    object_conf: ConfidenceVector
    state_conf: ConfidenceVector

    def __post_init__(self):
        if self.split not in SPLITS:
            raise FusionError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.object_conf.kind != "object" or self.state_conf.kind != "state":
            raise FusionError("sample confidence vectors have swapped kinds")
        if not 0 <= self.true_object < len(self.object_conf):
            raise FusionError(f"true_object {self.true_object} out of range")
        if not 0 <= self.true_state < len(self.state_conf):
            raise FusionError(f"true_state {self.true_state} out of range")


def marginal_objects(state_prior: ConfidenceVector, cm: ConditionalMatrix) -> MarginalVector:
    """Marginal object probabilities from a state prior and P(object|state)."""
    if state_prior.kind != "state":
        raise FusionError(f"expected a state prior, got kind {state_prior.kind!r}")
    if cm.direction != "object_given_state":
        raise FusionError(f"expected an object_given_state matrix, got {cm.direction!r}")
    if cm.n_cols != len(state_prior):
        raise FusionError(f"matrix has {cm.n_cols} state columns, prior has {len(state_prior)}")
    return MarginalVector("object", cm.values @ state_prior.values)


def marginal_states(object_prior: ConfidenceVector, cm: ConditionalMatrix) -> MarginalVector:
    """Marginal state probabilities from an object prior and P(state|object)."""
    if object_prior.kind != "object":
        raise FusionError(f"expected an object prior, got kind {object_prior.kind!r}")
    if cm.direction != "state_given_object":
        raise FusionError(f"expected a state_given_object matrix, got {cm.direction!r}")
    if cm.n_cols != len(object_prior):
        raise FusionError(f"matrix has {cm.n_cols} object columns, prior has {len(object_prior)}")
    return MarginalVector("state", cm.values @ object_prior.values)


def build_feature_vector(
    sample: Sample,
    marg_state: MarginalVector,
    marg_object: MarginalVector,
) -> FusionFeatureVector:
    """Concatenate priors and marginals into the fixed fusion layout."""
    if marg_state.kind != "state" or marg_object.kind != "object":
        raise FusionError("marginal vectors have swapped kinds")
    if len(marg_state) != len(sample.state_conf):
        raise FusionError("state marginal length does not match state prior")
    if len(marg_object) != len(sample.object_conf):
        raise FusionError("object marginal length does not match object prior")
    values = np.concatenate([
        sample.state_conf.values,
        marg_state.values,
        sample.object_conf.values,
        marg_object.values,
    ])
    return FusionFeatureVector(values)


def linear_blend(prior: ConfidenceVector, marginal: MarginalVector, alpha: float) -> ConfidenceVector:
    """alpha * prior + (1 - alpha) * marginal, the non-MLP fusion baseline."""
    if not 0.0 <= alpha <= 1.0:
        raise FusionError(f"alpha must be in [0, 1], got {alpha}")
    if prior.kind != marginal.kind:
        raise FusionError(f"kind mismatch: prior {prior.kind!r}, marginal {marginal.kind!r}")
    if len(prior) != len(marginal):
        raise FusionError("prior and marginal lengths differ")
    return ConfidenceVector(prior.kind, alpha * prior.values + (1.0 - alpha) * marginal.values)


def save_dataset(samples: list[Sample], catalog: ClassCatalog, path: str | Path) -> None:
    """Write samples as JSON Lines with a catalog-fingerprint header line."""
    lines = [json.dumps({
        "catalog_fingerprint": catalog.fingerprint(),
        "n_objects": catalog.n_objects,
        "n_states": catalog.n_states,
    })]
    for s in samples:
        lines.append(json.dumps({
            "id": s.sample_id,
            "split": _SPLIT_TO_FILE[s.split],
            "object": catalog.objects[s.true_object].name,
            "state": catalog.states[s.true_state].name,
            "object_conf": s.object_conf.values.tolist(),
            "state_conf": s.state_conf.values.tolist(),
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path: str | Path, catalog: ClassCatalog) -> list[Sample]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FusionError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if header.get("catalog_fingerprint") != catalog.fingerprint():
        raise FusionError(
            f"{path}: dataset was written for catalog {header.get('catalog_fingerprint')}, "
            f"expected {catalog.fingerprint()}"
        )
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        row = json.loads(line)
        try:
            split = _SPLIT_FROM_FILE[row["split"]]
        except KeyError:
            raise FusionError(f"{path}:{lineno}: unknown split {row.get('split')!r}") from None
        samples.append(Sample(
            sample_id=str(row["id"]),
            split=split,
            true_object=catalog.index_of("object", row["object"]),
            true_state=catalog.index_of("state", row["state"]),
            object_conf=ConfidenceVector("object", np.array(row["object_conf"])),
            state_conf=ConfidenceVector("state", np.array(row["state_conf"])),
        ))
    return samples


def split_samples(samples: list[Sample]) -> dict[str, list[Sample]]:
    by_split: dict[str, list[Sample]] = {s: [] for s in SPLITS}
    for sample in samples:
        by_split[sample.split].append(sample)
    return by_split
