"""Refinement selector: predict raw-pipeline correctness and gate on it.

A per-axis binary MLP sees [p_correct, p_incorrect] from a correctness
provider concatenated with the raw object and state confidences. Selector
value 1 routes the raw backbone prediction, 0 routes the fused prediction.
The correctness provider abstracts the refinement CNN: its confidences are
read from file for real data or synthesized for desk-scale runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import mlp
from .fusion import Sample

AXES = ("object", "state")


class GateError(Exception):
    """Bad selector inputs."""


class DegenerateSplitError(GateError):
    """A split contains only one correctness class."""


@dataclass(frozen=True)
class CorrectnessConfidence:
    """Provider output: probability that the raw pipeline is correct."""

    sample_id: str
    p_correct: float
    p_incorrect: float

    def __post_init__(self):
        if not 0.0 <= self.p_correct <= 1.0 or not 0.0 <= self.p_incorrect <= 1.0:
            raise GateError(f"{self.sample_id}: correctness confidences must be in [0, 1]")
        if abs(self.p_correct + self.p_incorrect - 1.0) > 1e-6:
            raise GateError(f"{self.sample_id}: p_correct + p_incorrect must be 1")


@dataclass
class SelectorSample:
    sample_id: str
    features: np.ndarray
    label: int  # 1 = raw prediction correct, 0 = incorrect

    def __post_init__(self):
        if self.label not in (0, 1):
            raise GateError(f"selector label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class GateDecision:
    sample_id: str
    axis: str
    selector_value: int
    chosen_source: str  # "raw" or "fused"
    final_index: int

    def __post_init__(self):
        if (self.selector_value == 1) != (self.chosen_source == "raw"):
            raise GateError("selector value 1 must route raw, 0 must route fused")


def _axis_truth(sample: Sample, axis: str) -> tuple[int, np.ndarray]:
    if axis not in AXES:
        raise GateError(f"axis must be one of {AXES}, got {axis!r}")
    if axis == "object":
        return sample.true_object, sample.object_conf.values
    return sample.true_state, sample.state_conf.values


def label_correctness(samples: list[Sample], axis: str) -> list[int]:
    """1 iff the raw confidence argmax matches ground truth on that axis."""
    labels = []
    for sample in samples:
        truth, conf = _axis_truth(sample, axis)
        labels.append(1 if int(np.argmax(conf)) == truth else 0)
    return labels


def selector_features(sample: Sample, correctness: CorrectnessConfidence) -> np.ndarray:
    return np.concatenate([
        [correctness.p_correct, correctness.p_incorrect],
        sample.object_conf.values,
        sample.state_conf.values,
    ])


def build_selector_samples(
    samples: list[Sample],
    correctness: dict[str, CorrectnessConfidence],
    axis: str,
) -> list[SelectorSample]:
    labels = label_correctness(samples, axis)
    out = []
    for sample, label in zip(samples, labels):
        try:
            conf = correctness[sample.sample_id]
        except KeyError:
            raise GateError(f"no correctness confidence for sample {sample.sample_id!r}") from None
        out.append(SelectorSample(sample.sample_id, selector_features(sample, conf), label))
    return out


def train_selector(
    train_samples: list[SelectorSample],
    val_samples: list[SelectorSample],
    config: mlp.MlpConfig,
) -> tuple[mlp.MlpModel, mlp.TrainReport]:
    """Fit the 2-class correctness selector on prepared selector samples."""
    if not train_samples or not val_samples:
        raise GateError("selector needs non-empty train and validation splits")
    train_labels = {s.label for s in train_samples}
    if len(train_labels) < 2:
        only = train_labels.pop()
        raise DegenerateSplitError(
            f"training split contains only label {only}; the selector needs both classes"
        )
    feature_dim = train_samples[0].features.size
    config = replace(config, input_dim=feature_dim, output_dim=2)
    model = mlp.init(config)
    x_train = np.stack([s.features for s in train_samples])
    y_train = np.array([s.label for s in train_samples])
    x_val = np.stack([s.features for s in val_samples])
    y_val = np.array([s.label for s in val_samples])
    return mlp.train(model, (x_train, y_train), (x_val, y_val))


def apply_gate(
    selector: mlp.MlpModel,
    sample: Sample,
    correctness: CorrectnessConfidence,
    fused: np.ndarray,
    axis: str,
    threshold: float = 0.5,
) -> GateDecision:
    """Route raw when the selector is confident the raw pipeline is right.

    The selector's class-1 probability is compared against the threshold;
    an exact tie resolves to the fused prediction.
    """
    _, raw = _axis_truth(sample, axis)
    fused = np.asarray(fused, dtype=float)
    if fused.shape != raw.shape:
        raise GateError(f"fused vector shape {fused.shape} does not match raw {raw.shape}")
    probs = mlp.forward(selector, selector_features(sample, correctness))
    selector_value = 1 if float(probs[1]) > threshold else 0
    chosen = raw if selector_value == 1 else fused
    return GateDecision(
        sample_id=sample.sample_id,
        axis=axis,
        selector_value=selector_value,
        chosen_source="raw" if selector_value == 1 else "fused",
        final_index=int(np.argmax(chosen)),
    )


def save_correctness(records: list[CorrectnessConfidence], path: str | Path) -> None:
    lines = [json.dumps({"id": r.sample_id, "p_correct": r.p_correct}) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_correctness(path: str | Path) -> dict[str, CorrectnessConfidence]:
    records = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        row = json.loads(line)
        p = float(row["p_correct"])
        records[str(row["id"])] = CorrectnessConfidence(str(row["id"]), p, 1.0 - p)
    return records
