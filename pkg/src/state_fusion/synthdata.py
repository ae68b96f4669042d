"""Synthetic worlds for desk-scale verification.

A world is a ground-truth joint distribution over (object, state) pairs
plus knobs for how good the simulated backbone is:

    signal   -- logit bump on the true class
    sigma    -- std of Gaussian logit noise per class
    rho      -- informativeness of the correctness provider
    kappa    -- corruption blended into the served knowledge matrices

Confidences are soft-max(signal * one_hot(true) + N(0, sigma)) per axis, so
one knob tunes raw accuracy. Correctness confidences interpolate between
the true correctness indicator (rho=1) and pure uniform noise (rho=0),
separately per axis. Everything is seeded; the same spec yields a
byte-identical dataset file.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .catalog import ClassCatalog, LabelEntry
from .fusion import ConfidenceVector, Sample
from .gate import CorrectnessConfidence
from .knowledge import ConditionalMatrix
from .seeding import rng_for

# Tuned so the default world's raw state accuracy lands in the 0.75-0.85
# band at n=3000 (see tests/test_acceptance.py).
DEFAULT_SIGNAL = 1.2
DEFAULT_SIGMA = 1.05
DEFAULT_N_OBJECTS = 15
DEFAULT_N_STATES = 9
DEFAULT_N_SAMPLES = 3000

# Dirichlet concentration for random joints: < 1 makes each state mass
# concentrate on a few objects, so the knowledge matrices carry signal.
JOINT_CONCENTRATION = 0.15

SPLIT_FRACTIONS = {"train": 0.70, "validation": 0.15, "test": 0.15}


class WorldError(Exception):
    """Invalid world specification."""


@dataclass(frozen=True)
class WorldSpec:
    n_objects: int
    n_states: int
    joint: np.ndarray
    signal: float = DEFAULT_SIGNAL
    sigma: float = DEFAULT_SIGMA
    rho: float = 1.0
    kappa: float = 0.0
    seed: int = 0

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        if self.n_objects < 1 or self.n_states < 1:
            raise WorldError("world needs at least one object and one state")
        if joint.shape != (self.n_objects, self.n_states):
            raise WorldError(f"joint shape {joint.shape} does not match "
                             f"({self.n_objects}, {self.n_states})")
        if np.any(joint < 0) or not np.all(np.isfinite(joint)):
            raise WorldError("joint entries must be finite and >= 0")
        if abs(joint.sum() - 1.0) > 1e-9:
            raise WorldError(f"joint must sum to 1, got {joint.sum():.12f}")
        if self.signal <= 0:
            raise WorldError("signal must be > 0")
        if self.sigma < 0:
            raise WorldError("sigma must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise WorldError("rho must be in [0, 1]")
        if not 0.0 <= self.kappa <= 1.0:
            raise WorldError("kappa must be in [0, 1]")
        object.__setattr__(self, "joint", joint)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["joint"] = self.joint.tolist()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "WorldSpec":
        data = dict(data)
        data["joint"] = np.array(data["joint"], dtype=float)
        return cls(**data)


@dataclass
class SyntheticDataset:
    spec: WorldSpec
    catalog: ClassCatalog
    samples: list[Sample]
    correctness: dict[str, dict[str, CorrectnessConfidence]]  # axis -> id -> record
    true_conditionals: tuple[ConditionalMatrix, ConditionalMatrix]
    served_conditionals: tuple[ConditionalMatrix, ConditionalMatrix]


def synthetic_catalog(n_objects: int, n_states: int) -> ClassCatalog:
    """Placeholder label spaces for generated worlds."""
    return ClassCatalog(
        objects=tuple(LabelEntry(f"object_{i:02d}") for i in range(n_objects)),
        states=tuple(LabelEntry(f"state_{i:02d}") for i in range(n_states)),
    )


def random_joint(n_objects: int, n_states: int, seed: int,
                 concentration: float = JOINT_CONCENTRATION) -> np.ndarray:
    """States uniform; per-state object columns drawn from a sparse Dirichlet."""
    rng = rng_for(seed, "world")
    columns = rng.dirichlet(np.full(n_objects, concentration), size=n_states).T
    return columns / n_states


def default_world(seed: int = 0, **overrides) -> WorldSpec:
    """The desk-scale 15x9 world used by the acceptance suite."""
    fields = {
        "n_objects": DEFAULT_N_OBJECTS,
        "n_states": DEFAULT_N_STATES,
        "signal": DEFAULT_SIGNAL,
        "sigma": DEFAULT_SIGMA,
        "rho": 1.0,
        "kappa": 0.0,
        "seed": seed,
    }
    fields.update(overrides)
    if "joint" not in fields:
        fields["joint"] = random_joint(fields["n_objects"], fields["n_states"], seed)
    return WorldSpec(**fields)


def derive_conditionals_from_joint(
    joint: np.ndarray,
    catalog_fingerprint: str = "",
) -> tuple[ConditionalMatrix, ConditionalMatrix]:
    """Exact Bayes conditionals from the joint; zero-mass axes go uniform."""
    joint = np.asarray(joint, dtype=float)
    n_objects, n_states = joint.shape
    col_sums = joint.sum(axis=0)
    row_sums = joint.sum(axis=1)
    ogs = np.empty_like(joint)
    for j in range(n_states):
        if col_sums[j] > 0:
            ogs[:, j] = joint[:, j] / col_sums[j]
        else:
            warnings.warn(f"state column {j} has zero mass; using a uniform conditional")
            ogs[:, j] = 1.0 / n_objects
    sgo = np.empty((n_states, n_objects))
    for i in range(n_objects):
        if row_sums[i] > 0:
            sgo[:, i] = joint[i, :] / row_sums[i]
        else:
            warnings.warn(f"object row {i} has zero mass; using a uniform conditional")
            sgo[:, i] = 1.0 / n_states
    return (
        ConditionalMatrix("object_given_state", ogs, 0.0, catalog_fingerprint),
        ConditionalMatrix("state_given_object", sgo, 0.0, catalog_fingerprint),
    )


def corrupt_knowledge(
    conditionals: tuple[ConditionalMatrix, ConditionalMatrix],
    kappa: float,
    seed: int,
) -> tuple[ConditionalMatrix, ConditionalMatrix]:
    """Blend column-stochastic noise into the true conditionals.

    kappa=0 returns the inputs untouched; kappa=1 is independent of them.
    """
    if not 0.0 <= kappa <= 1.0:
        raise WorldError("kappa must be in [0, 1]")
    if kappa == 0.0:
        return conditionals
    rng = rng_for(seed, "knowledge-corruption")
    out = []
    for cm in conditionals:
        noise = rng.dirichlet(np.ones(cm.n_rows), size=cm.n_cols).T
        blended = (1.0 - kappa) * cm.values + kappa * noise
        blended = blended / blended.sum(axis=0, keepdims=True)
        out.append(ConditionalMatrix(cm.direction, blended, cm.epsilon, cm.catalog_fingerprint))
    return out[0], out[1]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _split_of(index: int, n_train: int, n_val: int) -> str:
    if index < n_train:
        return "train"
    if index < n_train + n_val:
        return "validation"
    return "test"


def sample_dataset(spec: WorldSpec, n_samples: int) -> SyntheticDataset:
    """Draw a full synthetic dataset from the world specification."""
    if n_samples < 10:
        raise WorldError("n_samples must be >= 10")
    catalog = synthetic_catalog(spec.n_objects, spec.n_states)
    fingerprint = catalog.fingerprint()

    rng_labels = rng_for(spec.seed, "labels")
    rng_obj = rng_for(spec.seed, "object-noise")
    rng_state = rng_for(spec.seed, "state-noise")
    rng_corr = {axis: rng_for(spec.seed, f"correctness-{axis}") for axis in ("object", "state")}

    flat = spec.joint.ravel()
    pair_idx = rng_labels.choice(flat.size, size=n_samples, p=flat)
    true_objects = pair_idx // spec.n_states
    true_states = pair_idx % spec.n_states

    obj_logits = spec.signal * np.eye(spec.n_objects)[true_objects]
    obj_logits = obj_logits + rng_obj.normal(0.0, spec.sigma, size=obj_logits.shape)
    state_logits = spec.signal * np.eye(spec.n_states)[true_states]
    state_logits = state_logits + rng_state.normal(0.0, spec.sigma, size=state_logits.shape)
    obj_conf = _softmax_rows(obj_logits)
    state_conf = _softmax_rows(state_logits)

    n_train = round(SPLIT_FRACTIONS["train"] * n_samples)
    n_val = round(SPLIT_FRACTIONS["validation"] * n_samples)

    samples = []
    for i in range(n_samples):
        samples.append(Sample(
            sample_id=f"s{i:05d}",
            split=_split_of(i, n_train, n_val),
            true_object=int(true_objects[i]),
            true_state=int(true_states[i]),
            object_conf=ConfidenceVector("object", obj_conf[i]),
            state_conf=ConfidenceVector("state", state_conf[i]),
        ))

    correctness: dict[str, dict[str, CorrectnessConfidence]] = {}
    for axis, conf, truth in (("object", obj_conf, true_objects), ("state", state_conf, true_states)):
        correct = (conf.argmax(axis=1) == truth).astype(float)
        noise = rng_corr[axis].uniform(size=n_samples)
        p_correct = spec.rho * correct + (1.0 - spec.rho) * noise
        correctness[axis] = {
            s.sample_id: CorrectnessConfidence(s.sample_id, float(p), float(1.0 - p))
            for s, p in zip(samples, p_correct)
        }

    true_conditionals = derive_conditionals_from_joint(spec.joint, fingerprint)
    served_conditionals = corrupt_knowledge(true_conditionals, spec.kappa, spec.seed)
    return SyntheticDataset(
        spec=spec,
        catalog=catalog,
        samples=samples,
        correctness=correctness,
        true_conditionals=true_conditionals,
        served_conditionals=served_conditionals,
    )


def save_world(spec: WorldSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_world(path: str | Path) -> WorldSpec:
    return WorldSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
