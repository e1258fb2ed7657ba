"""Transfer-learning classifier over the condition labels.

Training sets come from SplitPlans; class imbalance is handled by a
weighted random sampler whose per-record weight is the inverse of the
record's class count, so every class is drawn equally often in
expectation. The backbone is pluggable: a VGG16-class network for
paper-faithful runs, a tiny randomly initialized CNN for desk-scale tests.
Every hyperparameter the protocol leaves open is an explicit, logged
config field; none carries acceptance weight.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateLabels,
    EmptyClass,
    MissingPayload,
    PayloadDecodeError,
)
from .manifest import ImageRecord
from .rng import derive_seed
from .splitter import SplitPlan

BACKBONES = ("tiny", "vgg16")
OPTIMIZERS = ("adam", "sgd")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def default_transforms(input_size: int) -> tuple[dict, ...]:
    return (
        {"op": "resize", "size": int(round(input_size * 1.15))},
        {"op": "center_crop", "size": input_size},
        {"op": "random_horizontal_flip", "p": 0.5},
        {"op": "normalize", "mean": list(IMAGENET_MEAN), "std": list(IMAGENET_STD)},
    )


@dataclass(frozen=True, eq=False)
class TrainingConfig:
    backbone: str = "vgg16"
    pretrained: bool = True
    freeze_features: bool = True
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    rng_seed: int = 0
    input_size: int = 224
    transform_spec: tuple[Mapping, ...] = ()

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.input_size < 8:
            raise ConfigError("input_size too small")
        if not self.transform_spec:
            object.__setattr__(self, "transform_spec", default_transforms(self.input_size))

    def to_json_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "pretrained": self.pretrained,
            "freeze_features": self.freeze_features,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "rng_seed": self.rng_seed,
            "input_size": self.input_size,
            "transform_spec": [dict(step) for step in self.transform_spec],
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "TrainingConfig":
        return cls(
            backbone=doc["backbone"],
            pretrained=bool(doc["pretrained"]),
            freeze_features=bool(doc["freeze_features"]),
            epochs=int(doc["epochs"]),
            batch_size=int(doc["batch_size"]),
            learning_rate=float(doc["learning_rate"]),
            optimizer=doc["optimizer"],
            rng_seed=int(doc["rng_seed"]),
            input_size=int(doc["input_size"]),
            transform_spec=tuple(doc["transform_spec"]),
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ModelArtifact:
    """Pointer to a trained model directory plus its provenance digests."""

    weights_uri: str
    label_order: tuple[str, ...]
    config_digest: str
    train_digest: str

    @property
    def directory(self) -> Path:
        return Path(self.weights_uri).parent


def train_ids_digest(records: Sequence[ImageRecord]) -> str:
    ids = "\n".join(sorted(rec.image_id for rec in records))
    return hashlib.sha256(ids.encode("utf-8")).hexdigest()


def build_training_set(plan: SplitPlan, require_payloads: bool = False) -> list[ImageRecord]:
    """The plan's training records in deterministic id order.

    With `require_payloads`, every record's image file must exist on disk
    (train() enables this; split arithmetic checks do not need pixels).
    """
    records = sorted(plan.train, key=lambda rec: rec.image_id)
    if require_payloads:
        for rec in records:
            if not Path(rec.uri).exists():
                raise MissingPayload(f"image file missing for {rec.image_id}: {rec.uri}")
    return records


def class_weights(training_set: Sequence[ImageRecord]) -> dict[str, float]:
    """weight(c) = 1 / count(c), so weighted draws hit each class equally
    often in expectation."""
    counts: dict[str, int] = {}
    for rec in training_set:
        counts[rec.condition] = counts.get(rec.condition, 0) + 1
    if not counts:
        raise EmptyClass("training set is empty")
    return {condition: 1.0 / count for condition, count in counts.items()}


def sample_weights(training_set: Sequence[ImageRecord]) -> list[float]:
    weights = class_weights(training_set)
    return [weights[rec.condition] for rec in training_set]


# ---- transforms (declarative, data not code) ----

def apply_transforms(image, spec: Sequence[Mapping], flip_rng=None):
    """PIL image -> normalized CHW float tensor per the declarative spec.

    Random steps apply only when `flip_rng` (a torch.Generator) is given,
    i.e. during training; evaluation uses the deterministic subset.
    """
    import torch

    img = image.convert("RGB")
    for step in spec:
        op = step["op"]
        if op == "resize":
            size = int(step["size"])
            img = img.resize((size, size), resample=2)  # bilinear
        elif op == "center_crop":
            size = int(step["size"])
            width, height = img.size
            left = (width - size) // 2
            top = (height - size) // 2
            img = img.crop((left, top, left + size, top + size))
        elif op == "random_horizontal_flip":
            if flip_rng is not None:
                p = float(step.get("p", 0.5))
                if torch.rand(1, generator=flip_rng).item() < p:
                    img = img.transpose(0)  # FLIP_LEFT_RIGHT
        elif op == "normalize":
            pass  # applied on the tensor below
        else:
            raise ConfigError(f"unknown transform op {op!r}")
    array = np.asarray(img, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    for step in spec:
        if step["op"] == "normalize":
            mean = torch.tensor(step["mean"], dtype=torch.float32).view(-1, 1, 1)
            std = torch.tensor(step["std"], dtype=torch.float32).view(-1, 1, 1)
            tensor = (tensor - mean) / std
    return tensor


def _load_image(record: ImageRecord):
    from PIL import Image, UnidentifiedImageError

    path = Path(record.uri)
    if not path.exists():
        raise MissingPayload(f"image file missing for {record.image_id}: {record.uri}")
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise PayloadDecodeError(f"cannot decode {record.uri}: {exc}") from exc


def _build_model(backbone: str, n_classes: int, pretrained: bool, freeze_features: bool):
    import torch.nn as nn

    if backbone == "tiny":
        return nn.Sequential(
            nn.Conv2d(3, 12, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(12, 24, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
            nn.Flatten(),
            nn.Linear(24 * 16, n_classes),
        )
    if backbone == "vgg16":
        from torchvision.models import vgg16

        model = vgg16(weights="IMAGENET1K_V1" if pretrained else None)
        if freeze_features:
            for param in model.features.parameters():
                param.requires_grad = False
        model.classifier[6] = nn.Linear(model.classifier[6].in_features, n_classes)
        return model
    raise ConfigError(f"unknown backbone {backbone!r}")


def train(
    training_set: Sequence[ImageRecord],
    config: TrainingConfig,
    output_dir: str | Path,
    log_path: str | Path | None = None,
) -> ModelArtifact:
    """Fine-tune the configured backbone on the training records.

    Deterministic for a fixed (training set, config): all RNG flows from
    config.rng_seed, data loading is single-threaded, and label order is
    frozen into the artifact. Writes {weights.pt, labels.json, config.json,
    meta.json} under `output_dir`.
    """
    import torch
    import torch.nn as nn
    from torch.utils.data import DataLoader, Dataset, WeightedRandomSampler

    records = sorted(training_set, key=lambda rec: rec.image_id)
    for rec in records:
        if not Path(rec.uri).exists():
            raise MissingPayload(f"image file missing for {rec.image_id}: {rec.uri}")
    label_order = tuple(sorted({rec.condition for rec in records}))
    if len(label_order) < 2:
        raise DegenerateLabels(f"need >= 2 classes, got {len(label_order)}")
    label_index = {label: i for i, label in enumerate(label_order)}

    torch.manual_seed(derive_seed(config.rng_seed, "torch"))

    class _RecordDataset(Dataset):
        def __init__(self, flip_rng):
            self.flip_rng = flip_rng

        def __len__(self):
            return len(records)

        def __getitem__(self, idx):
            rec = records[idx]
            tensor = apply_transforms(_load_image(rec), config.transform_spec, self.flip_rng)
            return tensor, label_index[rec.condition], idx

    flip_rng = torch.Generator().manual_seed(derive_seed(config.rng_seed, "flip"))
    sampler_rng = torch.Generator().manual_seed(derive_seed(config.rng_seed, "sampler"))
    sampler = WeightedRandomSampler(
        weights=torch.tensor(sample_weights(records), dtype=torch.double),
        num_samples=len(records),
        replacement=True,
        generator=sampler_rng,
    )
    loader = DataLoader(
        _RecordDataset(flip_rng),
        batch_size=config.batch_size,
        sampler=sampler,
        num_workers=0,
    )

    model = _build_model(config.backbone, len(label_order), config.pretrained, config.freeze_features)
    if config.optimizer == "adam":
        optimizer = torch.optim.Adam(
            (p for p in model.parameters() if p.requires_grad), lr=config.learning_rate
        )
    else:
        optimizer = torch.optim.SGD(
            (p for p in model.parameters() if p.requires_grad), lr=config.learning_rate
        )
    loss_fn = nn.CrossEntropyLoss()

    log_lines = []
    model.train()
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        batches = 0
        histogram = [0] * len(label_order)
        for inputs, targets, _ in loader:
            optimizer.zero_grad()
            loss = loss_fn(model(inputs), targets)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.item())
            batches += 1
            for t in targets.tolist():
                histogram[t] += 1
        log_lines.append(
            {
                "epoch": epoch,
                "loss": epoch_loss / max(batches, 1),
                "sampled_class_histogram": {
                    label_order[i]: histogram[i] for i in range(len(label_order))
                },
            }
        )

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    weights_path = output_dir / "weights.pt"
    torch.save(model.state_dict(), weights_path)
    (output_dir / "labels.json").write_text(
        json.dumps(list(label_order), indent=2) + "\n", encoding="utf-8"
    )
    (output_dir / "config.json").write_text(
        json.dumps(config.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    artifact = ModelArtifact(
        weights_uri=str(weights_path),
        label_order=label_order,
        config_digest=config.digest(),
        train_digest=train_ids_digest(records),
    )
    (output_dir / "meta.json").write_text(
        json.dumps(
            {
                "label_order": list(label_order),
                "config_digest": artifact.config_digest,
                "train_digest": artifact.train_digest,
                "final_loss": log_lines[-1]["loss"],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    if log_path is not None:
        log_file = Path(log_path)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        with log_file.open("w", encoding="utf-8") as fh:
            for line in log_lines:
                fh.write(json.dumps(line, sort_keys=True) + "\n")
    return artifact


def load_artifact(directory: str | Path) -> ModelArtifact:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    return ModelArtifact(
        weights_uri=str(directory / "weights.pt"),
        label_order=tuple(meta["label_order"]),
        config_digest=meta["config_digest"],
        train_digest=meta["train_digest"],
    )


def predict_from_scores(scores: np.ndarray, label_order: Sequence[str]) -> list[str]:
    """Argmax per row; ties break to the earliest position in label_order."""
    if scores.ndim != 2 or scores.shape[1] != len(label_order):
        raise ValueError(f"scores shape {scores.shape} incompatible with {len(label_order)} labels")
    return [label_order[int(i)] for i in np.argmax(scores, axis=1)]


def predict(model: ModelArtifact, images: Sequence[ImageRecord], batch_size: int = 64) -> list[str]:
    """One condition label per input record, in input order."""
    if not images:
        return []
    import torch

    directory = model.directory
    config = TrainingConfig.from_json_dict(
        json.loads((directory / "config.json").read_text(encoding="utf-8"))
    )
    net = _build_model(config.backbone, len(model.label_order), pretrained=False, freeze_features=False)
    net.load_state_dict(torch.load(model.weights_uri, map_location="cpu", weights_only=True))
    net.eval()

    labels: list[str] = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            batch = images[start : start + batch_size]
            tensors = torch.stack(
                [apply_transforms(_load_image(rec), config.transform_spec, None) for rec in batch]
            )
            scores = net(tensors).cpu().numpy()
            labels.extend(predict_from_scores(scores, model.label_order))
    return labels
