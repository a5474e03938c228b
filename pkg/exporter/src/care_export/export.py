"""Folder-to-dataset export: scan labeled images, embed, write artifacts."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import make_encoder
from .formats import write_confidence, write_dataset_dir

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


@dataclass(frozen=True)
class ExportManifest:
    """Resolved inputs of one export: labeled image paths, the class-name
    vocabulary, which encoder to use, and where output goes.
    """

    image_paths: tuple[str, ...]
    labels: tuple[int, ...]
    class_names: tuple[str, ...]
    model_id: str
    out_dir: str

    def __post_init__(self):
        if len(self.image_paths) != len(self.labels):
            raise ValueError("one label per image path required")
        if not self.image_paths:
            raise ValueError("no images to export")
        c = len(self.class_names)
        for lbl in self.labels:
            if not 0 <= lbl < c:
                raise ValueError(f"label {lbl} outside [0, {c})")
        for p in self.image_paths:
            path = Path(p)
            if not path.is_file():
                raise ValueError(f"image path not readable: {p}")


def read_class_names(path) -> tuple[str, ...]:
    names = [ln.strip() for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    if len(set(names)) != len(names):
        raise ValueError("duplicate class names")
    if not names:
        raise ValueError("empty class list")
    return tuple(names)


def scan_image_folder(images_dir, class_names) -> tuple[tuple[str, ...], tuple[int, ...]]:
    """One subdirectory per class name, images inside; sorted for stable order."""
    root = Path(images_dir)
    if not root.is_dir():
        raise ValueError(f"not a directory: {images_dir}")
    index = {name: i for i, name in enumerate(class_names)}
    paths, labels = [], []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if sub.name not in index:
            raise ValueError(f"folder {sub.name!r} is not in the class list")
        for img in sorted(sub.iterdir()):
            if img.suffix.lower() in IMAGE_SUFFIXES:
                paths.append(str(img))
                labels.append(index[sub.name])
    if not paths:
        raise ValueError(f"no images found under {images_dir}")
    return tuple(paths), tuple(labels)


def export_embeddings(manifest: ExportManifest, scale: float = 25.0,
                      dim: int = 64, seed: int = 0,
                      prompt: str = "a photo of a {}") -> Path:
    """Write features.f32 / prototypes.f32 / observed_labels.u32 / meta.json
    plus a zero-shot CARECONF confidence matrix (softmax of scaled cosine
    similarities) into the output directory.
    """
    encoder = make_encoder(manifest.model_id, dim=dim, seed=seed, prompt=prompt)
    features = encoder.encode_images(manifest.image_paths)
    prototypes = encoder.encode_texts(manifest.class_names)
    if features.shape[1] != prototypes.shape[1]:
        raise ValueError(
            f"encoder dimension mismatch: images {features.shape[1]} vs "
            f"texts {prototypes.shape[1]}")

    logits = scale * features @ prototypes.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)

    labels = np.asarray(manifest.labels, dtype=np.int64)
    out = write_dataset_dir(
        manifest.out_dir, features, prototypes, labels,
        meta_extra={
            "model": manifest.model_id,
            "class_names": list(manifest.class_names),
            "confidence_scale": scale,
            "image_paths": list(manifest.image_paths),
        })
    write_confidence(out / "zeroshot.conf", probs,
                     comments=(f"model={manifest.model_id} scale={scale}",))
    return out
