"""Image and class-name encoders producing aligned unit-norm embeddings.

The default "local-hash-v1" model needs no downloaded weights: images map to
color/structure descriptors (channel histograms, a coarse grayscale patch,
gradient statistics) and class names to hashed character n-gram vectors,
each projected into the shared embedding space by a seeded random matrix.
Inference is deterministic: identical inputs give identical rows. A
Hugging Face CLIP checkpoint can be named instead when its weights are
available locally; nothing is ever fetched from the network.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

LOCAL_MODEL = "local-hash-v1"

_THUMB = 32
_GRAY_PATCH = 8
_HIST_BINS = 16
_TEXT_BUCKETS = 256


def _projection(rows: int, cols: int, seed: int, tag: str) -> np.ndarray:
    key = int.from_bytes(hashlib.blake2b(
        f"{tag}:{seed}".encode(), digest_size=8).digest(), "little")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
    return rng.standard_normal((rows, cols)) / np.sqrt(rows)


def unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero descriptor row")
    return m / norms


def image_descriptor(path) -> np.ndarray:
    """Raw per-image descriptor; fixed layout so the projection is stable."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((_THUMB, _THUMB), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float64) / 255.0

    parts = []
    for ch in range(3):
        hist, _ = np.histogram(arr[:, :, ch], bins=_HIST_BINS, range=(0, 1))
        parts.append(hist / arr[:, :, ch].size)
    gray = arr.mean(axis=2)
    coarse = gray.reshape(_GRAY_PATCH, _THUMB // _GRAY_PATCH,
                          _GRAY_PATCH, _THUMB // _GRAY_PATCH).mean(axis=(1, 3))
    parts.append(coarse.ravel())
    gx = np.abs(np.diff(gray, axis=1)).mean(axis=(0,))
    gy = np.abs(np.diff(gray, axis=0)).mean(axis=(1,))
    parts.append(gx)
    parts.append(gy)
    parts.append(np.array([arr[:, :, c].mean() for c in range(3)]))
    parts.append(np.array([arr[:, :, c].std() for c in range(3)]))
    return np.concatenate(parts)


def text_descriptor(name: str) -> np.ndarray:
    """Hashed character trigrams of the (padded, lowercased) class name."""
    padded = f"  {name.strip().lower()}  "
    vec = np.zeros(_TEXT_BUCKETS)
    for i in range(len(padded) - 2):
        gram = padded[i:i + 3].encode("utf-8")
        bucket = int.from_bytes(hashlib.blake2b(gram, digest_size=4).digest(),
                                "little") % _TEXT_BUCKETS
        vec[bucket] += 1.0
    return vec


class LocalHashEncoder:
    """Deterministic featurizer pair sharing one embedding space."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def encode_images(self, paths) -> np.ndarray:
        raw = np.stack([image_descriptor(p) for p in paths])
        proj = _projection(raw.shape[1], self.dim, self.seed, "image")
        return unit_rows(raw @ proj)

    def encode_texts(self, names) -> np.ndarray:
        raw = np.stack([text_descriptor(n) for n in names])
        proj = _projection(raw.shape[1], self.dim, self.seed, "text")
        return unit_rows(raw @ proj)


class HfClipEncoder:
    """Optional route through a locally cached CLIP checkpoint."""

    def __init__(self, model_id: str, prompt: str = "a photo of a {}"):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "transformers/torch are required for CLIP export") from exc
        try:
            self.model = CLIPModel.from_pretrained(model_id, local_files_only=True)
            self.processor = CLIPProcessor.from_pretrained(model_id,
                                                           local_files_only=True)
        except OSError as exc:
            raise RuntimeError(
                f"no local weights for {model_id!r}; download them beforehand "
                f"or use the default {LOCAL_MODEL!r} encoder") from exc
        self.prompt = prompt
        self.model.eval()

    def encode_images(self, paths) -> np.ndarray:
        import torch
        images = [Image.open(p).convert("RGB") for p in paths]
        with torch.no_grad():
            inputs = self.processor(images=images, return_tensors="pt")
            feats = self.model.get_image_features(**inputs)
        return unit_rows(feats.numpy().astype(np.float64))

    def encode_texts(self, names) -> np.ndarray:
        import torch
        prompts = [self.prompt.format(n) for n in names]
        with torch.no_grad():
            inputs = self.processor(text=prompts, return_tensors="pt",
                                    padding=True)
            feats = self.model.get_text_features(**inputs)
        return unit_rows(feats.numpy().astype(np.float64))


def make_encoder(model_id: str, dim: int = 64, seed: int = 0,
                 prompt: str = "a photo of a {}"):
    if model_id == LOCAL_MODEL:
        return LocalHashEncoder(dim=dim, seed=seed)
    return HfClipEncoder(model_id, prompt=prompt)
