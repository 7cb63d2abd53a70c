"""Export job: frozen backbone + source prompts + labeled images -> bundle.

Per source prompt the job computes pooled features for every kept sample and
the batch-averaged gradient of cross-entropy with respect to the prompt
entries. Gradients are exported raw (unnormalized); any normalization is the
consumer's concern. The classifier head that defines the cross-entropy is a
seeded random linear probe on the pooled features — the backbone itself
ships without a head, and a fixed seeded probe keeps the export
deterministic and self-contained.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .backbones import load_backbone
from .data import DatasetError, load_images
from .writer import write_bundle_f32


@dataclass(frozen=True)
class ExportJob:
    backbone_id: str
    prompt_paths: list
    data_dir: str
    out_path: str
    prompt_shape: tuple = (50, 768)
    cap: int = 2000
    seed: int = 0
    pool: str = "cls"
    device: str = "cpu"
    batch_size: int = 64

    def __post_init__(self):
        if len(self.prompt_paths) < 1:
            raise ValueError("need at least one prompt file")
        p, d = self.prompt_shape
        if p < 1 or d < 1:
            raise ValueError(f"invalid prompt shape {self.prompt_shape}")
        if self.cap < 2:
            raise ValueError(f"sample cap must be >= 2, got {self.cap}")


def load_prompt(path, shape) -> np.ndarray:
    """Raw little-endian f32, row-major, exactly p*d entries."""
    p, d = shape
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != p * d:
        raise ValueError(
            f"prompt file {path!r} holds {raw.size} floats, expected "
            f"{p}*{d}={p * d}")
    return raw.reshape(p, d)


def _probe_head(embed_dim: int, class_count: int, seed: int) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed + 0x4EAD)
    return torch.randn(class_count, embed_dim, generator=generator) / \
        embed_dim ** 0.5


def export(job: ExportJob) -> dict:
    """Run the job; returns a small summary dict for logging."""
    prompts = [load_prompt(path, job.prompt_shape)
               for path in job.prompt_paths]
    model = load_backbone(job.backbone_id, job.prompt_shape[1], job.seed)
    device = torch.device(job.device)
    model = model.to(device)
    images, labels, class_names = load_images(
        job.data_dir, model.image_size, job.cap, job.seed)
    images = images.to(device)
    label_tensor = torch.from_numpy(labels).to(device)
    head = _probe_head(model.embed_dim, len(class_names), job.seed).to(device)

    features, gradients = [], []
    for tokens in prompts:
        prompt = torch.from_numpy(tokens.astype(np.float32)).to(device)
        prompt.requires_grad_(True)
        chunks = []
        losses = []
        n = images.shape[0]
        for start in range(0, n, job.batch_size):
            batch = images[start:start + job.batch_size]
            pooled = model(batch, prompt, pool=job.pool)
            chunks.append(pooled)
            logits = pooled @ head.T
            losses.append(torch.nn.functional.cross_entropy(
                logits, label_tensor[start:start + batch.shape[0]],
                reduction="sum"))
        loss = torch.stack(losses).sum() / n
        grad, = torch.autograd.grad(loss, prompt)
        features.append(torch.cat(chunks).detach().cpu().numpy())
        gradients.append(grad.detach().cpu().numpy())

    provenance = (f"export backbone={job.backbone_id} pool={job.pool} "
                  f"classes={','.join(class_names)}")
    write_bundle_f32(
        job.out_path,
        features=features,
        gradients=gradients,
        labels=labels,
        class_count=len(class_names),
        prompts=prompts,
        provenance=provenance,
        seed=job.seed,
    )
    return {
        "sources": len(prompts),
        "samples": int(labels.size),
        "classes": len(class_names),
        "out": os.fspath(job.out_path),
    }
