"""Frozen vision backbones with prompt-token prepending.

A backbone maps a batch of images plus a p x d prompt tensor to pooled
features. The token sequence is [class token; prompt tokens; patch tokens];
positional embeddings are added to the class and patch tokens only, so the
prompt length can vary without retraining anything.

Registry ids:

- ``toy-vit``: a small randomly initialized transformer, seeded and frozen.
  No downloads, CPU-friendly, intended for pipeline and format testing.
- ``vit_b_16``: torchvision's pretrained ViT-B/16 (downloads weights on
  first use; embed dim 768, 224 x 224 input).
"""

from __future__ import annotations

import torch
from torch import nn


class BackboneError(RuntimeError):
    """The requested backbone cannot be constructed."""


class PromptedViT(nn.Module):
    """Minimal ViT encoder that accepts prepended prompt tokens."""

    def __init__(self, image_size=32, patch_size=8, embed_dim=16, depth=2,
                 heads=4, generator: torch.Generator | None = None):
        super().__init__()
        if image_size % patch_size:
            raise BackboneError(
                f"image size {image_size} not divisible by patch {patch_size}")
        self.image_size = image_size
        self.embed_dim = embed_dim
        self.patch_embed = nn.Conv2d(3, embed_dim, kernel_size=patch_size,
                                     stride=patch_size)
        num_patches = (image_size // patch_size) ** 2
        self.cls_token = nn.Parameter(torch.empty(1, 1, embed_dim))
        self.pos_embed = nn.Parameter(torch.empty(1, 1 + num_patches, embed_dim))
        self.blocks = nn.ModuleList([
            nn.TransformerEncoderLayer(embed_dim, heads, 4 * embed_dim,
                                       dropout=0.0, batch_first=True,
                                       norm_first=True)
            for _ in range(depth)
        ])
        self.norm = nn.LayerNorm(embed_dim)
        self._init_weights(generator)

    def _init_weights(self, generator):
        g = generator if generator is not None else torch.Generator()
        # Every parameter is re-initialized from the seeded generator so the
        # model is identical across constructions; submodule constructors
        # draw from the global RNG and cannot be relied on.
        for name, param in self.named_parameters():
            if param.dim() > 1:
                nn.init.trunc_normal_(param, std=0.02, generator=g)
            elif "bias" in name:
                nn.init.zeros_(param)
            else:
                nn.init.ones_(param)  # LayerNorm scales

    def forward(self, images: torch.Tensor, prompt: torch.Tensor,
                pool: str = "cls") -> torch.Tensor:
        if prompt.shape[-1] != self.embed_dim:
            raise BackboneError(
                f"prompt dim {prompt.shape[-1]} does not match embed dim "
                f"{self.embed_dim}")
        n = images.shape[0]
        patches = self.patch_embed(images).flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(n, -1, -1)
        tokens = torch.cat([cls, patches], dim=1) + self.pos_embed
        prompt_batch = prompt.unsqueeze(0).expand(n, -1, -1)
        seq = torch.cat([tokens[:, :1], prompt_batch, tokens[:, 1:]], dim=1)
        for block in self.blocks:
            seq = block(seq)
        seq = self.norm(seq)
        if pool == "cls":
            return seq[:, 0]
        if pool == "mean":
            return seq.mean(dim=1)
        raise BackboneError(f"unknown pooling {pool!r}")


class _TorchvisionViT(nn.Module):
    """Wraps torchvision's ViT-B/16 with prompt prepending."""

    def __init__(self):
        super().__init__()
        try:
            from torchvision.models import ViT_B_16_Weights, vit_b_16
        except ImportError as exc:
            raise BackboneError(f"torchvision unavailable: {exc}") from exc
        try:
            self.vit = vit_b_16(weights=ViT_B_16_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise BackboneError(f"cannot load vit_b_16 weights: {exc}") from exc
        self.image_size = 224
        self.embed_dim = 768

    def forward(self, images, prompt, pool="cls"):
        n = images.shape[0]
        x = self.vit._process_input(images)
        cls = self.vit.class_token.expand(n, -1, -1)
        x = torch.cat([cls, x], dim=1)
        prompt_batch = prompt.unsqueeze(0).expand(n, -1, -1)
        x = torch.cat([x[:, :1], prompt_batch, x[:, 1:]], dim=1)
        x = self.vit.encoder.ln(
            self.vit.encoder.layers(self.vit.encoder.dropout(x)))
        if pool == "cls":
            return x[:, 0]
        if pool == "mean":
            return x.mean(dim=1)
        raise BackboneError(f"unknown pooling {pool!r}")


def load_backbone(backbone_id: str, embed_dim: int, seed: int) -> nn.Module:
    """Construct a frozen backbone; gradients flow only through inputs."""
    if backbone_id == "toy-vit":
        generator = torch.Generator().manual_seed(seed)
        model = PromptedViT(embed_dim=embed_dim, generator=generator)
    elif backbone_id == "vit_b_16":
        model = _TorchvisionViT()
        if embed_dim != model.embed_dim:
            raise BackboneError(
                f"vit_b_16 embeds at 768, prompt declares d={embed_dim}")
    else:
        raise BackboneError(
            f"unknown backbone {backbone_id!r}; available: toy-vit, vit_b_16")
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model
