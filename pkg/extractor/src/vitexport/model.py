"""Compact ViT backbone with last-layer query/key/value and attention capture.

Parameter names follow the common ViT checkpoint convention (patch_embed.proj,
blocks.N.attn.qkv, ...), so published self-supervised ViT-S/16 checkpoints load
directly. Without weights the model is randomly initialized from a fixed seed,
which is sufficient for exercising export formats and geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class ViTConfig:
    patch_size: int = 16
    embed_dim: int = 384
    depth: int = 12
    num_heads: int = 6
    mlp_ratio: float = 4.0


MODELS = {
    "vit-s16-dino": ViTConfig(patch_size=16, embed_dim=384, depth=12, num_heads=6),
    "vit-s8-dino": ViTConfig(patch_size=8, embed_dim=384, depth=12, num_heads=6),
    "vit-b16-dino": ViTConfig(patch_size=16, embed_dim=768, depth=12, num_heads=12),
}


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, capture: bool = False):
        b, n, c = x.shape
        qkv = (
            self.qkv(x)
            .reshape(b, n, 3, self.num_heads, self.head_dim)
            .permute(2, 0, 3, 1, 4)  # (3, B, heads, N, head_dim)
        )
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        out = self.proj(out)
        if capture:
            return out, {"query": q, "key": k, "value": v, "attn": attn}
        return out, None


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x, capture: bool = False):
        attended, captured = self.attn(self.norm1(x), capture=capture)
        x = x + attended
        x = x + self.mlp(self.norm2(x))
        return x, captured


class PatchEmbed(nn.Module):
    def __init__(self, patch_size: int, embed_dim: int):
        super().__init__()
        self.proj = nn.Conv2d(3, embed_dim, kernel_size=patch_size, stride=patch_size)

    def forward(self, x):
        return self.proj(x).flatten(2).transpose(1, 2)  # (B, N, dim), row-major patches


class VisionTransformer(nn.Module):
    def __init__(self, config: ViTConfig):
        super().__init__()
        self.config = config
        self.patch_embed = PatchEmbed(config.patch_size, config.embed_dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, config.embed_dim))
        # trained at 224x224; interpolated for other grids
        base_patches = (224 // config.patch_size) ** 2
        self.pos_embed = nn.Parameter(torch.zeros(1, base_patches + 1, config.embed_dim))
        self.blocks = nn.ModuleList(
            Block(config.embed_dim, config.num_heads, config.mlp_ratio)
            for _ in range(config.depth)
        )
        self.norm = nn.LayerNorm(config.embed_dim, eps=1e-6)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)

    def _interpolated_pos_embed(self, grid_h: int, grid_w: int) -> torch.Tensor:
        n = self.pos_embed.shape[1] - 1
        if grid_h * grid_w == n and grid_h == grid_w:
            return self.pos_embed
        cls_pos = self.pos_embed[:, :1]
        patch_pos = self.pos_embed[:, 1:]
        side = int(math.sqrt(n))
        patch_pos = patch_pos.reshape(1, side, side, -1).permute(0, 3, 1, 2)
        patch_pos = nn.functional.interpolate(
            patch_pos, size=(grid_h, grid_w), mode="bicubic", align_corners=False
        )
        patch_pos = patch_pos.permute(0, 2, 3, 1).reshape(1, grid_h * grid_w, -1)
        return torch.cat([cls_pos, patch_pos], dim=1)

    def forward_features(self, x: torch.Tensor):
        """x: (B, 3, H, W) with H, W multiples of patch_size.

        Returns (cls_tokens after final norm, captured dict from the last
        block) where captured holds per-head query/key/value (B, heads, N+1,
        head_dim) and attention (B, heads, N+1, N+1).
        """
        b, _, h, w = x.shape
        grid_h, grid_w = h // self.config.patch_size, w // self.config.patch_size
        tokens = self.patch_embed(x)
        cls = self.cls_token.expand(b, -1, -1)
        tokens = torch.cat([cls, tokens], dim=1)
        tokens = tokens + self._interpolated_pos_embed(grid_h, grid_w)
        captured = None
        last = len(self.blocks) - 1
        for i, block in enumerate(self.blocks):
            tokens, cap = block(tokens, capture=(i == last))
            if cap is not None:
                captured = cap
        tokens = self.norm(tokens)
        return tokens[:, 0], captured


def _strip_checkpoint(state: dict) -> dict:
    if "teacher" in state and isinstance(state["teacher"], dict):
        state = state["teacher"]
    elif "student" in state and isinstance(state["student"], dict):
        state = state["student"]
    elif "state_dict" in state and isinstance(state["state_dict"], dict):
        state = state["state_dict"]
    out = {}
    for key, value in state.items():
        for prefix in ("module.", "backbone."):
            if key.startswith(prefix):
                key = key[len(prefix):]
        if key.startswith("head"):
            continue
        out[key] = value
    return out


def build_model(name: str, weights: str | None = None, seed: int = 0) -> VisionTransformer:
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}, expected one of {sorted(MODELS)}")
    torch.manual_seed(seed)
    model = VisionTransformer(MODELS[name])
    if weights is not None:
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
        except (OSError, RuntimeError) as exc:
            raise ValueError(f"cannot load weights from {weights}: {exc}") from exc
        cleaned = _strip_checkpoint(state)
        missing, unexpected = model.load_state_dict(cleaned, strict=False)
        if missing:
            raise ValueError(f"checkpoint is missing parameters: {missing[:5]}")
        if unexpected:
            print(f"ignoring {len(unexpected)} unexpected checkpoint entries")
    model.eval()
    return model
