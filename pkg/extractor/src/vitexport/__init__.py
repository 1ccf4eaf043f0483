"""ViT activation export in the seedloc exchange formats."""

from .export import ExtractionJob, extract, list_images
from .model import MODELS, ViTConfig, build_model

__version__ = "0.1.0"
