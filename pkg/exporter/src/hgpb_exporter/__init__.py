"""Export prompt-conditioned backbone features and gradients to HGPB."""

from .backbones import BackboneError, PromptedViT, load_backbone
from .data import DatasetError, list_samples, load_images
from .export import ExportJob, export, load_prompt
from .writer import write_bundle_f32

__version__ = "0.1.0"
