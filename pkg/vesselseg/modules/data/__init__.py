"""
Data Module - Black Box Interface

Purpose: Image I/O, patch extraction, filtering, augmentation and splits
Interface: read_pgm(), write_pgm(), read_ppm(), to_grayscale(), extract_patch_grid(),
           filter_by_label_area(), augment(), normalize(), split_train_val(),
           split_by_source(), prepare_patches(), load_patch_cache()
Hidden: PNM header parsing, cache naming, draw order of augmentations
"""

from .augment import AugmentDraw, AugmentPolicy, apply_augmentation, augment, draw_augmentation
from .manifest import (
    ManifestEntry,
    cache_stem,
    load_image,
    load_mask,
    load_patch_cache,
    prepare_patches,
    read_manifest,
    write_manifest,
)
from .patches import (
    Domain,
    PatchRecord,
    extract_patch_grid,
    filter_by_label_area,
    normalize,
    split_by_source,
    split_train_val,
    to_grayscale,
)
from .pgm import (
    PnmImage,
    decode_pnm,
    encode_pnm,
    quantize_unit,
    read_pgm,
    read_pnm,
    read_ppm,
    write_pgm,
    write_ppm,
)

__all__ = [
    "AugmentDraw",
    "AugmentPolicy",
    "Domain",
    "ManifestEntry",
    "PatchRecord",
    "PnmImage",
    "apply_augmentation",
    "augment",
    "cache_stem",
    "decode_pnm",
    "draw_augmentation",
    "encode_pnm",
    "extract_patch_grid",
    "filter_by_label_area",
    "load_image",
    "load_mask",
    "load_patch_cache",
    "normalize",
    "prepare_patches",
    "quantize_unit",
    "read_manifest",
    "read_pgm",
    "read_pnm",
    "read_ppm",
    "split_by_source",
    "split_train_val",
    "to_grayscale",
    "write_manifest",
    "write_pgm",
    "write_ppm",
]
