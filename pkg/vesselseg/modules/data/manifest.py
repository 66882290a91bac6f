"""
Dataset manifests and the on-disk patch cache.

Manifest: CSV with header ``image_path,mask_path,domain,source_id``; relative
paths resolve against the manifest's directory. Images may be P5 grayscale
or P6 colour (converted to luminance). Masks are P5; any nonzero sample is
foreground.

Patch cache: ``<source>_<row>_<col>.img.pgm`` (16-bit) next to
``<source>_<row>_<col>.mask.pgm`` (8-bit, 0/255).
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np

from ...errors import FormatError
from .patches import Domain, PatchRecord, extract_patch_grid, filter_by_label_area, to_grayscale
from .pgm import quantize_unit, read_pgm, read_pnm, write_pgm

logger = logging.getLogger("vesselseg.data")

MANIFEST_COLUMNS = ("image_path", "mask_path", "domain", "source_id")
IMAGE_SUFFIX = ".img.pgm"
MASK_SUFFIX = ".mask.pgm"


@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    mask_path: Path
    domain: Domain
    source_id: str


def read_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    """Parse a dataset manifest."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise FormatError(f"manifest {path} lacks columns {missing}", record="header")
        entries = []
        for line_no, row in enumerate(reader, start=2):
            try:
                domain = Domain(row["domain"].strip())
            except ValueError as e:
                raise FormatError(
                    f"unknown domain {row['domain']!r} on line {line_no}", record=row["source_id"]
                ) from e
            entries.append(
                ManifestEntry(
                    image_path=(path.parent / row["image_path"].strip()),
                    mask_path=(path.parent / row["mask_path"].strip()),
                    domain=domain,
                    source_id=row["source_id"].strip(),
                )
            )
    return entries


def write_manifest(entries: Iterable[ManifestEntry], path: Union[str, Path]) -> Path:
    """Write entries with paths relative to the manifest's directory where possible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow(
                [
                    _relative(e.image_path, path.parent),
                    _relative(e.mask_path, path.parent),
                    e.domain.value,
                    e.source_id,
                ]
            )
    return path


def _relative(target: Path, base: Path) -> str:
    try:
        return str(Path(target).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(target)


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Load a P5 or P6 image as a float32 [0, 1] grayscale array."""
    image = read_pnm(path)
    if image.channels == 3:
        if image.maxval != 255:
            raise FormatError(f"{path}: colour images must be 8-bit", offset=0)
        return to_grayscale(image.pixels)
    return image.to_unit()


def load_mask(path: Union[str, Path]) -> np.ndarray:
    return (read_pgm(path) > 0).astype(np.uint8)


def prepare_patches(
    manifest: Union[str, Path],
    grid_n: int,
    patch: int = 224,
    min_label: float = 0.05,
    out_dir: Union[str, Path] = "patches",
    centered: bool = True,
) -> List[PatchRecord]:
    """
    Cut every manifest image into a patch grid, drop sparsely labelled patches
    and write the survivors to the patch cache.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kept: List[PatchRecord] = []
    for entry in read_manifest(manifest):
        image = load_image(entry.image_path)
        mask = load_mask(entry.mask_path)
        records = extract_patch_grid(
            image, mask, grid_n, patch, centered=centered, source_id=entry.source_id, domain=entry.domain
        )
        survivors = filter_by_label_area(records, min_label)
        logger.info(
            "%s: kept %d of %d patches above %.1f%% labelled area",
            entry.source_id, len(survivors), len(records), 100 * min_label,
        )
        for r in survivors:
            stem = cache_stem(r)
            write_pgm(quantize_unit(r.image, bits=16), out_dir / f"{stem}{IMAGE_SUFFIX}")
            write_pgm((r.mask * 255).astype(np.uint8), out_dir / f"{stem}{MASK_SUFFIX}")
        kept.extend(survivors)
    return kept


def cache_stem(record: PatchRecord) -> str:
    row, col = record.grid_pos
    return f"{record.source_id}_{row}_{col}"


def _parse_stem(stem: str) -> Tuple[str, int, int]:
    try:
        source, row, col = stem.rsplit("_", 2)
        return source, int(row), int(col)
    except ValueError as e:
        raise FormatError(f"patch cache name {stem!r} is not <source>_<row>_<col>", record=stem) from e


def load_patch_cache(
    directory: Union[str, Path], domain: Domain = Domain.SOURCE
) -> List[PatchRecord]:
    """Read a patch cache back, ordered by (source, row, col)."""
    directory = Path(directory)
    found = []
    for image_path in directory.glob(f"*{IMAGE_SUFFIX}"):
        stem = image_path.name[: -len(IMAGE_SUFFIX)]
        source, row, col = _parse_stem(stem)
        mask_path = directory / f"{stem}{MASK_SUFFIX}"
        if not mask_path.exists():
            raise FormatError(f"patch {stem} has no mask file", record=stem)
        found.append((source, row, col, image_path, mask_path))

    records = []
    for source, row, col, image_path, mask_path in sorted(found, key=lambda t: t[:3]):
        records.append(
            PatchRecord(
                image=load_image(image_path),
                mask=load_mask(mask_path),
                source_id=source,
                grid_pos=(row, col),
                domain=Domain(domain),
            )
        )
    logger.debug("loaded %d cached patches from %s", len(records), directory)
    return records
