"""Core image/feature types and their on-disk formats.

A dataset is a pair of files:

* ``manifest.jsonl`` -- first line is a dataset header (descriptor dimension,
  image count, category taxonomy), then one record per image with its byte
  offset into the descriptor file.
* ``descriptors.bin`` -- little-endian binary. 10-byte header (magic ``LMDE``,
  u16 version, u32 descriptor dimension), then per image a u64 feature count
  followed by that many rows of float32 ``x, y, scale, orientation`` plus the
  descriptor values.

Relevance annotations live in a three-column CSV: ``query_id,object_id,rating``.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, MissingArtifactError, ValidationError

MAGIC = b"LMDE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHI")
_COUNT = struct.Struct("<Q")

RATINGS = ("good", "ok", "bad")

#: Category names used by the synthetic generator; external datasets may
#: declare their own taxonomy in the manifest header.
DEFAULT_TAXONOMY = [
    "Landmark Buildings",
    "Panoramas",
    "Sculptures",
    "Interior Views",
    "Building Details",
    "Paintings",
    "Windows",
    "Landmark Objects",
    "Murals",
    "Cafes / Shops",
    "Artifacts",
    "Other",
    "Multiple Objects",
]


@dataclass
class LocalFeature:
    """One keypoint: frame position, scale, orientation, descriptor vector."""

    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray


@dataclass
class ImageRecord:
    image_id: str
    width: int
    height: int
    features: list[LocalFeature]
    owner_id: str = ""
    title: str = ""
    tags: list[str] = field(default_factory=list)
    category: str | None = None
    source: str = "synthetic"

    def descriptors(self) -> np.ndarray:
        """All descriptors stacked into an (n, D) float32 array."""
        if not self.features:
            return np.zeros((0, 0), dtype=np.float32)
        return np.stack([f.descriptor for f in self.features]).astype(np.float32)

    def positions(self) -> np.ndarray:
        if not self.features:
            return np.zeros((0, 2), dtype=np.float64)
        return np.array([[f.x, f.y] for f in self.features], dtype=np.float64)

    def frame_area(self) -> float:
        return float(self.width) * float(self.height)


@dataclass
class DatasetManifest:
    descriptor_dim: int
    image_ids: list[str]
    taxonomy: list[str] = field(default_factory=lambda: list(DEFAULT_TAXONOMY))
    offsets: dict[str, int] = field(default_factory=dict)

    @property
    def image_count(self) -> int:
        return len(self.image_ids)


@dataclass
class RelevanceAnnotation:
    query_id: str
    object_id: str
    rating: str

    def __post_init__(self):
        if self.rating not in RATINGS:
            raise ValidationError(
                f"rating must be one of {RATINGS}, got {self.rating!r} "
                f"for ({self.query_id}, {self.object_id})"
            )


def validate_record(record: ImageRecord, descriptor_dim: int) -> None:
    if record.width <= 0 or record.height <= 0:
        raise ValidationError(f"image {record.image_id}: non-positive frame size")
    for f in record.features:
        if f.descriptor.shape != (descriptor_dim,):
            raise ValidationError(
                f"image {record.image_id}: descriptor has shape "
                f"{f.descriptor.shape}, expected ({descriptor_dim},)"
            )
        if not (0.0 <= f.x <= record.width and 0.0 <= f.y <= record.height):
            raise ValidationError(
                f"image {record.image_id}: feature at ({f.x}, {f.y}) lies "
                f"outside the {record.width}x{record.height} frame"
            )


class Dataset:
    """An ordered image collection. Iteration follows manifest order.

    Records may be fully in memory (generator output) or read lazily from a
    descriptor file on first access.
    """

    def __init__(self, manifest: DatasetManifest, records: dict[str, ImageRecord] | None = None,
                 descriptor_path: Path | None = None):
        self.manifest = manifest
        self._records: dict[str, ImageRecord] = records or {}
        self._descriptor_path = descriptor_path
        seen = set()
        for image_id in manifest.image_ids:
            if image_id in seen:
                raise ValidationError(f"duplicate image_id {image_id!r} in manifest")
            seen.add(image_id)

    @classmethod
    def from_records(cls, records: list[ImageRecord], descriptor_dim: int,
                     taxonomy: list[str] | None = None) -> "Dataset":
        manifest = DatasetManifest(
            descriptor_dim=descriptor_dim,
            image_ids=[r.image_id for r in records],
            taxonomy=list(taxonomy) if taxonomy is not None else list(DEFAULT_TAXONOMY),
        )
        for r in records:
            validate_record(r, descriptor_dim)
        return cls(manifest, {r.image_id: r for r in records})

    def __len__(self) -> int:
        return self.manifest.image_count

    def __iter__(self):
        for image_id in self.manifest.image_ids:
            yield self.get(image_id)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.manifest.offsets or image_id in self._records

    @property
    def image_ids(self) -> list[str]:
        return self.manifest.image_ids

    @property
    def descriptor_dim(self) -> int:
        return self.manifest.descriptor_dim

    def get(self, image_id: str) -> ImageRecord:
        record = self._records.get(image_id)
        if record is None:
            record = self._read_record(image_id)
            self._records[image_id] = record
        return record

    def _read_record(self, image_id: str) -> ImageRecord:
        if self._descriptor_path is None:
            raise ValidationError(f"image {image_id!r} not found in dataset")
        meta = self._meta[image_id]
        with open(self._descriptor_path, "rb") as fh:
            fh.seek(meta["offset"])
            features = _read_block(fh, self.manifest.descriptor_dim, meta["offset"],
                                   image_id, meta["n_features"])
        return ImageRecord(
            image_id=image_id,
            width=meta["width"],
            height=meta["height"],
            features=features,
            owner_id=meta.get("owner_id", ""),
            title=meta.get("title", ""),
            tags=list(meta.get("tags", [])),
            category=meta.get("category"),
            source=meta.get("source", "ingested"),
        )


def _read_block(fh, dim: int, offset: int, image_id: str, expected: int) -> list[LocalFeature]:
    raw = fh.read(_COUNT.size)
    if len(raw) < _COUNT.size:
        raise FormatError("descriptor block header truncated", offset=offset)
    (count,) = _COUNT.unpack(raw)
    if count != expected:
        raise ValidationError(
            f"image {image_id}: manifest says {expected} features, "
            f"descriptor block says {count}"
        )
    row = 4 + dim
    payload = fh.read(count * row * 4)
    if len(payload) < count * row * 4:
        raise FormatError(
            f"descriptor record for image {image_id} truncated mid-vector",
            offset=offset + _COUNT.size + len(payload),
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(count, row)
    features = []
    for r in data:
        features.append(LocalFeature(
            x=float(r[0]), y=float(r[1]), scale=float(r[2]),
            orientation=float(r[3]), descriptor=r[4:].astype(np.float32),
        ))
    return features


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write manifest.jsonl + descriptors.bin. Round-trips bit-exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dim = dataset.manifest.descriptor_dim

    records = [dataset.get(i) for i in dataset.image_ids]
    if len(records) != dataset.manifest.image_count:
        raise ValidationError(
            f"manifest lists {dataset.manifest.image_count} images, "
            f"{len(records)} records available"
        )
    for record in records:
        validate_record(record, dim)

    offsets = {}
    with open(directory / "descriptors.bin", "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim))
        for record in records:
            offsets[record.image_id] = fh.tell()
            fh.write(_COUNT.pack(len(record.features)))
            if record.features:
                rows = np.empty((len(record.features), 4 + dim), dtype="<f4")
                for i, f in enumerate(record.features):
                    rows[i, 0] = f.x
                    rows[i, 1] = f.y
                    rows[i, 2] = f.scale
                    rows[i, 3] = f.orientation
                    rows[i, 4:] = f.descriptor
                fh.write(rows.tobytes())

    with open(directory / "manifest.jsonl", "w", encoding="utf-8") as fh:
        header = {
            "kind": "dataset",
            "descriptor_dim": dim,
            "image_count": len(records),
            "taxonomy": dataset.manifest.taxonomy,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            line = {
                "kind": "image",
                "image_id": record.image_id,
                "width": record.width,
                "height": record.height,
                "n_features": len(record.features),
                "owner_id": record.owner_id,
                "title": record.title,
                "tags": record.tags,
                "category": record.category,
                "source": record.source,
                "offset": offsets[record.image_id],
            }
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def load_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / "manifest.jsonl"
    descriptor_path = directory / "descriptors.bin"
    if not manifest_path.exists() or not descriptor_path.exists():
        raise MissingArtifactError(
            f"no dataset at {directory} (expected manifest.jsonl and descriptors.bin); "
            "run the generate or ingest stage first",
            stage="generate",
        )

    with open(descriptor_path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError("descriptor file shorter than its header", offset=0)
        magic, version, dim = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported descriptor format version {version}", offset=4)

    image_ids: list[str] = []
    meta: dict[str, dict] = {}
    header = None
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"manifest line {lineno + 1} is not JSON: {exc}") from exc
            if obj.get("kind") == "dataset":
                header = obj
            elif obj.get("kind") == "image":
                image_ids.append(obj["image_id"])
                meta[obj["image_id"]] = obj
            else:
                raise FormatError(f"manifest line {lineno + 1} has unknown kind {obj.get('kind')!r}")
    if header is None:
        raise FormatError("manifest has no dataset header line")
    if header["descriptor_dim"] != dim:
        raise ValidationError(
            f"manifest descriptor_dim {header['descriptor_dim']} != "
            f"descriptor file dimension {dim}"
        )
    if header["image_count"] != len(image_ids):
        raise ValidationError(
            f"manifest header says {header['image_count']} images, found {len(image_ids)}"
        )

    manifest = DatasetManifest(
        descriptor_dim=dim,
        image_ids=image_ids,
        taxonomy=list(header.get("taxonomy", DEFAULT_TAXONOMY)),
        offsets={i: meta[i]["offset"] for i in image_ids},
    )
    dataset = Dataset(manifest, records=None, descriptor_path=descriptor_path)
    dataset._meta = meta
    return dataset


def save_annotations(annotations: list[RelevanceAnnotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "object_id", "rating"])
        for a in annotations:
            writer.writerow([a.query_id, a.object_id, a.rating])


def load_annotations(path: str | Path) -> dict[tuple[str, str], str]:
    """Read annotations keyed by (query_id, object_id); duplicates are an error."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"no annotations file at {path}; run the generate stage first",
            stage="generate",
        )
    out: dict[tuple[str, str], str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["query_id", "object_id", "rating"]:
            raise FormatError(f"unexpected annotations header {header!r}")
        for row in reader:
            if len(row) != 3:
                raise FormatError(f"annotation row has {len(row)} columns: {row!r}")
            ann = RelevanceAnnotation(*row)
            key = (ann.query_id, ann.object_id)
            if key in out:
                raise ValidationError(f"duplicate annotation for {key}")
            out[key] = ann.rating
    return out


def annotations_to_csv_bytes(annotations: list[RelevanceAnnotation]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["query_id", "object_id", "rating"])
    for a in annotations:
        writer.writerow([a.query_id, a.object_id, a.rating])
    return buf.getvalue().encode("utf-8")
