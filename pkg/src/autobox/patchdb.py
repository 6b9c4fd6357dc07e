"""On-disk patch database.

Layout: <root>/patches/<category>/<patch-id>.png stored as RGBA where the
alpha channel encodes the binary mask (255 = foreground, 0 = background),
plus an append-only <root>/index.jsonl with one record per patch.  The index
is the source of truth for enumeration; readers may run concurrently, writes
go through a single writer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyPatchDb, IoFailure, ParseError

INDEX_NAME = "index.jsonl"


@dataclass
class Patch:
    pixels: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) bool
    label: str
    source_image: str

    def __post_init__(self):
        if self.pixels.shape[:2] != self.mask.shape:
            raise ValueError(
                f"mask {self.mask.shape} does not match pixels {self.pixels.shape[:2]}"
            )


@dataclass
class IndexRecord:
    patch_id: str
    category: str
    source_image: str
    width: int
    height: int


class PatchDb:
    def __init__(self, root):
        self.root = Path(root)
        self.patches_dir = self.root / "patches"
        self.index_path = self.root / INDEX_NAME
        self._records: list[IndexRecord] = []
        self._by_id: dict[str, IndexRecord] = {}
        if self.index_path.exists():
            self._load_index()

    def _load_index(self) -> None:
        with open(self.index_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    record = IndexRecord(
                        patch_id=rec["patch_id"],
                        category=rec["category"],
                        source_image=rec["source_image"],
                        width=int(rec["width"]),
                        height=int(rec["height"]),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"{self.index_path}:{lineno}: bad index record") from exc
                self._append_record(record)

    def _append_record(self, record: IndexRecord) -> None:
        if record.patch_id in self._by_id:
            raise ParseError(f"duplicate patch id {record.patch_id!r} in index")
        self._records.append(record)
        self._by_id[record.patch_id] = record

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, patch_id: str) -> bool:
        return patch_id in self._by_id

    @property
    def records(self) -> list[IndexRecord]:
        return list(self._records)

    def categories(self) -> list[str]:
        return sorted({r.category for r in self._records})

    def _patch_path(self, record: IndexRecord) -> Path:
        return self.patches_dir / record.category / f"{record.patch_id}.png"

    def add(self, patch: Patch, patch_id: str) -> str:
        """Store a patch; re-adding an existing id is a no-op."""
        if not patch.mask.any():
            raise ValueError("refusing to store a patch with an empty mask")
        if patch_id in self._by_id:
            return patch_id
        h, w = patch.pixels.shape[:2]
        record = IndexRecord(
            patch_id=patch_id,
            category=patch.label,
            source_image=patch.source_image,
            width=w,
            height=h,
        )
        path = self._patch_path(record)
        path.parent.mkdir(parents=True, exist_ok=True)
        rgba = np.dstack([patch.pixels, np.where(patch.mask, 255, 0).astype(np.uint8)])
        try:
            Image.fromarray(rgba, mode="RGBA").save(path)
            self.root.mkdir(parents=True, exist_ok=True)
            with open(self.index_path, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "patch_id": record.patch_id,
                            "category": record.category,
                            "source_image": record.source_image,
                            "width": record.width,
                            "height": record.height,
                        }
                    )
                    + "\n"
                )
        except OSError as exc:
            raise IoFailure(f"cannot store patch {patch_id}: {exc}") from exc
        self._append_record(record)
        return patch_id

    def get(self, patch_id: str) -> Patch:
        record = self._by_id.get(patch_id)
        if record is None:
            raise KeyError(patch_id)
        return self._load_patch(record)

    def _load_patch(self, record: IndexRecord) -> Patch:
        path = self._patch_path(record)
        try:
            with Image.open(path) as im:
                rgba = np.asarray(im.convert("RGBA"), dtype=np.uint8)
        except OSError as exc:
            raise IoFailure(f"cannot read patch {path}: {exc}") from exc
        return Patch(
            pixels=rgba[:, :, :3].copy(),
            mask=rgba[:, :, 3] > 127,
            label=record.category,
            source_image=record.source_image,
        )

    def sample(self, rng: np.random.Generator) -> Patch:
        """Draw a patch uniformly, in index order, from the given generator."""
        if not self._records:
            raise EmptyPatchDb(f"no patches under {self.root}")
        record = self._records[int(rng.integers(len(self._records)))]
        return self._load_patch(record)
