"""Append-only registry of immutable image resources.

Every tool call produces a new resource; nothing already registered is ever
touched again. Ids are ``"original"`` followed by ``img_001``, ``img_002``...
"""

from __future__ import annotations

import hashlib
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from PIL import Image

ORIGINAL_ID = "original"
_ID_RE = re.compile(r"^img_(\d{3,})$")


class RegistryError(Exception):
    pass


class InvalidRasterError(RegistryError):
    pass


class UnknownResourceError(RegistryError, KeyError):
    def __init__(self, resource_id: str):
        super().__init__(resource_id)
        self.resource_id = resource_id

    def __str__(self) -> str:
        return f"unknown resource id: {self.resource_id!r}"


class Raster:
    """Read-only RGB image, stored as an (height, width, 3) uint8 array.

    Origin is top-left; x grows rightward, y downward.
    """

    __slots__ = ("_px",)

    def __init__(self, pixels: Any):
        src = np.asarray(pixels)
        if src.dtype != np.uint8 and src.size and (src.min() < 0 or src.max() > 255):
            raise InvalidRasterError("channel values must lie in [0, 255]")
        arr = np.array(src, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidRasterError(f"expected (h, w, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InvalidRasterError(f"zero-dimension raster {arr.shape[1]}x{arr.shape[0]}")
        arr.flags.writeable = False
        self._px = arr

    @classmethod
    def solid(cls, width: int, height: int, rgb: tuple[int, int, int]) -> Raster:
        if width <= 0 or height <= 0:
            raise InvalidRasterError(f"zero-dimension raster {width}x{height}")
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = rgb
        return cls(arr)

    @classmethod
    def from_png(cls, data: bytes) -> Raster:
        with Image.open(io.BytesIO(data)) as im:
            return cls(np.asarray(im.convert("RGB")))

    @classmethod
    def open(cls, path: str | Path) -> Raster:
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB")))

    @property
    def pixels(self) -> np.ndarray:
        return self._px

    @property
    def width(self) -> int:
        return self._px.shape[1]

    @property
    def height(self) -> int:
        return self._px.shape[0]

    def pixel(self, x: int, y: int) -> tuple[int, int, int]:
        r, g, b = self._px[y, x]
        return int(r), int(g), int(b)

    def copy_array(self) -> np.ndarray:
        """Writable copy of the pixel data, for building a derived raster."""
        return self._px.copy()

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.width.to_bytes(4, "big"))
        h.update(self.height.to_bytes(4, "big"))
        h.update(self._px.tobytes())
        return h.hexdigest()

    def to_png(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self._px, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self._px.shape == other._px.shape and bool(np.array_equal(self._px, other._px))

    def __hash__(self) -> int:
        return hash(self.content_hash())

    def __repr__(self) -> str:
        return f"Raster({self.width}x{self.height})"


def canonical_args(arguments: dict[str, Any] | None) -> str:
    return json.dumps(arguments or {}, sort_keys=True, separators=(",", ":"))


def format_id(index: int) -> str:
    # past 999 the suffix simply grows: img_1000
    return f"img_{index:03d}"


def is_valid_id(value: str) -> bool:
    return value == ORIGINAL_ID or _ID_RE.match(value) is not None


@dataclass(frozen=True)
class Provenance:
    tool_name: str = ""
    arguments: str = "{}"
    source_ids: tuple[str, ...] = ()
    creation_index: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool_name": self.tool_name,
            "arguments": json.loads(self.arguments),
            "source_ids": list(self.source_ids),
            "creation_index": self.creation_index,
        }


@dataclass(frozen=True)
class ImageResource:
    id: str
    raster: Raster
    provenance: Provenance
    content_hash: str = field(default="", compare=False)


class Registry:
    """Per-sample store of image resources. Append-only."""

    def __init__(self, original: Raster):
        if not isinstance(original, Raster):
            original = Raster(original)
        self._entries: dict[str, ImageResource] = {}
        self._next_index = 1
        self._entries[ORIGINAL_ID] = ImageResource(
            ORIGINAL_ID, original, Provenance(), original.content_hash()
        )

    @property
    def next_id(self) -> str:
        return format_id(self._next_index)

    def allocate(
        self,
        raster: Raster,
        tool_name: str,
        arguments: dict[str, Any] | None = None,
        source_ids: Iterable[str] = (),
    ) -> str:
        sources = tuple(source_ids)
        for sid in sources:
            if sid not in self._entries:
                raise UnknownResourceError(sid)
        if not isinstance(raster, Raster):
            raster = Raster(raster)
        new_id = format_id(self._next_index)
        prov = Provenance(tool_name, canonical_args(arguments), sources, self._next_index)
        self._entries[new_id] = ImageResource(new_id, raster, prov, raster.content_hash())
        self._next_index += 1
        return new_id

    def get(self, resource_id: str) -> ImageResource:
        try:
            return self._entries[resource_id]
        except (KeyError, TypeError):
            raise UnknownResourceError(resource_id) from None

    def __contains__(self, resource_id: object) -> bool:
        return resource_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def list_ids(self) -> list[str]:
        return list(self._entries)

    def content_hashes(self) -> dict[str, str]:
        return {rid: res.content_hash for rid, res in self._entries.items()}

    def manifest(self) -> list[dict[str, Any]]:
        return [
            {
                "id": res.id,
                "provenance": res.provenance.to_dict(),
                "width": res.raster.width,
                "height": res.raster.height,
                "content_hash": res.content_hash,
            }
            for res in self._entries.values()
        ]

    def archive(self, sample_dir: str | Path) -> Path:
        """Write every resource as PNG plus ``registry.json`` into *sample_dir*."""
        out = Path(sample_dir)
        out.mkdir(parents=True, exist_ok=True)
        for res in self._entries.values():
            (out / f"{res.id}.png").write_bytes(res.raster.to_png())
        path = out / "registry.json"
        path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return path
