"""
Directory-of-class-folders dataset.

Layout:

    root/
        manifest.json
        dog/  001.png 002.png ...
        cat/  ...

manifest.json lists the classes (the order defines class ids) and, optionally,
split membership by class name:

    {
        "classes": ["dog", "cat", ...],
        "splits": {"base": [...], "validation": [...], "novel": [...]}
    }

Images are read with Pillow, converted to RGB (or L for one channel), resized
to image_size x image_size and scaled to [0, 1].
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from transmatch_lab.core.data_source import DatasetSource
from transmatch_lab.core.errors import DatasetError
from transmatch_lab.models.config import DatasetSpec
from transmatch_lab.models.episode import ClassSplit, ImageDataset

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


class ClassFolderSource(DatasetSource):
    """
    Load every image under root/<class>/ for the classes named in manifest.json.

    Args:
        spec: DatasetSpec with kind "folder"; path, image_size and channels are used

    Raises:
        DatasetError: On a missing root, a missing or malformed manifest, an
                      empty class folder or an unreadable image
    """

    def __init__(self, spec: DatasetSpec):
        if spec.kind != "folder":
            raise DatasetError(f"ClassFolderSource needs kind 'folder', got '{spec.kind}'")
        self.spec = spec
        self.root = Path(spec.path)
        self._manifest: Optional[dict] = None

    @property
    def cache_key(self) -> str:
        name = self.root.resolve().name or "root"
        return f"folder_{name}_s{self.spec.image_size}_ch{self.spec.channels}"

    @property
    def manifest(self) -> dict:
        if self._manifest is None:
            self._manifest = self._read_manifest()
        return self._manifest

    @property
    def class_names(self) -> List[str]:
        return list(self.manifest["classes"])

    def load(self) -> ImageDataset:
        images, labels = [], []
        for class_id, name in enumerate(self.class_names):
            folder = self.root / name
            if not folder.is_dir():
                raise DatasetError(f"Class folder missing: {folder}")

            files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
            if not files:
                raise DatasetError(f"Class folder {folder} contains no images")

            for path in files:
                images.append(self._read_image(path))
                labels.append(class_id)

        logger.info(f"Loaded {len(images)} images in {len(self.class_names)} classes "
                    f"from {self.root}")
        return ImageDataset(
            images=np.stack(images),
            labels=np.array(labels, dtype=np.int64),
            class_names=self.class_names,
        )

    def predefined_split(self) -> Optional[ClassSplit]:
        splits = self.manifest.get("splits")
        if not splits:
            return None

        index = {name: i for i, name in enumerate(self.class_names)}

        def ids(role: str) -> frozenset:
            names = splits.get(role, [])
            unknown = sorted(set(names) - set(index))
            if unknown:
                raise DatasetError(f"manifest split '{role}' names unknown classes {unknown}")
            return frozenset(index[n] for n in names)

        split = ClassSplit(ids("base"), ids("validation"), ids("novel"))
        if split.all_classes != frozenset(range(len(index))):
            raise DatasetError("manifest splits must cover every class exactly once")
        return split

    def _read_manifest(self) -> dict:
        if not self.root.is_dir():
            raise DatasetError(f"Dataset directory not found: {self.root}")

        path = self.root / MANIFEST
        if not path.exists():
            raise DatasetError(f"Manifest not found: {path}")

        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise DatasetError(f"Manifest {path} is not valid JSON: {e}") from e

        classes = manifest.get("classes") if isinstance(manifest, dict) else None
        if not classes or not all(isinstance(c, str) for c in classes):
            raise DatasetError(f"Manifest {path} needs a non-empty 'classes' list of names")
        if len(set(classes)) != len(classes):
            raise DatasetError(f"Manifest {path} lists a class twice")
        return manifest

    def _read_image(self, path: Path) -> np.ndarray:
        mode = "L" if self.spec.channels == 1 else "RGB"
        size = self.spec.image_size
        try:
            with Image.open(path) as img:
                img = img.convert(mode).resize((size, size), Image.BILINEAR)
                array = np.asarray(img, dtype=np.float32) / 255.0
        except (OSError, UnidentifiedImageError) as e:
            raise DatasetError(f"Cannot read image {path}: {e}") from e

        if array.ndim == 2:
            array = array[None]
        else:
            array = array.transpose(2, 0, 1)

        if array.shape[0] != self.spec.channels:
            raise DatasetError(f"{path}: expected {self.spec.channels} channels, "
                               f"got {array.shape[0]}")
        return array
