"""
Versioned checkpoint container.

A checkpoint is a torch.save() dictionary with only tensors and plain Python
values (loadable with weights_only=True):

    {
        "format_version": 1,
        "embedding_dim": 64,
        "class_count": 30,
        "backbone": {...BackboneSpec fields...},
        "head_kind": "linear" | "cosine" | "none",
        "parameters": {name: tensor, ...},      # extractor state_dict, prefixed "extractor."
                                                 # head state_dict, prefixed "head."
        "shapes": {name: [dims...]},
        "dtype": "float32",
        "metadata": {"epochs": ..., "seed": ..., "config_hash": ..., ...}
    }

Readers refuse other format versions. Files with the same format_version stay
loadable across releases.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional

import torch
import torch.nn as nn

from transmatch_lab.core.errors import CheckpointError
from transmatch_lab.core.networks import CosineHead, FeatureExtractor, LinearHead
from transmatch_lab.models.config import BackboneSpec

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """
    Named parameter blobs plus the metadata needed to rebuild the network.

    Attributes:
        embedding_dim: d
        class_count: Classes of the head saved alongside (0 if none)
        backbone: BackboneSpec used to build the extractor
        head_kind: "linear", "cosine" or "none"
        parameters: Flat name -> tensor mapping
        metadata: epochs, seed, config_hash and any training summary
    """
    embedding_dim: int
    class_count: int
    backbone: BackboneSpec
    head_kind: str
    parameters: Dict[str, torch.Tensor]
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def capture(
        cls,
        extractor: FeatureExtractor,
        head: Optional[nn.Module] = None,
        metadata: Optional[dict] = None
    ) -> "Checkpoint":
        """Snapshot an extractor (and optional head) into a checkpoint."""
        parameters = {
            f"extractor.{k}": v.detach().clone() for k, v in extractor.state_dict().items()
        }
        head_kind, class_count = "none", 0
        if head is not None:
            parameters.update({f"head.{k}": v.detach().clone()
                               for k, v in head.state_dict().items()})
            if isinstance(head, CosineHead):
                head_kind, class_count = "cosine", head.way
            else:
                head_kind, class_count = "linear", head.fc.out_features

        return cls(
            embedding_dim=extractor.embedding_dim,
            class_count=class_count,
            backbone=extractor.spec,
            head_kind=head_kind,
            parameters=parameters,
            metadata=dict(metadata or {}),
        )

    @property
    def config_hash(self) -> str:
        return str(self.metadata.get("config_hash", ""))

    def build_extractor(self) -> FeatureExtractor:
        """Rebuild the feature extractor with the saved weights."""
        extractor = FeatureExtractor(self.backbone)
        state = {k[len("extractor."):]: v for k, v in self.parameters.items()
                 if k.startswith("extractor.")}
        extractor.load_state_dict(state)
        dtype = next(iter(state.values())).dtype
        return extractor.to(dtype)

    def build_head(self) -> Optional[nn.Module]:
        """Rebuild the saved head, if any."""
        state = {k[len("head."):]: v for k, v in self.parameters.items()
                 if k.startswith("head.")}
        if self.head_kind == "cosine":
            head = CosineHead(state["weight"])
        elif self.head_kind == "linear":
            head = LinearHead(self.embedding_dim, self.class_count)
        else:
            return None
        head.load_state_dict(state)
        return head

    def to_payload(self) -> dict:
        return {
            "format_version": self.format_version,
            "embedding_dim": self.embedding_dim,
            "class_count": self.class_count,
            "backbone": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in asdict(self.backbone).items()},
            "head_kind": self.head_kind,
            "parameters": self.parameters,
            "shapes": {k: list(v.shape) for k, v in self.parameters.items()},
            "dtype": str(next(iter(self.parameters.values())).dtype).replace("torch.", ""),
            "metadata": self.metadata,
        }

    def save(self, path: Path) -> Path:
        """Write the checkpoint atomically (temp file, then rename)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(self.to_payload(), tmp)
        tmp.replace(path)
        logger.info(f"Saved checkpoint to {path} ({len(self.parameters)} tensors)")
        return path

    @classmethod
    def load(cls, path: Path) -> "Checkpoint":
        """
        Read a checkpoint written by save().

        Raises:
            CheckpointError: If the file is missing, unreadable or of another format version
        """
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"Checkpoint not found: {path}")

        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as e:
            raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"Checkpoint {path} has format_version {version}, expected {FORMAT_VERSION}"
            )

        backbone = payload["backbone"]
        backbone["widths"] = tuple(backbone["widths"])
        for name, shape in payload["shapes"].items():
            if list(payload["parameters"][name].shape) != list(shape):
                raise CheckpointError(f"Checkpoint {path}: shape mismatch for '{name}'")

        return cls(
            embedding_dim=payload["embedding_dim"],
            class_count=payload["class_count"],
            backbone=BackboneSpec(**backbone),
            head_kind=payload["head_kind"],
            parameters=payload["parameters"],
            metadata=payload["metadata"],
            format_version=version,
        )
