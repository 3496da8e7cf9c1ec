import os
from pathlib import Path
from typing import Optional

from PIL import Image

from PvitForge.logging import LOGGER
from PvitForge.pipeline.types import ImageRef
from PvitForge.utils.exceptions import ImageDecode, PreconditionError
from PvitForge.utils.images import content_hash, decode, encode_png


class AssetStore:
    """Resolves ImageRefs against the run output dir first, then the corpus dir."""

    def __init__(self, output_dir, corpus_dir=None):
        self.output_dir = Path(output_dir)
        self.corpus_dir = Path(corpus_dir) if corpus_dir else None

    def resolve(self, rel_path: str) -> Path:
        out = self.output_dir / rel_path
        if out.exists() or self.corpus_dir is None:
            return out
        return self.corpus_dir / rel_path

    def read_bytes(self, ref: ImageRef) -> bytes:
        path = self.resolve(ref.path)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise PreconditionError(f"image not readable: {ref.path}")

    def open(self, ref: ImageRef) -> Image.Image:
        return decode(self.read_bytes(ref), ref.path)

    def verify(self, ref: ImageRef) -> bool:
        try:
            return content_hash(self.read_bytes(ref)) == ref.content_hash
        except PreconditionError:
            return False

    def ref_for(self, rel_path: str, root: Optional[Path] = None) -> ImageRef:
        path = (root / rel_path) if root else self.resolve(rel_path)
        data = path.read_bytes()
        image = decode(data, rel_path)
        return ImageRef(rel_path, content_hash(data), image.width, image.height)

    def write_bytes(self, rel_path: str, data: bytes) -> ImageRef:
        image = decode(data, rel_path)
        path = self.output_dir / rel_path
        path.parent.mkdir(parents=True, exist_ok=True)
        digest = content_hash(data)
        if not path.exists() or content_hash(path.read_bytes()) != digest:
            tmp = path.with_suffix(path.suffix + ".part")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return ImageRef(rel_path, digest, image.width, image.height)

    def write_image(self, rel_path: str, image: Image.Image) -> ImageRef:
        if image.width < 1 or image.height < 1:
            raise ImageDecode(f"{rel_path}: empty image")
        return self.write_bytes(rel_path, encode_png(image.convert("RGB")))

    def corpus_scenes(self):
        """Scene images of the corpus, sorted by path."""
        if self.corpus_dir is None:
            return []
        found = []
        for path in sorted(self.corpus_dir.rglob("*")):
            if path.suffix.lower() in (".png", ".jpg", ".jpeg") and path.is_file():
                rel = path.relative_to(self.corpus_dir).as_posix()
                try:
                    found.append(self.ref_for(rel, root=self.corpus_dir))
                except ImageDecode as e:
                    LOGGER(__name__).warning(f"Skipping undecodable scene {rel}: {e}")
        return found
