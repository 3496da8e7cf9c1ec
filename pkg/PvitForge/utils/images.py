import hashlib
import io
from typing import List, Sequence, Tuple

from PIL import Image, UnidentifiedImageError

from PvitForge.pipeline.types import BBox
from PvitForge.utils.exceptions import ImageDecode


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def decode(data: bytes, name: str = "image") -> Image.Image:
    try:
        image = Image.open(io.BytesIO(data))
        image.load()
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise ImageDecode(f"{name}: {e}")
    return image.convert("RGB")


def encode_png(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def pixel_hash(image: Image.Image) -> str:
    image = image.convert("RGB")
    head = f"{image.width}x{image.height}:".encode("ascii")
    return hashlib.sha256(head + image.tobytes()).hexdigest()


def expand_box(box: BBox, margin_frac: float, width: int, height: int) -> BBox:
    """Grow a box by margin_frac of its own size on every side, then clamp."""
    dx = int(round(box.w * margin_frac))
    dy = int(round(box.h * margin_frac))
    grown = BBox(box.x - dx, box.y - dy, box.w + 2 * dx, box.h + 2 * dy)
    return grown.clamp(width, height)


def crop(image: Image.Image, box: BBox) -> Image.Image:
    return image.crop((box.x, box.y, box.x2, box.y2))


def changeImageSize(maxHeight: int, image: Image.Image) -> Image.Image:
    heightRatio = maxHeight / image.size[1]
    newWidth = max(int(round(heightRatio * image.size[0])), 1)
    if (newWidth, maxHeight) == image.size:
        return image.copy()
    return image.resize((newWidth, maxHeight), Image.LANCZOS)


def concat_horizontal(images: Sequence[Image.Image]) -> Tuple[Image.Image, List[BBox]]:
    """Resize every image to the smallest height and lay them out left to right."""
    height = min(im.height for im in images)
    resized = [changeImageSize(height, im) for im in images]
    width = sum(im.width for im in resized)
    canvas = Image.new("RGB", (width, height))
    boxes = []
    x = 0
    for im in resized:
        canvas.paste(im, (x, 0))
        boxes.append(BBox(x, 0, im.width, height))
        x += im.width
    return canvas, boxes


def side_by_side(images: Sequence[Image.Image], height: int = 256, gap: int = 8) -> Image.Image:
    resized = [changeImageSize(height, im) for im in images]
    width = sum(im.width for im in resized) + gap * (len(resized) - 1)
    sheet = Image.new("RGB", (max(width, 1), height), (255, 255, 255))
    x = 0
    for im in resized:
        sheet.paste(im, (x, 0))
        x += im.width + gap
    return sheet
