"""Deterministic stand-ins for every backend capability.

Scene images of the fixture corpus paint each person as a solid rectangle
in one palette colour with a skin-coloured face block on top; detections
come from a JSON annotation sidecar next to the image. Descriptions are
derived from the palette colours found in the pixels, so every answer is a
pure function of (request, seed).
"""

import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image, ImageDraw, ImageOps

from PvitForge.pipeline.types import ImageRef
from PvitForge.utils.exceptions import (
    BackendUnreachable,
    ImageDecode,
    QuotaExceeded,
)
from PvitForge.utils.images import encode_png
from PvitForge.utils.seeds import derive_seed

from .base import b64

SKIN = (250, 220, 190)
BACKGROUND = (235, 235, 235)

# The fixture judge reads past apologies; only these count as refusing.
JUDGE_CUES = ("do not know who", "don't know who", "cannot see", "can't see", "not able to identify")


@dataclass(frozen=True)
class Swatch:
    rgb: tuple
    figure: str
    noun: str
    color: str
    garment: str

    @property
    def attire(self) -> str:
        article = "an" if self.color[0] in "aeiou" else "a"
        return f"{article} {self.color} {self.garment}"

    @property
    def keywords(self) -> set:
        return set(self.noun.split()) | {self.color, self.garment}


PALETTE = (
    Swatch((200, 30, 30), "a man", "man", "red", "jacket"),
    Swatch((30, 60, 200), "a girl", "girl", "blue", "dress"),
    Swatch((30, 160, 60), "a woman", "woman", "green", "coat"),
    Swatch((230, 200, 20), "a boy", "boy", "yellow", "shirt"),
    Swatch((140, 40, 160), "an old man", "old man", "purple", "sweater"),
    Swatch((240, 120, 20), "a young woman", "young woman", "orange", "scarf"),
)


def swatches_in(image: Image.Image, min_fraction: float = 0.02) -> List[Swatch]:
    """Palette colours covering at least min_fraction of the image, left to right."""
    arr = np.asarray(image.convert("RGB"), dtype=np.int16)
    area = arr.shape[0] * arr.shape[1]
    found = []
    for swatch in PALETTE:
        mask = np.all(np.abs(arr - np.array(swatch.rgb, dtype=np.int16)) <= 3, axis=-1)
        count = int(mask.sum())
        if count and count >= min_fraction * area:
            xs = np.nonzero(mask)[1]
            found.append((float(xs.mean()), swatch))
    return [s for _, s in sorted(found, key=lambda t: t[0])]


def dominant_swatch(image: Image.Image) -> Optional[Swatch]:
    arr = np.asarray(image.convert("RGB"), dtype=np.int16)
    best, best_count = None, 0
    for swatch in PALETTE:
        mask = np.all(np.abs(arr - np.array(swatch.rgb, dtype=np.int16)) <= 3, axis=-1)
        count = int(mask.sum())
        if count > best_count:
            best, best_count = swatch, count
    return best


def describe_person(swatch: Optional[Swatch]) -> str:
    if swatch is None:
        return "In the photo, <name> is standing still."
    return (
        f"In the photo, <name> is {swatch.figure} wearing {swatch.attire}. "
        f"<name> is standing upright and looking ahead."
    )


def describe_scene(swatches: List[Swatch]) -> str:
    if not swatches:
        return "The image shows a quiet scene with no people in it."
    figures = [s.figure for s in swatches]
    joined = figures[0] if len(figures) == 1 else ", ".join(figures[:-1]) + " and " + figures[-1]
    text = f"The image shows {joined}."
    for s in swatches:
        text += f" The {s.noun} is wearing {s.attire}."
    if len(swatches) >= 2:
        text += f" The {swatches[0].noun} is looking at the {swatches[1].noun}."
    return text


def render_fixture_scene(
    directory,
    stem: str,
    persons: list,
    size=(160, 120),
    faceless: tuple = (),
) -> Path:
    """Paint a fixture scene and its annotation sidecar.

    `persons` holds (palette_index, (x, y, w, h), score) tuples. Persons whose
    position is listed in `faceless` get no face annotation.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    image = Image.new("RGB", size, BACKGROUND)
    draw = ImageDraw.Draw(image)
    annotation = {"persons": [], "faces": []}
    for pos, (palette_index, (x, y, w, h), score) in enumerate(persons):
        draw.rectangle([x, y, x + w - 1, y + h - 1], fill=PALETTE[palette_index].rgb)
        fw, fh = max(w // 3, 2), max(h // 5, 2)
        fx, fy = x + (w - fw) // 2, y + 1
        draw.rectangle([fx, fy, fx + fw - 1, fy + fh - 1], fill=SKIN)
        annotation["persons"].append({"box": [x, y, w, h], "score": score, "label": "person"})
        if pos not in faceless:
            annotation["faces"].append({"box": [fx, fy, fw, fh], "score": 0.99, "label": "face"})
    path = directory / f"{stem}.png"
    image.save(path, format="PNG")
    (directory / f"{stem}.json").write_text(json.dumps(annotation, indent=1), encoding="utf-8")
    return path


class FixtureAPI:
    def __init__(self, store, settings, prompts: dict):
        self.store = store
        self.settings = settings
        self.prompts = prompts
        self.calls = Counter()
        self._faults = {cap: [f.mode, f.times] for cap, f in settings.faults.items()}
        self._omit_placeholder = settings.omit_placeholder_times
        self._malformed = settings.malformed_times
        self._scripted = None

    # -- plumbing

    def _inject(self, capability: str) -> Optional[dict]:
        fault = self._faults.get(capability)
        if not fault or fault[1] <= 0:
            return None
        fault[1] -= 1
        mode = fault[0]
        if mode == "quota":
            raise QuotaExceeded(f"fixture {capability}: quota exceeded")
        if mode == "empty":
            return {"text": ""}
        if mode == "malformed":
            return {"bogus": True}
        raise BackendUnreachable(f"fixture {capability}: injected outage")

    def _image(self, ref: dict) -> Image.Image:
        return self.store.open(ImageRef.from_dict(ref))

    def _annotation(self, ref: dict) -> dict:
        rel = Path(ref["path"])
        if self.settings.annotations_dir:
            sidecar = Path(self.settings.annotations_dir) / rel.with_suffix(".json").name
        else:
            sidecar = self.store.resolve(ref["path"]).with_suffix(".json")
        if not sidecar.exists():
            return {"persons": [], "faces": []}
        return json.loads(sidecar.read_text(encoding="utf-8"))

    def scripted_answers(self) -> dict:
        if self._scripted is None:
            self._scripted = {}
            if self.settings.scripted_answers:
                path = Path(self.settings.scripted_answers)
                self._scripted = json.loads(path.read_text(encoding="utf-8"))
        return self._scripted

    async def request(self, capability: str, payload: dict) -> dict:
        self.calls[capability] += 1
        injected = self._inject(capability)
        if injected is not None:
            return injected
        handler = getattr(self, f"_{capability}")
        return handler(payload)

    # -- capabilities

    def _detect(self, payload: dict) -> dict:
        self._image(payload["image"])
        return {"detections": self._annotation(payload["image"]).get("persons", [])}

    def _face(self, payload: dict) -> dict:
        self._image(payload["image"])
        return {"detections": self._annotation(payload["image"]).get("faces", [])}

    def _augment(self, payload: dict) -> dict:
        ref = payload["image"]
        face = self._image(ref)
        images = []
        for i in range(payload["n"]):
            stamp = derive_seed(payload["seed"], ref["content_hash"], i).to_bytes(8, "big")
            variant = ImageOps.mirror(face) if stamp[0] % 2 else face.copy()
            variant = variant.resize((max(face.width, 8), max(face.height, 8)), Image.NEAREST)
            for k in range(4):
                variant.putpixel((k, 0), (stamp[k], stamp[k + 4], (stamp[k] ^ i) & 255))
            images.append(b64(encode_png(variant)))
        return {"images": images}

    def _caption(self, payload: dict) -> dict:
        content = payload["messages"][-1]["content"]
        images = [self._image(p["image"]) for p in content if p["type"] == "image"]
        prompt = "".join(p["text"] for p in content if p["type"] == "text")
        if "<name>" in prompt:
            text = " ".join(describe_person(dominant_swatch(im)) for im in images)
            if self._omit_placeholder > 0:
                self._omit_placeholder -= 1
                text = text.replace("<name>", "the person")
            return {"text": text}
        return {"text": " ".join(describe_scene(swatches_in(im)) for im in images)}

    def _complete(self, payload: dict) -> dict:
        prompt = "".join(
            p["text"] for m in payload["messages"] for p in m["content"] if p["type"] == "text"
        )
        seed = payload.get("seed") or 0
        if prompt.rstrip().endswith("Integrated Information:"):
            return {"text": self._fuse(prompt)}
        if prompt.rstrip().endswith("Generated MC:"):
            return {"text": self._multichoice(prompt, seed)}
        if prompt.rstrip().endswith("Generated QA:"):
            return {"text": self._qa(prompt)}
        if prompt.rstrip().endswith("Judge:"):
            response = prompt.rsplit("Response:", 1)[-1].rsplit("Judge:", 1)[0].lower()
            refused = any(cue in response for cue in JUDGE_CUES)
            return {"text": "yes" if refused else "no"}
        return {"text": f"Acknowledged ({derive_seed(seed, prompt) % 10000})."}

    def _similarity(self, payload: dict) -> dict:
        keywords = set()
        for swatch in swatches_in(self._image(payload["image"])):
            keywords |= swatch.keywords
        if not keywords:
            return {"score": 0.0}
        tokens = set(re.findall(r"[a-z]+", payload["text"].lower()))
        return {"score": len(keywords & tokens) / len(keywords)}

    def _model_under_test(self, payload: dict) -> dict:
        item_id = payload.get("item_id")
        if item_id in self.settings.unreachable_items:
            raise BackendUnreachable(f"fixture model: item {item_id} unreachable")
        answers = self.scripted_answers()
        return {"text": answers.get(item_id, self.settings.default_answer)}

    # -- text generation

    def _fuse(self, prompt: str) -> str:
        task = prompt.rsplit("Person Information:", 1)[-1]
        personal, rest = task.split("Holistic Information:", 1)
        holistic = rest.rsplit("Integrated Information:", 1)[0].strip()
        if self.settings.echo_fusion:
            return holistic
        if (
            personal.strip() == self.prompts["fusion_example_personal"].strip()
            and holistic == self.prompts["fusion_example_holistic"].strip()
        ):
            return self.prompts["fusion_example_output"]
        match = re.search(r"<name> is (an? [a-z ]+?) wearing", personal)
        if not match:
            return holistic
        figure = match.group(1)
        noun = figure.split(" ", 1)[1]
        fused = re.sub(rf"\b{figure}\b", "<name>", holistic)
        fused = re.sub(rf"\b[Tt]he {noun}\b", "<name>", fused)
        return fused

    def _swatch_for(self, information: str) -> Optional[Swatch]:
        for swatch in PALETTE:
            if swatch.attire in information:
                return swatch
        return None

    def _malformed_due(self) -> bool:
        if self._malformed > 0:
            self._malformed -= 1
            return True
        return False

    def _multichoice(self, prompt: str, seed: int) -> str:
        if self._malformed_due():
            return "[[{question: what ((( ]] choices"
        head = prompt.rsplit("Generated MC:", 1)[0]
        information = head.rsplit("Information:", 1)[-1].strip()
        if information == self.prompts["mc_example_information"].strip():
            return self.prompts["mc_example_output"]
        swatch = self._swatch_for(information)
        if swatch is None:
            return "[]"
        rng = random.Random(derive_seed(seed, information))
        others = [s for s in PALETTE if s is not swatch]
        rng.shuffle(others)

        def item(question, truth, distractors):
            choices = [truth] + distractors[:3]
            rng.shuffle(choices)
            return {"question": question, "choices": choices, "answer": truth}

        items = [
            item(
                f"What color is <name>'s {swatch.garment}?",
                swatch.color.capitalize(),
                [s.color.capitalize() for s in others],
            ),
            item(
                "What is <name> wearing?",
                swatch.attire.capitalize(),
                [s.attire.capitalize() for s in others],
            ),
            item(
                "Who is <name> in the picture?",
                swatch.figure.capitalize(),
                [s.figure.capitalize() for s in others],
            ),
        ]
        return "[[" + ", ".join(json.dumps(i) for i in items) + "]]"

    def _qa(self, prompt: str) -> str:
        if self._malformed_due():
            return "[[{question: what ((( ]] answer"
        category = re.search(r"Category: (\w+)", prompt).group(1)
        head = prompt.rsplit("Generated QA:", 1)[0]
        information = head.rsplit("Information:", 1)[-1].strip()
        swatch = self._swatch_for(information)
        attire = swatch.attire if swatch else "a simple outfit"
        if category in ("description", "pronoun_description"):
            items = [{"question": "Can you describe <name> in the image?", "answer": information}]
        elif category == "personalized_holistic":
            items = [{"question": "Describe this image.", "answer": information}]
        elif category == "freeform":
            items = [
                {"question": "What is <name> wearing?", "answer": f"<name> is wearing {attire}."},
                {"question": "What is <name> doing?", "answer": "<name> is standing upright and looking ahead."},
            ]
        elif category == "reasoning":
            items = [
                {
                    "question": f"Why might <name> have chosen {attire}?",
                    "answer": f"<name> probably chose {attire} to stay comfortable while standing around.",
                }
            ]
        else:
            items = [
                {
                    "question": "If <name>'s outfit could talk, what would it say?",
                    "answer": f"<name>'s outfit, {attire}, would say: I am the brightest thing in this picture!",
                }
            ]
        return "[[" + ", ".join(json.dumps(i) for i in items) + "]]"
