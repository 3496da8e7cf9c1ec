from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

PLACEHOLDER = "<name>"

KINDS = (
    "description",
    "freeform",
    "multichoice",
    "pronoun_description",
    "x_person_description",
    "personalized_holistic",
    "reasoning",
    "witty",
)

CHOICE_LETTERS = "ABCD"
REFUSE = "REFUSE"


@dataclass(frozen=True)
class ImageRef:
    path: str
    content_hash: str
    width: int
    height: int

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "content_hash": self.content_hash,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImageRef":
        return cls(
            path=data["path"],
            content_hash=data["content_hash"],
            width=int(data["width"]),
            height=int(data["height"]),
        )


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def intersection(self, other: "BBox") -> int:
        dx = min(self.x2, other.x2) - max(self.x, other.x)
        dy = min(self.y2, other.y2) - max(self.y, other.y)
        if dx <= 0 or dy <= 0:
            return 0
        return dx * dy

    def iou(self, other: "BBox") -> float:
        inter = self.intersection(other)
        union = self.area + other.area - inter
        return inter / union if union else 0.0

    def covered_fraction(self, inner: "BBox") -> float:
        """Fraction of `inner`'s area that lies inside this box."""
        return self.intersection(inner) / inner.area if inner.area else 0.0

    def clamp(self, width: int, height: int) -> "BBox":
        x1 = min(max(self.x, 0), width - 1)
        y1 = min(max(self.y, 0), height - 1)
        x2 = max(min(self.x2, width), x1 + 1)
        y2 = max(min(self.y2, height), y1 + 1)
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def as_list(self) -> List[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values) -> "BBox":
        x, y, w, h = (int(round(float(v))) for v in values)
        return cls(x, y, max(w, 1), max(h, 1))


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float
    label: str

    def to_dict(self) -> dict:
        return {"box": self.box.as_list(), "score": self.score, "label": self.label}

    @classmethod
    def from_dict(cls, data: dict) -> "Detection":
        return cls(BBox.from_list(data["box"]), float(data["score"]), data["label"])


@dataclass
class PersonConcept:
    person_id: str
    person_box: BBox
    face_box: BBox
    person_crop: ImageRef
    face_crop: ImageRef
    augmented: List[ImageRef] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "person_id": self.person_id,
            "person_box": self.person_box.as_list(),
            "face_box": self.face_box.as_list(),
            "person_crop": self.person_crop.to_dict(),
            "face_crop": self.face_crop.to_dict(),
            "augmented": [ref.to_dict() for ref in self.augmented],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PersonConcept":
        return cls(
            person_id=data["person_id"],
            person_box=BBox.from_list(data["person_box"]),
            face_box=BBox.from_list(data["face_box"]),
            person_crop=ImageRef.from_dict(data["person_crop"]),
            face_crop=ImageRef.from_dict(data["face_crop"]),
            augmented=[ImageRef.from_dict(r) for r in data.get("augmented", [])],
            warnings=list(data.get("warnings", [])),
        )


@dataclass
class SceneRecord:
    scene_id: str
    image: ImageRef
    persons: List[PersonConcept] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    @property
    def person_count(self) -> int:
        return len(self.persons)

    def person(self, person_id: str) -> PersonConcept:
        for concept in self.persons:
            if concept.person_id == person_id:
                return concept
        raise KeyError(person_id)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "image": self.image.to_dict(),
            "persons": [p.to_dict() for p in self.persons],
            "person_count": self.person_count,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneRecord":
        record = cls(
            scene_id=data["scene_id"],
            image=ImageRef.from_dict(data["image"]),
            persons=[PersonConcept.from_dict(p) for p in data.get("persons", [])],
            flags=list(data.get("flags", [])),
        )
        if "person_count" in data and data["person_count"] != record.person_count:
            raise ValueError("person_count disagrees with persons")
        return record


@dataclass(frozen=True)
class CompositeScene:
    image: ImageRef
    slots: Tuple[str, ...]
    slot_boxes: Tuple[BBox, ...]


@dataclass
class DualLevelInfo:
    scene_id: str
    person_id: str
    personal: str
    holistic: str
    fused: str

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "person_id": self.person_id,
            "personal": self.personal,
            "holistic": self.holistic,
            "fused": self.fused,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DualLevelInfo":
        return cls(
            scene_id=data["scene_id"],
            person_id=data["person_id"],
            personal=data["personal"],
            holistic=data["holistic"],
            fused=data["fused"],
        )


@dataclass(frozen=True)
class QATemplate:
    kind: str
    question: str
    answer: str
    choices: Optional[Tuple[str, ...]] = None
    placeholders: Tuple[str, ...] = (PLACEHOLDER,)

    @property
    def gold_letter(self) -> Optional[str]:
        if not self.choices:
            return None
        return CHOICE_LETTERS[self.choices.index(self.answer)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "question": self.question,
            "answer": self.answer,
            "choices": list(self.choices) if self.choices else None,
            "placeholders": list(self.placeholders),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QATemplate":
        return cls(
            kind=data["kind"],
            question=data["question"],
            answer=data["answer"],
            choices=tuple(data["choices"]) if data.get("choices") else None,
            placeholders=tuple(data.get("placeholders") or (PLACEHOLDER,)),
        )


@dataclass(frozen=True)
class PrefixEntry:
    image: ImageRef
    intro: str
    person_id: str = ""

    def to_dict(self) -> dict:
        return {
            "image": self.image.to_dict(),
            "intro": self.intro,
            "person_id": self.person_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrefixEntry":
        return cls(
            image=ImageRef.from_dict(data["image"]),
            intro=data["intro"],
            person_id=data.get("person_id", ""),
        )


@dataclass
class TrainingInstance:
    instance_id: str
    kind: str
    prefix: List[PrefixEntry]
    scene: ImageRef
    query: str
    response: str
    answerable: bool
    serialized: str
    supervision: Tuple[int, int]
    prefix_variant: str = "Crop"
    scene_variant: str = "Original"
    source_scene_id: str = ""
    source_scene_hash: str = ""
    scene_person_ids: List[str] = field(default_factory=list)
    names: List[str] = field(default_factory=list)
    queried_name: Optional[str] = None
    choices: Optional[List[str]] = None
    gold: Optional[str] = None

    @property
    def adversarial(self) -> Optional[str]:
        if self.answerable:
            return None
        return self.prefix_variant if self.prefix_variant in ("AdvName", "AdvImg") else None

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "kind": self.kind,
            "prefix": [p.to_dict() for p in self.prefix],
            "scene": self.scene.to_dict(),
            "query": self.query,
            "response": self.response,
            "answerable": self.answerable,
            "serialized": self.serialized,
            "supervision": list(self.supervision),
            "prefix_variant": self.prefix_variant,
            "scene_variant": self.scene_variant,
            "source_scene_id": self.source_scene_id,
            "source_scene_hash": self.source_scene_hash,
            "scene_person_ids": list(self.scene_person_ids),
            "names": list(self.names),
            "queried_name": self.queried_name,
            "choices": list(self.choices) if self.choices else None,
            "gold": self.gold,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingInstance":
        return cls(
            instance_id=data["instance_id"],
            kind=data["kind"],
            prefix=[PrefixEntry.from_dict(p) for p in data["prefix"]],
            scene=ImageRef.from_dict(data["scene"]),
            query=data["query"],
            response=data["response"],
            answerable=bool(data["answerable"]),
            serialized=data["serialized"],
            supervision=tuple(data["supervision"]),
            prefix_variant=data.get("prefix_variant", "Crop"),
            scene_variant=data.get("scene_variant", "Original"),
            source_scene_id=data.get("source_scene_id", ""),
            source_scene_hash=data.get("source_scene_hash", ""),
            scene_person_ids=list(data.get("scene_person_ids", [])),
            names=list(data.get("names", [])),
            queried_name=data.get("queried_name"),
            choices=data.get("choices"),
            gold=data.get("gold"),
        )


class BenchType(str, Enum):
    Crop = "Crop"
    AugIn = "AugIn"
    AugSc2 = "AugSc2"
    AugSc3 = "AugSc3"
    AdvImg = "AdvImg"
    AdvName = "AdvName"
    DescAnswerable = "DescAnswerable"
    DescAdvImg = "DescAdvImg"
    DescAdvName = "DescAdvName"

    @property
    def is_mc(self) -> bool:
        return self in MC_TYPES

    @property
    def is_adversarial(self) -> bool:
        return self in (
            BenchType.AdvImg,
            BenchType.AdvName,
            BenchType.DescAdvImg,
            BenchType.DescAdvName,
        )

    @property
    def adversarial_kind(self) -> Optional[str]:
        if self in (BenchType.AdvImg, BenchType.DescAdvImg):
            return "image"
        if self in (BenchType.AdvName, BenchType.DescAdvName):
            return "name"
        return None


MC_ANSWERABLE = (BenchType.Crop, BenchType.AugIn, BenchType.AugSc2, BenchType.AugSc3)
MC_UNANSWERABLE = (BenchType.AdvImg, BenchType.AdvName)
MC_TYPES = MC_ANSWERABLE + MC_UNANSWERABLE
DESC_UNANSWERABLE = (BenchType.DescAdvImg, BenchType.DescAdvName)
DESC_TYPES = (BenchType.DescAnswerable,) + DESC_UNANSWERABLE

# Column labels used in reports.
TYPE_LABELS = {
    BenchType.Crop: "Crop",
    BenchType.AugIn: "Aug-In",
    BenchType.AugSc2: "Aug-Sc-2",
    BenchType.AugSc3: "Aug-Sc-3",
    BenchType.AdvImg: "Adv-Img",
    BenchType.AdvName: "Adv-Name",
    BenchType.DescAnswerable: "Desc",
    BenchType.DescAdvImg: "Adv-Img",
    BenchType.DescAdvName: "Adv-Name",
}


@dataclass
class BenchItem:
    item_id: str
    bench_type: BenchType
    prefix: List[PrefixEntry]
    scene: ImageRef
    question: str
    gold: str
    person_count: int
    choices: Optional[List[str]] = None
    target_person_image: Optional[ImageRef] = None
    source_scene_id: str = ""
    source_scene_hash: str = ""
    scene_person_ids: List[str] = field(default_factory=list)
    queried_name: Optional[str] = None
    composite_slots: Optional[List[str]] = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "bench_type": self.bench_type.value,
            "prefix": [p.to_dict() for p in self.prefix],
            "scene": self.scene.to_dict(),
            "question": self.question,
            "choices": list(self.choices) if self.choices is not None else None,
            "gold": self.gold,
            "person_count": self.person_count,
            "target_person_image": (
                self.target_person_image.to_dict() if self.target_person_image else None
            ),
            "source_scene_id": self.source_scene_id,
            "source_scene_hash": self.source_scene_hash,
            "scene_person_ids": list(self.scene_person_ids),
            "queried_name": self.queried_name,
            "composite_slots": (
                list(self.composite_slots) if self.composite_slots is not None else None
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchItem":
        target = data.get("target_person_image")
        return cls(
            item_id=data["item_id"],
            bench_type=BenchType(data["bench_type"]),
            prefix=[PrefixEntry.from_dict(p) for p in data.get("prefix", [])],
            scene=ImageRef.from_dict(data["scene"]),
            question=data["question"],
            choices=data.get("choices"),
            gold=data["gold"],
            person_count=int(data["person_count"]),
            target_person_image=ImageRef.from_dict(target) if target else None,
            source_scene_id=data.get("source_scene_id", ""),
            source_scene_hash=data.get("source_scene_hash", ""),
            scene_person_ids=list(data.get("scene_person_ids", [])),
            queried_name=data.get("queried_name"),
            composite_slots=data.get("composite_slots"),
        )


@dataclass
class BenchManifest:
    items: List[BenchItem] = field(default_factory=list)

    @property
    def counts(self) -> dict:
        counts = {t.value: 0 for t in BenchType}
        for item in self.items:
            counts[item.bench_type.value] += 1
        return counts


@dataclass
class ModelResponse:
    item_id: str
    raw: str
    extracted: Optional[str] = None
    rejected: bool = False
    similarity: Optional[float] = None
    no_response: bool = False
    parse_failed: bool = False

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "raw": self.raw,
            "extracted": self.extracted,
            "rejected": self.rejected,
            "similarity": self.similarity,
            "no_response": self.no_response,
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelResponse":
        return cls(
            item_id=data["item_id"],
            raw=data.get("raw", ""),
            extracted=data.get("extracted"),
            rejected=bool(data.get("rejected", False)),
            similarity=data.get("similarity"),
            no_response=bool(data.get("no_response", False)),
            parse_failed=bool(data.get("parse_failed", False)),
        )
