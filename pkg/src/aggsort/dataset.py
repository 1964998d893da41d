"""YOLO label codec, lithology/grade class maps, sample naming and dataset checks."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from pathlib import Path, PurePath
from typing import Iterable, Sequence

EDGE_TOL = 1e-6  # absorbs 6-decimal rounding of center and size


class Lithology(enum.Enum):
    """Rock types keyed by their sample-name code."""

    LIMESTONE = "SH"
    GRANITE = "H"
    SANDSTONE = "S"
    MARBLE = "D"

    @property
    def code(self) -> str:
        return self.value

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> Lithology:
        t = text.strip()
        for lith in cls:
            if t.upper() == lith.value or t.lower() == lith.label:
                return lith
        raise ValueError(f"unknown lithology {text!r}")


#: Order used for reports: limestone, granite, sandstone, marble.
REPORT_ORDER = (Lithology.LIMESTONE, Lithology.GRANITE, Lithology.SANDSTONE, Lithology.MARBLE)
GRADES = (1, 2, 3)


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelRecord:
    class_index: int
    x_center: float
    y_center: float
    w0: float
    h0: float

    def __post_init__(self) -> None:
        if isinstance(self.class_index, bool) or int(self.class_index) != self.class_index or self.class_index < 0:
            raise LabelError(f"class index must be a non-negative integer, got {self.class_index!r}")
        object.__setattr__(self, "class_index", int(self.class_index))
        geo = (self.x_center, self.y_center, self.w0, self.h0)
        for name, v in zip(("x_center", "y_center", "w0", "h0"), geo):
            v = float(v)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise LabelError(f"{name} = {v} outside [0, 1]")
            object.__setattr__(self, name, v)
        for c, s, axis in ((self.x_center, self.w0, "x"), (self.y_center, self.h0, "y")):
            if c - s / 2 < -EDGE_TOL or c + s / 2 > 1.0 + EDGE_TOL:
                raise LabelError(f"box does not fit the image along {axis}: center {c}, size {s}")


def parse_label_line(text: str) -> LabelRecord:
    fields = text.split()
    if len(fields) != 5:
        raise LabelError(f"expected 5 fields, got {len(fields)}: {text!r}")
    try:
        idx = int(fields[0])
        geo = [float(f) for f in fields[1:]]
    except ValueError:
        raise LabelError(f"non-numeric label field in {text!r}") from None
    return LabelRecord(idx, *geo)


def serialize_label(record: LabelRecord) -> str:
    r = record
    return f"{r.class_index} {r.x_center:.6f} {r.y_center:.6f} {r.w0:.6f} {r.h0:.6f}"


def parse_label_file(text: str) -> list[LabelRecord]:
    return [parse_label_line(line) for line in text.splitlines() if line.strip()]


def serialize_label_file(records: Iterable[LabelRecord]) -> str:
    return "".join(serialize_label(r) + "\n" for r in records)


# -- class map --------------------------------------------------------------


@dataclass(frozen=True)
class ClassMap:
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if not names:
            raise ValueError("class map is empty")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def name(self, index: int) -> str:
        if not 0 <= index < len(self.names):
            raise IndexError(f"class index {index} out of range [0, {len(self.names)})")
        return self.names[index]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None

    def index_of(self, lithology: Lithology, grade: int) -> int:
        return self.index(f"{lithology.code}-{grade}")

    def decode(self, index: int) -> tuple[Lithology, int]:
        code, g = self.name(index).rsplit("-", 1)
        return Lithology.parse(code), int(g)

    @classmethod
    def default(cls) -> ClassMap:
        order = (Lithology.GRANITE, Lithology.SANDSTONE, Lithology.LIMESTONE, Lithology.MARBLE)
        return cls(tuple(f"{lith.code}-{g}" for lith in order for g in GRADES))

    @classmethod
    def parse(cls, text: str) -> ClassMap:
        return cls(tuple(line.strip() for line in text.splitlines() if line.strip()))

    def serialize(self) -> str:
        return "".join(n + "\n" for n in self.names)

    @classmethod
    def load(cls, path: str | Path) -> ClassMap:
        return cls.parse(Path(path).read_text(encoding="utf-8"))


# -- naming -----------------------------------------------------------------


@dataclass(frozen=True)
class SampleName:
    lithology: Lithology
    grade: int
    sequence: int

    def __post_init__(self) -> None:
        if not isinstance(self.lithology, Lithology):
            object.__setattr__(self, "lithology", Lithology.parse(str(self.lithology)))
        if self.grade not in GRADES:
            raise ValueError(f"grade must be one of {GRADES}, got {self.grade}")
        if int(self.sequence) != self.sequence or self.sequence < 1:
            raise ValueError(f"sequence must be a positive integer, got {self.sequence}")


_NAME_RE = re.compile(r"^(SH|H|S|D)-([123])-(\d+)$")


def canonical_name(sample: SampleName) -> str:
    return f"{sample.lithology.code}-{sample.grade}-{sample.sequence:04d}"


def parse_sample_name(stem: str) -> SampleName:
    m = _NAME_RE.match(PurePath(stem).stem if "." in stem else stem)
    if not m:
        raise ValueError(f"not a canonical sample name: {stem!r}")
    return SampleName(Lithology.parse(m.group(1)), int(m.group(2)), int(m.group(3)))


# -- integrity --------------------------------------------------------------


class EntryStatus(enum.Enum):
    MATCHED = "matched"
    MISSING_LABEL = "missing label"
    MISSING_IMAGE = "missing image"
    ORDER_MISMATCH = "order mismatch"


@dataclass(frozen=True)
class IntegrityEntry:
    position: int
    status: EntryStatus
    image: str | None
    label: str | None


@dataclass(frozen=True)
class IntegrityReport:
    entries: tuple[IntegrityEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.status is EntryStatus.MATCHED for e in self.entries)

    def problems(self) -> list[IntegrityEntry]:
        return [e for e in self.entries if e.status is not EntryStatus.MATCHED]

    def render(self) -> str:
        lines = [f"{e.position}\t{e.status.value}\t{e.image or '-'}\t{e.label or '-'}" for e in self.problems()]
        lines.append(f"{'PASS' if self.passed else 'FAIL'}: {len(self.entries)} entries, {len(self.problems())} problems")
        return "\n".join(lines) + "\n"


def _stem(name: str) -> str:
    return PurePath(name).stem


def verify_dataset(image_names: Sequence[str], label_names: Sequence[str]) -> IntegrityReport:
    """Check that images and labels pair up one-to-one, in the same order.

    Stems missing from one side are reported first; the stems present on
    both sides are then compared position by position.
    """
    img_stems = [_stem(n) for n in image_names]
    lab_stems = [_stem(n) for n in label_names]
    img_set, lab_set = set(img_stems), set(lab_stems)
    entries: list[IntegrityEntry] = []
    for i, (name, stem) in enumerate(zip(image_names, img_stems)):
        if stem not in lab_set:
            entries.append(IntegrityEntry(i, EntryStatus.MISSING_LABEL, name, None))
    for i, (name, stem) in enumerate(zip(label_names, lab_stems)):
        if stem not in img_set:
            entries.append(IntegrityEntry(i, EntryStatus.MISSING_IMAGE, None, name))
    common_img = [(n, s) for n, s in zip(image_names, img_stems) if s in lab_set]
    common_lab = [(n, s) for n, s in zip(label_names, lab_stems) if s in img_set]
    for k, ((iname, istem), (lname, lstem)) in enumerate(zip(common_img, common_lab)):
        status = EntryStatus.MATCHED if istem == lstem else EntryStatus.ORDER_MISMATCH
        entries.append(IntegrityEntry(k, status, iname, lname))
    # duplicated stems leave one side longer than the other
    for k in range(min(len(common_img), len(common_lab)), max(len(common_img), len(common_lab))):
        if k < len(common_img):
            entries.append(IntegrityEntry(k, EntryStatus.MISSING_LABEL, common_img[k][0], None))
        else:
            entries.append(IntegrityEntry(k, EntryStatus.MISSING_IMAGE, None, common_lab[k][0]))
    return IntegrityReport(tuple(entries))


IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".pgm")


def list_directory(images_dir: str | Path, labels_dir: str | Path) -> tuple[list[str], list[str]]:
    """Sorted image and label file names, for feeding :func:`verify_dataset`."""
    imgs = sorted(p.name for p in Path(images_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    labs = sorted(p.name for p in Path(labels_dir).iterdir() if p.suffix.lower() == ".txt")
    return imgs, labs
