"""Corpus curation: class-count filtering, per-class 80/20 split, summary stats."""
from __future__ import annotations

import hashlib
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .errors import FormatError, ValidationError
from .gdq import LOW_LIGHT, NORMAL_LIGHT

DEFAULT_MIN_COUNT = 150
SPLITS = ("train", "test", "unassigned")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    class_label: str
    num_frames: int
    D_v: float
    light: str = LOW_LIGHT
    split: str = "unassigned"

    def __post_init__(self):
        if self.light not in (LOW_LIGHT, NORMAL_LIGHT):
            raise ValidationError(f"{self.path}: bad light label {self.light!r}")
        if self.split not in SPLITS:
            raise ValidationError(f"{self.path}: bad split {self.split!r}")

    @classmethod
    def from_record(cls, rec):
        """Build from a manifest line or a darkness-scan record.

        Scan records carry ``T`` and ``label`` instead of ``num_frames`` and
        ``light``; their class is the name of the directory above the video.
        """
        try:
            if "class_label" in rec:
                return cls(str(rec["path"]), str(rec["class_label"]), int(rec["num_frames"]),
                           float(rec["D_v"]), rec.get("light", LOW_LIGHT),
                           rec.get("split", "unassigned"))
            path = str(rec["path"])
            return cls(path, Path(path).parent.name, int(rec["T"]), float(rec["D_v"]), rec["label"])
        except KeyError as exc:
            raise ValidationError(f"manifest record missing field {exc}") from None


@dataclass
class CorpusStats:
    num_classes: int
    total_videos: int
    per_class: dict
    train: int
    test: int
    split_ratio: float | None
    num_scenes: int | None = None

    def table_row(self, name="Dark-101"):
        scenes = "-" if self.num_scenes is None else str(self.num_scenes)
        return f"{name} & {self.num_classes} & {scenes} & {self.total_videos}"

    def to_dict(self):
        return asdict(self)


def read_manifest(path):
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: {exc}", path) from None
            entries.append(ManifestEntry.from_record(rec))
    return entries


def write_manifest(entries, fh):
    for e in entries:
        fh.write(json.dumps(asdict(e), ensure_ascii=False) + "\n")


def select_dark(entries):
    return [e for e in entries if e.light == LOW_LIGHT]


def filter_classes(entries, min_count=DEFAULT_MIN_COUNT):
    """Keep entries whose class has at least ``min_count`` members; order by path."""
    counts = Counter(e.class_label for e in entries)
    kept = [e for e in entries if counts[e.class_label] >= min_count]
    return sorted(kept, key=lambda e: (e.path, e.class_label))


def _rank_key(seed, path):
    return hashlib.sha256(f"{seed}\0{path}".encode("utf-8")).hexdigest()


def split_80_20(entries, seed=0):
    """Per class, the ``floor(0.8 n)`` entries with the smallest seeded hash go to train."""
    by_class = defaultdict(list)
    for e in entries:
        if e.light != LOW_LIGHT:
            raise ValidationError(f"{e.path}: only low-light entries can be split")
        by_class[e.class_label].append(e)
    assigned = {}
    for members in by_class.values():
        ranked = sorted(members, key=lambda e: (_rank_key(seed, e.path), e.path))
        n_train = (4 * len(ranked)) // 5  # floor(0.8 n) without float rounding
        for i, e in enumerate(ranked):
            assigned[id(e)] = replace(e, split="train" if i < n_train else "test")
    return [assigned[id(e)] for e in entries]


def curate(entries, min_count=DEFAULT_MIN_COUNT, seed=0):
    return split_80_20(filter_classes(select_dark(entries), min_count), seed)


def stats(entries, num_scenes=None) -> CorpusStats:
    per_class = dict(sorted(Counter(e.class_label for e in entries).items()))
    train = sum(e.split == "train" for e in entries)
    test = sum(e.split == "test" for e in entries)
    ratio = train / (train + test) if train + test else None
    return CorpusStats(len(per_class), len(entries), per_class, train, test, ratio, num_scenes)
