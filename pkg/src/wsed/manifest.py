"""JSON-lines dataset manifest shared by generation, training and evaluation."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class ManifestEvent:
    label: str
    onset: float
    offset: float
    source: str


@dataclass
class ClipRecord:
    clip_id: str
    mixture: str
    fold: int
    snr_db: float
    events: list


def save_manifest(records: list, path) -> None:
    """One JSON object per line; paths stay relative to the manifest."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({
                "clip_id": record.clip_id,
                "mixture": record.mixture,
                "fold": record.fold,
                "snr_db": record.snr_db,
                "events": [
                    {
                        "label": e.label,
                        "onset": e.onset,
                        "offset": e.offset,
                        "source": e.source,
                    }
                    for e in record.events
                ],
            }) + "\n")


def load_manifest(path) -> list:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(
                    f"{path}:{line_no}: malformed manifest line: {exc}"
                ) from exc
            records.append(ClipRecord(
                clip_id=d["clip_id"],
                mixture=d["mixture"],
                fold=int(d["fold"]),
                snr_db=float(d["snr_db"]),
                events=[
                    ManifestEvent(e["label"], float(e["onset"]),
                                  float(e["offset"]), e["source"])
                    for e in d["events"]
                ],
            ))
    return records


def manifest_labels(records: list) -> list:
    """Sorted class labels across every clip; fixes the class index order."""
    return sorted({e.label for r in records for e in r.events})


def weak_label_vector(record: ClipRecord, labels: list) -> np.ndarray:
    """Binary indicator over labels for the classes present in a clip."""
    index = {label: i for i, label in enumerate(labels)}
    y = np.zeros(len(labels), dtype=np.float32)
    for event in record.events:
        y[index[event.label]] = 1.0
    return y


def resolve(path, manifest_path) -> Path:
    """Resolve a manifest-relative path against the manifest location."""
    p = Path(path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
