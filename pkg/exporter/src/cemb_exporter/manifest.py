"""Minimal JSONL manifest reader matching the pipeline's record schema."""

from __future__ import annotations

import json
from dataclasses import dataclass

FIELDS = ("id", "audio", "text", "category", "language")


@dataclass
class Record:
    id: str
    audio: str
    text: str
    category: str
    language: str


def load(path: str) -> list[Record]:
    records: list[Record] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            missing = [f for f in FIELDS if f not in obj]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {missing}")
            rec = Record(**{f: obj[f] for f in FIELDS})
            if not rec.id or not rec.text:
                raise ValueError(f"{path}:{lineno}: empty id or text")
            if rec.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records
