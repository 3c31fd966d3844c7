"""Small shared helpers: stable hashing, seed derivation, text normalization."""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Any, Iterable, Iterator

_MASK64 = (1 << 64) - 1


def hash64(data: str, key: int = 0) -> int:
    """Stable 64-bit hash of a string, independent of PYTHONHASHSEED."""
    keyed = hashlib.blake2b(
        data.encode("utf-8"),
        digest_size=8,
        key=(key & _MASK64).to_bytes(8, "little"),
    )
    return int.from_bytes(keyed.digest(), "little")


def derive_seed(root_seed: int, name: str) -> int:
    """Derive a named sub-seed from a root seed.

    Every seeded component (encoder, k-means, sampling) gets its own
    stream so reordering one consumer cannot perturb another.
    """
    return hash64(name, key=root_seed)


_NON_WORD = re.compile(r"[^\w\s]|_", flags=re.UNICODE)


def normalize_answer_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(_NON_WORD.sub(" ", text.lower()).split())


def read_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield (line_number, parsed_object) for each non-empty line."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
