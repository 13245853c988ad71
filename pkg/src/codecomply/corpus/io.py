"""File formats for corpora: JSONL records and blank-line-separated docs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from codecomply.corpus.types import BugFixRecord, CodeSnippet, Facet, Policy
from codecomply.errors import CorpusError


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def _require(obj: dict, key: str, path: str | Path, lineno: int) -> object:
    if key not in obj:
        raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
    return obj[key]


def read_policies(path: str | Path) -> list[Policy]:
    return [
        Policy(
            id=str(_require(obj, "id", path, n)),
            text=str(_require(obj, "text", path, n)),
            source=str(_require(obj, "source", path, n)),
        )
        for n, obj in _read_jsonl(path)
    ]


def write_policies(path: str | Path, policies: Iterable[Policy]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in policies:
            fh.write(json.dumps({"id": p.id, "text": p.text, "source": p.source}) + "\n")


def read_snippets(path: str | Path) -> list[CodeSnippet]:
    snippets = []
    for n, obj in _read_jsonl(path):
        raw_gt = obj.get("ground_truth", [])
        if not isinstance(raw_gt, list):
            raise CorpusError(f"{path}:{n}: ground_truth must be a list")
        ground_truth = tuple(
            (str(_require(gt, "policy_id", path, n)), Facet(str(_require(gt, "facet", path, n))))
            for gt in raw_gt
        )
        snippets.append(
            CodeSnippet(
                id=str(_require(obj, "id", path, n)),
                code=str(_require(obj, "code", path, n)),
                ground_truth=ground_truth,
            )
        )
    return snippets


def write_snippets(path: str | Path, snippets: Iterable[CodeSnippet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in snippets:
            obj: dict = {"id": s.id, "code": s.code}
            if s.ground_truth:
                obj["ground_truth"] = [
                    {"policy_id": pid, "facet": facet.value} for pid, facet in s.ground_truth
                ]
            fh.write(json.dumps(obj) + "\n")


def read_bugfixes(path: str | Path) -> list[BugFixRecord]:
    return [
        BugFixRecord(
            id=str(_require(obj, "id", path, n)),
            comment=str(_require(obj, "comment", path, n)),
            code_before=str(_require(obj, "code_before", path, n)),
            code_after=str(_require(obj, "code_after", path, n)),
        )
        for n, obj in _read_jsonl(path)
    ]


def write_bugfixes(path: str | Path, records: Iterable[BugFixRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "id": r.id,
                        "comment": r.comment,
                        "code_before": r.code_before,
                        "code_after": r.code_after,
                    }
                )
                + "\n"
            )


def read_docs(path: str | Path) -> list[str]:
    """Paragraphs separated by blank lines; intra-paragraph newlines join with a space."""
    text = Path(path).read_text(encoding="utf-8")
    paragraphs = []
    for block in text.split("\n\n"):
        joined = " ".join(block.split())
        if joined:
            paragraphs.append(joined)
    return paragraphs


def write_docs(path: str | Path, paragraphs: Iterable[str]) -> None:
    Path(path).write_text("\n\n".join(paragraphs) + "\n", encoding="utf-8")
