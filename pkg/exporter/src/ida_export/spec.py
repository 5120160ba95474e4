"""Export specification: what to encode, with which model, into which bundle.

A spec arrives as a JSON document:

```json
{
  "model": "path or hub id of a causal LM",
  "template": "review : {Sentence} sentiment : {Label}",
  "separator": "\n",
  "label_words": ["negative", "positive"],
  "demos":   [{"text": "...", "label": "positive"}, ...],
  "queries": [{"text": "..."}, ...],
  "output": "path/to/bundle"
}
```

Class indices follow the order of ``label_words``.  ``separator`` joins
the rendered demonstrations in front of each query context and defaults
to a newline.  Query labels are optional but all-or-none, so the bundle
either carries a full evaluation label vector or none at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import IoError, SpecError, TemplateError

SENTENCE_SLOT = "{Sentence}"
LABEL_SLOT = "{Label}"


def _check_template(template: str) -> None:
    if not isinstance(template, str):
        raise TemplateError(f"template must be a string, got {type(template).__name__}")
    for slot in (SENTENCE_SLOT, LABEL_SLOT):
        n = template.count(slot)
        if n != 1:
            raise TemplateError(f"template must contain {slot} exactly once, found {n}")
    if template.index(LABEL_SLOT) < template.index(SENTENCE_SLOT):
        raise TemplateError(f"{LABEL_SLOT} must come after {SENTENCE_SLOT}")


def _text_tuple(items, name: str) -> tuple[str, ...]:
    out = []
    for i, s in enumerate(items):
        if not isinstance(s, str) or not s:
            raise SpecError(f"{name}[{i}] must be a non-empty string, got {s!r}")
        out.append(s)
    return tuple(out)


@dataclass(frozen=True)
class ExportSpec:
    """Validated export request; label values are class indices."""

    model: str
    template: str
    label_words: tuple[str, ...]
    demo_texts: tuple[str, ...]
    demo_labels: tuple[int, ...]
    query_texts: tuple[str, ...]
    output: str
    query_labels: tuple[int, ...] | None = None
    separator: str = "\n"

    def __post_init__(self):
        if not isinstance(self.model, str) or not self.model:
            raise SpecError("model must be a non-empty string")
        _check_template(self.template)
        words = _text_tuple(self.label_words, "label_words")
        if len(words) < 2:
            raise SpecError(f"need at least 2 label words, got {len(words)}")
        if len(set(words)) != len(words):
            raise SpecError("label words must be unique")
        demos = _text_tuple(self.demo_texts, "demos")
        queries = _text_tuple(self.query_texts, "queries")
        if not queries:
            raise SpecError("need at least one query")
        for name, labels, n in (
            ("demo", self.demo_labels, len(demos)),
            ("query", self.query_labels, len(queries)),
        ):
            if labels is None:
                continue
            if len(labels) != n:
                raise SpecError(f"{len(labels)} {name} labels vs {n} {name} texts")
            for lab in labels:
                if not isinstance(lab, int) or not 0 <= lab < len(words):
                    raise SpecError(f"{name} label index {lab!r} outside [0, {len(words)})")
        if not isinstance(self.output, str) or not self.output:
            raise SpecError("output must be a non-empty path")
        if not isinstance(self.separator, str):
            raise SpecError("separator must be a string")
        object.__setattr__(self, "label_words", words)
        object.__setattr__(self, "demo_texts", demos)
        object.__setattr__(self, "demo_labels", tuple(self.demo_labels))
        object.__setattr__(self, "query_texts", queries)
        if self.query_labels is not None:
            object.__setattr__(self, "query_labels", tuple(self.query_labels))

    @property
    def num_classes(self) -> int:
        return len(self.label_words)


def _examples(raw, name: str, label_index) -> tuple[tuple[str, ...], list[int | None]]:
    if not isinstance(raw, list):
        raise SpecError(f"{name} must be a list of objects with 'text'")
    texts, labels = [], []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise SpecError(f"{name}[{i}] must be an object, got {type(item).__name__}")
        unknown = set(item) - {"text", "label"}
        if unknown:
            raise SpecError(f"{name}[{i}] has unknown keys: {sorted(unknown)}")
        if "text" not in item:
            raise SpecError(f"{name}[{i}] is missing 'text'")
        texts.append(item["text"])
        labels.append(None if "label" not in item else label_index(item["label"], f"{name}[{i}]"))
    return tuple(texts), labels


def spec_from_dict(raw: dict) -> ExportSpec:
    """Build a validated spec from parsed JSON; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise SpecError(f"spec must be a JSON object, got {type(raw).__name__}")
    known = {"model", "template", "separator", "label_words", "demos", "queries", "output"}
    unknown = set(raw) - known
    if unknown:
        raise SpecError(f"unknown spec keys: {sorted(unknown)}")
    missing = known - {"separator"} - set(raw)
    if missing:
        raise SpecError(f"missing spec keys: {sorted(missing)}")

    words = raw["label_words"]
    if not isinstance(words, list):
        raise SpecError("label_words must be a list of strings")

    def label_index(value, where: str) -> int:
        if value not in words:
            raise SpecError(f"{where} label {value!r} is not one of label_words")
        return words.index(value)

    demo_texts, demo_labels = _examples(raw["demos"], "demos", label_index)
    if any(lab is None for lab in demo_labels):
        bad = demo_labels.index(None)
        raise SpecError(f"demos[{bad}] is missing 'label'; every demonstration needs one")
    query_texts, query_labels = _examples(raw["queries"], "queries", label_index)
    labelled = sum(lab is not None for lab in query_labels)
    if labelled not in (0, len(query_labels)):
        raise SpecError(
            f"query labels must be all-or-none, got {labelled} of {len(query_labels)}"
        )

    kwargs = dict(
        model=raw["model"],
        template=raw["template"],
        label_words=tuple(words),
        demo_texts=demo_texts,
        demo_labels=tuple(demo_labels),
        query_texts=query_texts,
        query_labels=tuple(query_labels) if labelled else None,
        output=raw["output"],
    )
    if "separator" in raw:
        kwargs["separator"] = raw["separator"]
    assert set(kwargs) <= {f.name for f in fields(ExportSpec)}
    return ExportSpec(**kwargs)


def spec_from_json(path: str) -> ExportSpec:
    """Read and validate a spec file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IoError(f"cannot read spec file {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"spec file {path} is not valid JSON: {e}") from e
    return spec_from_dict(raw)
