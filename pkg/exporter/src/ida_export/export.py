"""Extract model artifacts into a scoring-engine bundle.

For each templated demonstration alone, and for each full contextual
input (all demonstrations joined by the separator, then the query
rendered up to the label slot), the exporter records the hidden state
feeding the language-model head at the final position.  Together with
the head's weight matrix, biases (zeros when the head has none), and
the candidate label token indices, that is everything the engine needs
to reproduce the model's candidate logits from the bundle.

Tokenization conventions:

* special tokens are disabled everywhere, so the scored position is
  exactly the template's label slot;
* spaces sitting immediately before the label slot belong to the label
  word, not the context, matching byte-level BPE vocabularies where
  " positive" is a single token while a trailing bare space is not.

Each candidate label word must extend every query context by exactly
one token; anything else raises TokenizationError naming the word.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .bundle_io import write_bundle_dir
from .errors import ModelLoadError, SpecError, TokenizationError
from .spec import LABEL_SLOT, SENTENCE_SLOT, ExportSpec


def render_demo(template: str, text: str, word: str) -> str:
    """A full demonstration example: sentence and label filled in."""
    return template.replace(SENTENCE_SLOT, text).replace(LABEL_SLOT, word)


def query_context(template: str, text: str) -> str:
    """The query rendered up to the label slot, label lead-in spaces excluded."""
    prefix = template[: template.index(LABEL_SLOT)].replace(SENTENCE_SLOT, text)
    return prefix.rstrip(" ")


def label_lead(template: str) -> str:
    """Spaces between the context and the label slot; they join the label word."""
    prefix = template[: template.index(LABEL_SLOT)]
    return prefix[len(prefix.rstrip(" ")):]


@dataclass(frozen=True)
class ExportReport:
    """What an export produced, plus anything worth flagging."""

    output: str
    n_demos: int
    n_queries: int
    candidates: tuple[int, ...]
    flags: tuple[str, ...]


def load_model(identifier: str):
    """Load tokenizer and eval-mode causal LM; failures name the identifier."""
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(identifier)
        model = AutoModelForCausalLM.from_pretrained(identifier)
    except Exception as e:
        raise ModelLoadError(f"cannot load model {identifier!r}: {e}") from e
    model.eval()
    return tokenizer, model


def _encode(tokenizer, text: str) -> list[int]:
    return tokenizer.encode(text, add_special_tokens=False)


def _max_positions(model) -> int | None:
    cfg = model.config
    for key in ("max_position_embeddings", "n_positions"):
        value = getattr(cfg, key, None)
        if isinstance(value, int) and value > 0:
            return value
    return None


def _final_hidden(model, ids: list[int], what: str, max_pos: int | None) -> np.ndarray:
    if not ids:
        raise SpecError(f"{what} tokenizes to nothing")
    if max_pos is not None and len(ids) > max_pos:
        raise SpecError(f"{what} has {len(ids)} tokens; model maximum is {max_pos}")
    with torch.no_grad():
        out = model(torch.tensor([ids]), output_hidden_states=True)
    return out.hidden_states[-1][0, -1].cpu().numpy().astype(np.float32)


def resolve_candidates(tokenizer, contexts: list[str], lead: str, words) -> tuple[int, ...]:
    """Token index of each label word when appended to every query context.

    The word (with its lead-in spaces) must add exactly one token on top
    of the context's own tokens, and that token must be the same across
    all contexts, otherwise the word cannot act as a single-token class
    label for this tokenizer.
    """
    resolved = []
    for word in words:
        token = None
        for ctx in contexts:
            base = _encode(tokenizer, ctx)
            full = _encode(tokenizer, ctx + lead + word)
            if len(full) != len(base) + 1 or full[: len(base)] != base:
                got = len(full) - len(base)
                raise TokenizationError(word, f"maps to {got} tokens, expected exactly 1")
            if token is None:
                token = full[-1]
            elif token != full[-1]:
                raise TokenizationError(word, "tokenizes differently across query contexts")
        resolved.append(int(token))
    seen: dict[int, str] = {}
    for word, token in zip(words, resolved):
        if token in seen:
            raise TokenizationError(word, f"maps to the same token as {seen[token]!r}")
        seen[token] = word
    return tuple(resolved)


def _head_arrays(model) -> tuple[np.ndarray, np.ndarray]:
    head = model.get_output_embeddings()
    if head is None or not hasattr(head, "weight"):
        raise ModelLoadError("model exposes no output embedding head")
    weights = head.weight.detach().cpu().numpy().astype(np.float32)
    bias = getattr(head, "bias", None)
    if bias is None:
        biases = np.zeros(weights.shape[0], dtype=np.float32)
    else:
        biases = bias.detach().cpu().numpy().astype(np.float32)
    return weights, biases


def export_bundle(spec: ExportSpec) -> ExportReport:
    """Encode the spec with its model and write the bundle to spec.output."""
    tokenizer, model = load_model(spec.model)
    max_pos = _max_positions(model)

    demo_renders = [
        render_demo(spec.template, text, spec.label_words[lab])
        for text, lab in zip(spec.demo_texts, spec.demo_labels)
    ]
    prefix = "".join(r + spec.separator for r in demo_renders)
    contexts = [prefix + query_context(spec.template, text) for text in spec.query_texts]

    candidates = resolve_candidates(tokenizer, contexts, label_lead(spec.template), spec.label_words)

    weights, biases = _head_arrays(model)
    dim = weights.shape[1]
    demo_features = np.zeros((len(demo_renders), dim), dtype=np.float32)
    for i, text in enumerate(demo_renders):
        demo_features[i] = _final_hidden(model, _encode(tokenizer, text), f"demos[{i}]", max_pos)
    query_features = np.zeros((len(contexts), dim), dtype=np.float32)
    for i, ctx in enumerate(contexts):
        query_features[i] = _final_hidden(model, _encode(tokenizer, ctx), f"queries[{i}]", max_pos)

    write_bundle_dir(
        spec.output,
        head_weights=weights,
        head_biases=biases,
        candidates=candidates,
        label_names=spec.label_words,
        demo_features=demo_features,
        query_features=query_features,
        demo_labels=np.array(spec.demo_labels, dtype=np.float64),
        query_labels=None if spec.query_labels is None else np.array(spec.query_labels, dtype=np.float64),
    )

    flags = ()
    if not demo_renders:
        flags = ("no demonstrations: engine-side statistics will fail until demos are added",)
    return ExportReport(
        output=spec.output,
        n_demos=len(demo_renders),
        n_queries=len(contexts),
        candidates=candidates,
        flags=flags,
    )
