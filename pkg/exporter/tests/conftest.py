"""Session fixtures: a tiny randomly initialized causal LM with a word-level
tokenizer, both saved locally so no test touches the network."""

import json
import os

os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")

import pytest

TEMPLATE = "review : {Sentence} sentiment : {Label}"
LABEL_WORDS = ["negative", "positive"]
SEPARATOR = "\n"

DEMOS = [
    ("the movie was great fun", "positive"),
    ("the acting felt awful and flat", "negative"),
    ("a superb and moving story", "positive"),
    ("a dull and tedious mess", "negative"),
]

QUERIES = [
    ("great story and fine acting", "positive"),
    ("a tedious and dull film", "negative"),
    ("the cast was superb", "positive"),
    ("flat characters and a weak plot", "negative"),
    ("moving scenes with great music", "positive"),
    ("the plot was a mess", "negative"),
    ("fine direction and a warm story", "positive"),
    ("awful pacing spoiled the film", "negative"),
    ("a fun and clever script", "positive"),
    ("weak dialogue and dull scenes", "negative"),
    ("clever twists kept the story moving", "positive"),
    ("the music felt flat", "negative"),
    ("warm acting carried the film", "positive"),
    ("a weak and tedious script", "negative"),
    ("superb direction with clever scenes", "positive"),
    ("the dialogue was awful", "negative"),
]

# multi-token on purpose: the single-token invariant must reject it by name
BAD_LABEL = "very good"


def _corpus_vocab():
    from tokenizers.pre_tokenizers import Whitespace

    pre = Whitespace()
    pieces = set()
    strings = [TEMPLATE, BAD_LABEL, *LABEL_WORDS]
    strings += [t for t, _ in DEMOS] + [t for t, _ in QUERIES]
    for s in strings:
        for piece, _ in pre.pre_tokenize_str(s):
            pieces.add(piece)
    pieces -= {"{Sentence}", "{Label}"}
    vocab = {"[UNK]": 0}
    for piece in sorted(pieces):
        vocab[piece] = len(vocab)
    return vocab


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    path = tmp_path_factory.mktemp("tinylm")
    vocab = _corpus_vocab()
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="[UNK]")
    fast.save_pretrained(str(path))

    torch.manual_seed(0)
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=512,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=0,
        eos_token_id=0,
    )
    GPT2LMHeadModel(config).save_pretrained(str(path))
    return str(path)


def spec_dict(model_dir, output, **overrides):
    raw = {
        "model": model_dir,
        "template": TEMPLATE,
        "separator": SEPARATOR,
        "label_words": list(LABEL_WORDS),
        "demos": [{"text": t, "label": lab} for t, lab in DEMOS],
        "queries": [{"text": t, "label": lab} for t, lab in QUERIES],
        "output": str(output),
    }
    raw.update(overrides)
    return raw


@pytest.fixture
def write_spec(tmp_path):
    def _write(raw, name="spec.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw))
        return str(path)

    return _write
