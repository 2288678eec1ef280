import json

import pytest

from tesgan.tokenizer import SPECIAL_TOKENS, BPETokenizer, word_tokens


def test_specials_are_distinct_and_in_vocab(toy_tokenizer):
    ids = {toy_tokenizer.pad_id, toy_tokenizer.cls_id, toy_tokenizer.sep_id}
    assert len(ids) == 3 and max(ids) < toy_tokenizer.vocab_size


def test_encode_never_emits_specials(toy_tokenizer):
    ids = toy_tokenizer.encode("Hello [SEP] there [CLS] friend [PAD]")
    specials = {toy_tokenizer.pad_id, toy_tokenizer.cls_id, toy_tokenizer.sep_id}
    assert ids and not specials & set(ids)


def test_round_trip(toy_tokenizer):
    text = "Where is the library? It is next to the park."
    assert toy_tokenizer.decode(toy_tokenizer.encode(text)) == text
    assert toy_tokenizer.decode([toy_tokenizer.cls_id, *toy_tokenizer.encode("Hi."), toy_tokenizer.sep_id]) == "Hi."


def test_save_load(toy_tokenizer, tmp_path):
    path = tmp_path / "tok.json"
    toy_tokenizer.save(path)
    loaded = BPETokenizer.load(path)
    assert loaded.name == toy_tokenizer.name and loaded.vocab_size == toy_tokenizer.vocab_size
    text = "See you at the station tomorrow."
    assert loaded.encode(text) == toy_tokenizer.encode(text)


def test_from_gpt2_files_appends_specials(tmp_path):
    # byte-level alphabet for "ab" plus one merge, in the GPT-2 file layout
    vocab = {"a": 0, "b": 1, "ab": 2, "Ġ": 3}
    (tmp_path / "vocab.json").write_text(json.dumps(vocab))
    (tmp_path / "merges.txt").write_text("#version: 0.2\na b\n")
    tok = BPETokenizer.from_gpt2_files(tmp_path / "vocab.json", tmp_path / "merges.txt")
    assert tok.vocab_size == len(vocab) + len(SPECIAL_TOKENS)
    assert (tok.pad_id, tok.cls_id, tok.sep_id) == (4, 5, 6)
    assert tok.encode("ab") == [2]


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Hello, world!", ["Hello", ",", "world", "!"]),
        ("I don't know.", ["I", "don't", "know", "."]),
        ("  ", []),
    ],
)
def test_word_tokens(text, expected):
    assert word_tokens(text) == expected
