import pytest

from dnat.vocab import (
    build_vocabulary,
    decode,
    encode,
    load_vocabulary,
    save_vocabulary,
)


def test_build_specials_first_then_content():
    v = build_vocabulary(["a b", "a"], min_count=1)
    assert v.size == 6
    assert v.tokens == ("[PAD]", "[MASK]", "[SEP]", "[UNK]", "a", "b")
    assert (v.pad_id, v.mask_id, v.sep_id, v.unk_id) == (0, 1, 2, 3)


def test_build_min_count_threshold():
    v = build_vocabulary(["a b", "a"], min_count=2)
    assert v.size == 5
    assert v.tokens[4:] == ("a",)


def test_build_empty_corpus():
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocabulary([])


def test_build_orders_by_count_then_lexicographic():
    v = build_vocabulary(["b b c a a a", "c b"])
    # counts: a=3, b=3, c=2 -> a before b (tie broken lexicographically), then c
    assert v.tokens[4:] == ("a", "b", "c")


def test_build_deterministic():
    lines = ["z q r", "q z", "r r r"]
    assert build_vocabulary(lines).tokens == build_vocabulary(lines).tokens


def test_encode_pads():
    v = build_vocabulary(["a b"])
    assert encode(v, "a b", 4) == [v.id_of("a"), v.id_of("b"), v.pad_id, v.pad_id]


def test_encode_unknown():
    v = build_vocabulary(["a b"])
    assert encode(v, "a z", 2) == [v.id_of("a"), v.unk_id]


def test_encode_truncates():
    v = build_vocabulary(["a b c"])
    assert encode(v, "a b c", 2) == [v.id_of("a"), v.id_of("b")]


def test_decode_strips_specials():
    v = build_vocabulary(["a b"])
    a, b = v.id_of("a"), v.id_of("b")
    assert decode(v, [a, b, v.pad_id, v.pad_id]) == "a b"
    assert decode(v, [v.pad_id, v.pad_id]) == ""
    assert decode(v, [a, v.mask_id, b]) == "a b"


def test_decode_out_of_range():
    v = build_vocabulary(["a"])
    with pytest.raises(ValueError, match="id out of range"):
        decode(v, [v.size])


def test_round_trip():
    v = build_vocabulary(["the cat sat on the mat"])
    for text in ["the cat", "mat on cat the", "sat"]:
        assert decode(v, encode(v, text, 8)) == text


def test_vocab_file_round_trip(tmp_path):
    v = build_vocabulary(["a b c"])
    path = str(tmp_path / "vocab.txt")
    save_vocabulary(v, path)
    assert load_vocabulary(path).tokens == v.tokens
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == "[PAD]" and len(lines) == v.size
