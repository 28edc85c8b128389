import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _synth import interchangeable_corpus
from tunisent.corpus import Comment, LabeledDataset
from tunisent.embeddings import (
    PAD,
    UNK,
    ContextualProvider,
    DimensionMismatch,
    EmbeddingMatrix,
    EmbeddingSource,
    EmptyCorpus,
    FormatError,
    InvalidHyperparameter,
    ProviderUnavailable,
    Vocabulary,
    WordPieceTokenizer,
    encode_contextual,
    encode_static,
    load_embeddings,
    load_pretrained,
    save_embeddings,
    train_word2vec,
)
from tunisent.textproc import tokenize

WORDS = {"behi": [1.0, 0.0, 0.5, -1.0], "khayeb": [0.0, 2.0, 0.0, 1.0], "3asslema": [0.25, 0.25, 0.25, 0.25]}


def write_text_vectors(path, words=WORDS, header=None):
    dim = len(next(iter(words.values())))
    lines = [header or f"{len(words)} {dim}"]
    lines += [w + " " + " ".join(str(x) for x in v) for w, v in words.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_binary_vectors(path, words=WORDS):
    dim = len(next(iter(words.values())))
    blob = f"{len(words)} {dim}\n".encode()
    for w, v in words.items():
        blob += w.encode() + b" " + struct.pack(f"<{dim}f", *v) + b"\n"
    path.write_bytes(blob)
    return path


# -- vocabulary & static matrices ----------------------------------------------


def test_vocabulary_specials_and_roundtrip(tmp_path):
    vocab = Vocabulary(["behi", "khayeb", "behi"])
    assert len(vocab) == 4
    assert vocab.index("<pad>") == UNK  # literal text never maps to PAD
    assert vocab.index("zzz") == UNK
    vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == vocab


@given(st.lists(st.text(alphabet="abc$'79é", min_size=1), max_size=30))
def test_vocabulary_roundtrip_property(tokens):
    import tempfile
    from pathlib import Path

    vocab = Vocabulary(tokens)
    with tempfile.TemporaryDirectory() as d:
        vocab.save(Path(d) / "v.txt")
        back = Vocabulary.load(Path(d) / "v.txt")
    assert back == vocab
    assert [back.index(t) for t in tokens] == [vocab.index(t) for t in tokens]


def test_load_text_vectors(tmp_path):
    vocab, matrix = load_pretrained(write_text_vectors(tmp_path / "v.txt"))
    assert len(vocab) == 5
    assert matrix.vectors.shape == (5, 4)
    assert not matrix.vectors[PAD].any()
    np.testing.assert_allclose(matrix.vectors[UNK], np.mean(list(WORDS.values()), axis=0), rtol=1e-6)
    np.testing.assert_array_equal(matrix.vectors[vocab.index("khayeb")], WORDS["khayeb"])


def test_load_binary_vectors(tmp_path):
    vocab_t, matrix_t = load_pretrained(write_text_vectors(tmp_path / "v.txt"))
    vocab_b, matrix_b = load_pretrained(write_binary_vectors(tmp_path / "v.bin"))
    assert vocab_b == vocab_t
    np.testing.assert_array_equal(matrix_b.vectors, matrix_t.vectors)
    assert matrix_b.meta["binary"] is True


def test_truncated_text_file(tmp_path):
    path = write_text_vectors(tmp_path / "v.txt", header="5 4")
    with pytest.raises(FormatError):
        load_pretrained(path)


def test_truncated_binary_file(tmp_path):
    path = write_binary_vectors(tmp_path / "v.bin")
    path.write_bytes(path.read_bytes()[:-9])
    with pytest.raises(FormatError):
        load_pretrained(path)


def test_row_length_contradicts_header(tmp_path):
    path = write_text_vectors(tmp_path / "v.txt", header="3 5")
    with pytest.raises(DimensionMismatch):
        load_pretrained(path)


@pytest.mark.parametrize("header", ["", "3", "three 4", "3 0"])
def test_bad_header(tmp_path, header):
    path = tmp_path / "v.txt"
    path.write_text(header + "\nbehi 1 2 3 4\n")
    with pytest.raises(FormatError):
        load_pretrained(path)


def test_save_load_embeddings(tmp_path):
    vocab, matrix = load_pretrained(write_text_vectors(tmp_path / "v.txt"))
    matrix.meta["seed"] = 7
    save_embeddings(tmp_path / "emb", vocab, matrix)
    raw = np.fromfile(tmp_path / "emb" / "matrix.f32", dtype="<f4")
    assert raw.size == 5 * 4
    vocab2, matrix2 = load_embeddings(tmp_path / "emb")
    assert vocab2 == vocab
    np.testing.assert_array_equal(matrix2.vectors, matrix.vectors)
    assert matrix2.meta["seed"] == 7


def test_matrix_rejects_nan():
    with pytest.raises(Exception):
        EmbeddingMatrix(np.array([[0.0, np.nan]]))


# -- encode_static ---------------------------------------------------------------


def test_encode_static_definitional():
    vocab = Vocabulary(["a"])
    enc = encode_static(["a", "zzz"], vocab, None, 4)
    assert enc.indices.tolist() == [vocab.index("a"), UNK, PAD, PAD]
    assert enc.mask.tolist() == [True, True, False, False]


def test_encode_static_truncates():
    vocab = Vocabulary(["a"])
    enc = encode_static(["a"] * 13, vocab, None, 8)
    assert enc.n_real == 8
    assert enc.mask.all()


def test_encode_static_all_oov(tmp_path):
    vocab, matrix = load_pretrained(write_text_vectors(tmp_path / "v.txt"))
    enc = encode_static(tokenize("mchit lel 7ouma"), vocab, matrix, 6)
    unk_row = np.mean(list(WORDS.values()), axis=0)
    expected = np.vstack([unk_row] * 3 + [np.zeros(4)] * 3)
    assert enc.indices.tolist() == [UNK] * 3 + [PAD] * 3
    np.testing.assert_allclose(enc.vectors, expected, rtol=1e-6)


@given(st.lists(st.sampled_from(["behi", "khayeb", "x", "3asslema", "y"]), max_size=20), st.integers(1, 12))
def test_encode_static_mask_property(tokens, max_len):
    vocab = Vocabulary(["behi", "khayeb", "3asslema"])
    matrix = EmbeddingMatrix(np.vstack([np.zeros(3), np.ones((len(vocab) - 1, 3))]))
    enc = encode_static(tokens, vocab, matrix, max_len)
    assert enc.n_real == min(len(tokens), max_len)
    assert (enc.indices[~enc.mask] == PAD).all()
    assert not enc.vectors[~enc.mask].any()
    again = encode_static(tokens, vocab, matrix, max_len)
    assert np.array_equal(again.indices, enc.indices) and np.array_equal(again.vectors, enc.vectors)


# -- word2vec --------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_w2v():
    texts = interchangeable_corpus(n_sentences=2000, seed=3)
    return texts, train_word2vec(texts, dim=32, epochs=3, seed=5)


def test_word2vec_shape_and_rows(small_w2v):
    texts, (vocab, matrix) = small_w2v
    corpus_tokens = {t for s in texts for t in s.split()}
    assert matrix.dim == 32
    assert len(vocab) == len(corpus_tokens) + 2
    assert all(t in vocab for t in corpus_tokens)
    assert np.isfinite(matrix.vectors).all()
    assert not matrix.vectors[PAD].any()


def test_word2vec_self_similarity(small_w2v):
    _, (vocab, matrix) = small_w2v
    v = matrix.vectors[2:]
    cos = np.einsum("ij,ij->i", v, v) / np.linalg.norm(v, axis=1) ** 2
    np.testing.assert_allclose(cos, 1.0, rtol=1e-6)


def test_word2vec_deterministic(small_w2v):
    texts, (vocab, matrix) = small_w2v
    vocab2, matrix2 = train_word2vec(texts, dim=32, epochs=3, seed=5)
    assert vocab2 == vocab
    assert np.array_equal(matrix2.vectors, matrix.vectors)
    _, matrix3 = train_word2vec(texts, dim=32, epochs=3, seed=6)
    assert not np.array_equal(matrix3.vectors, matrix.vectors)


def test_word2vec_min_count():
    vocab, _ = train_word2vec(["a a b", "a c"], dim=4, epochs=1, min_count=2)
    assert "a" in vocab and "b" not in vocab and "c" not in vocab


def test_word2vec_cbow_runs():
    texts = interchangeable_corpus(n_sentences=500, seed=1)
    vocab, matrix = train_word2vec(texts, dim=16, epochs=2, algorithm="cbow")
    assert matrix.vectors.shape == (len(vocab), 16)
    assert np.isfinite(matrix.vectors).all()


def test_word2vec_accepts_dataset():
    ds = LabeledDataset("d", (Comment("1", "behi barcha", "positive"), Comment("2", "khayeb barcha", "negative")))
    vocab, _ = train_word2vec(ds, dim=8, epochs=1)
    assert "barcha" in vocab


def test_word2vec_errors():
    with pytest.raises(EmptyCorpus):
        train_word2vec([], dim=8)
    with pytest.raises(InvalidHyperparameter):
        train_word2vec(["a b"], dim=0)
    with pytest.raises(InvalidHyperparameter):
        train_word2vec(["a b"], algorithm="glove")


# -- contextual ----------------------------------------------------------------


def test_wordpiece_decomposes_unknown_words():
    tok = WordPieceTokenizer(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "bara", "a", "##9", "##r", "##a", "n"])
    assert tok.tokenize("bara") == ["bara"]
    assert tok.tokenize("a9ra") == ["a", "##9", "##r", "##a"]
    # no 'z' at all: the character becomes an unknown piece, the rest still decomposes
    assert tok.tokenize("nza") == ["n", "[UNK]", "##a"]


def test_wordpiece_longest_match_first():
    tok = WordPieceTokenizer(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "ch", "c", "##h", "##ra", "##r", "##a"])
    assert tok.tokenize("chra") == ["ch", "##ra"]


@given(st.text(max_size=60))
def test_wordpiece_total_coverage(text):
    tok = WordPieceTokenizer(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "b", "##a", "##b"])
    groups = tok.tokenize_words(text)
    assert len(groups) == len(text.split())
    assert all(len(g) >= 1 for g in groups)


def test_provider_shapes_both_modes(bert_dir):
    for mode in EmbeddingSource:
        provider = ContextualProvider(bert_dir, mode)
        enc = encode_contextual("enti ghalia benesba liya 😀", provider, max_len=16)
        assert enc.vectors.shape == (16, provider.hidden_dim)
        assert np.isfinite(enc.vectors).all()
        assert not enc.vectors[~enc.mask].any()
        assert enc.indices[0] == provider.tokenizer.vocab["[CLS]"]
        assert enc.indices[enc.n_real - 1] == provider.tokenizer.vocab["[SEP]"]


def test_embedding_layer_mode_is_static_lookup(bert_dir):
    provider = ContextualProvider(bert_dir, EmbeddingSource.EMBEDDING_LAYER_ONLY)
    enc = encode_contextual("bara a9ra", provider, max_len=10)
    table = provider.model.get_input_embeddings().weight.detach().numpy()
    real = enc.mask
    np.testing.assert_array_equal(enc.vectors[real], table[enc.indices[real]])


def test_full_encoder_deterministic(bert_dir):
    provider = ContextualProvider(bert_dir)
    a = encode_contextual("t5afou mnha vamos el curva sud", provider, 24)
    b = encode_contextual("t5afou mnha vamos el curva sud", provider, 24)
    assert np.array_equal(a.vectors, b.vectors)


def test_contextual_truncation_keeps_boundaries(bert_dir):
    provider = ContextualProvider(bert_dir)
    enc = encode_contextual(" ".join(["khayeb"] * 50), provider, 8)
    assert enc.mask.all()
    assert enc.indices[-1] == provider.tokenizer.vocab["[SEP]"]


def test_provider_unavailable(tmp_path, monkeypatch):
    monkeypatch.delenv("TUNISENT_MODEL_DIR", raising=False)
    with pytest.raises(ProviderUnavailable):
        ContextualProvider()
    with pytest.raises(ProviderUnavailable):
        ContextualProvider(tmp_path / "missing")


def test_provider_from_env(bert_dir, monkeypatch):
    monkeypatch.setenv("TUNISENT_MODEL_DIR", str(bert_dir))
    assert ContextualProvider().model_dir == bert_dir
