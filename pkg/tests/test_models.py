import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from _gradcheck import max_relative_error
from tunisent.embeddings import SequenceEncoding
from tunisent.models import (
    BiLstmConfig,
    CnnConfig,
    DimensionMismatch,
    InvalidConfig,
    build_bilstm,
    build_cnn,
    expected_parameter_count,
    load_classifier,
    parameter_count,
    predict,
    save_classifier,
)


def tiny_cnn(seed=0):
    return build_cnn(CnnConfig((2,), 3, dropout_rate=0.0), 4, seed=seed).double().eval()


def tiny_bilstm(seed=0):
    return build_bilstm(BiLstmConfig(4, dropout_rate=0.0), 4, seed=seed).double().eval()


def random_batch(gen, batch=3, length=7, dim=4, dtype=torch.float64):
    vectors = torch.randn(batch, length, dim, generator=gen, dtype=dtype)
    lengths = torch.randint(1, length + 1, (batch,), generator=gen)
    mask = torch.arange(length).unsqueeze(0) < lengths.unsqueeze(1)
    vectors = vectors * mask.unsqueeze(-1)
    targets = torch.randint(0, 2, (batch,), generator=gen)
    return vectors, mask, targets


def encoding(vectors, n_real):
    mask = np.zeros(len(vectors), bool)
    mask[:n_real] = True
    return SequenceEncoding(np.where(mask, 2, 0), mask, vectors * mask[:, None])


@pytest.mark.parametrize("filters, pooled", [(200, 600), (100, 300)])
def test_cnn_feature_length(filters, pooled):
    model = build_cnn(CnnConfig((3, 4, 5), filters), 300, max_len=64, seed=1)
    assert model.feature_dim == pooled
    assert model.output.out_features == 2


def test_bilstm_feature_length():
    assert build_bilstm(BiLstmConfig(128), 300).feature_dim == 256


@pytest.mark.parametrize("build", [lambda s: build_cnn(CnnConfig(), 20, seed=s), lambda s: build_bilstm(BiLstmConfig(8), 20, seed=s)])
def test_init_deterministic(build):
    a, b, c = build(3), build(3), build(4)
    for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb and torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.state_dict().values(), c.state_dict().values()))


def test_init_leaves_global_rng_alone():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    build_cnn(CnnConfig(), 10, seed=9)
    assert torch.equal(torch.rand(3), expected)


@pytest.mark.parametrize(
    "config, max_len",
    [
        (CnnConfig(()), None),
        (CnnConfig((0, 3)), None),
        (CnnConfig((3, 9)), 8),
        (CnnConfig(filters_per_width=0), None),
        (CnnConfig(dropout_rate=1.0), None),
        (CnnConfig(activation="gelu"), None),
    ],
)
def test_invalid_cnn_config(config, max_len):
    with pytest.raises(InvalidConfig):
        build_cnn(config, 4, max_len)


def test_invalid_bilstm_config():
    with pytest.raises(InvalidConfig):
        build_bilstm(BiLstmConfig(0), 4)


@pytest.mark.parametrize(
    "arch, config, dim",
    [("cnn", CnnConfig((3, 4, 5), 200), 300), ("cnn", CnnConfig((2,), 3), 4), ("bilstm", BiLstmConfig(128), 300), ("bilstm", BiLstmConfig(4), 4)],
)
def test_parameter_count_formula(arch, config, dim):
    model = build_cnn(config, dim) if arch == "cnn" else build_bilstm(config, dim)
    assert parameter_count(model) == expected_parameter_count(arch, config, dim)
    assert model.output.in_features == (len(config.filter_widths) * config.filters_per_width if arch == "cnn" else 2 * config.hidden_size)


def test_zero_output_layer_gives_half():
    model = build_cnn(CnnConfig((2,), 3), 4)
    with torch.no_grad():
        model.output.weight.zero_()
        model.output.bias.zero_()
    p = predict(model, encoding(np.random.default_rng(0).normal(size=(6, 4)).astype(np.float32), 4))
    assert p == (0.5, 0.5)


def test_predict_dimension_mismatch():
    model = build_cnn(CnnConfig((2,), 3), 4)
    with pytest.raises(DimensionMismatch):
        predict(model, encoding(np.zeros((6, 5), np.float32), 3))


@pytest.mark.parametrize("make", [tiny_cnn, tiny_bilstm])
def test_gradients_match_finite_differences(make):
    gen = torch.Generator().manual_seed(0)
    model = make()
    for _ in range(3):
        vectors, mask, targets = random_batch(gen)
        assert max_relative_error(model, vectors, mask, targets) <= 1e-4


@pytest.mark.parametrize("make", [tiny_cnn, tiny_bilstm])
def test_padding_invariance(make):
    gen = torch.Generator().manual_seed(1)
    model = make()
    vectors, mask, _ = random_batch(gen, batch=8)
    longer = torch.cat([vectors, torch.zeros(8, 9, 4, dtype=vectors.dtype)], 1)
    longer_mask = torch.cat([mask, torch.zeros(8, 9, dtype=torch.bool)], 1)
    assert torch.allclose(model.predict_proba(vectors, mask), model.predict_proba(longer, longer_mask), atol=1e-6, rtol=0)


def test_cnn_ignores_garbage_in_padding():
    gen = torch.Generator().manual_seed(2)
    model = tiny_cnn()
    vectors, mask, _ = random_batch(gen, batch=4)
    noisy = vectors + torch.randn(vectors.shape, generator=gen, dtype=vectors.dtype) * (~mask).unsqueeze(-1)
    assert torch.allclose(model.predict_proba(vectors, mask), model.predict_proba(noisy, mask), atol=1e-12)


def test_short_and_empty_inputs():
    model = build_cnn(CnnConfig((3, 4, 5), 5), 4, max_len=8).eval()
    vectors = torch.randn(2, 8, 4)
    mask = torch.zeros(2, 8, dtype=torch.bool)
    mask[0, 0] = True
    probs = model.predict_proba(vectors, mask)
    assert torch.isfinite(probs).all()
    assert torch.allclose(probs.sum(1), torch.ones(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 12))
def test_softmax_normalized(seed, length):
    gen = torch.Generator().manual_seed(seed)
    for model in (build_cnn(CnnConfig((2, 3), 4), 6, seed=seed), build_bilstm(BiLstmConfig(5), 6, seed=seed)):
        vectors, mask, _ = random_batch(gen, batch=4, length=length, dim=6, dtype=torch.float32)
        p = model.predict_proba(vectors, mask)
        assert ((p >= 0) & (p <= 1)).all()
        assert torch.allclose(p.sum(1), torch.ones(4), atol=1e-6)


def test_predict_is_deterministic_with_dropout():
    model = build_cnn(CnnConfig((2,), 8, dropout_rate=0.5), 4)
    model.train()
    enc = encoding(np.random.default_rng(1).normal(size=(6, 4)).astype(np.float32), 5)
    assert predict(model, enc) == predict(model, enc)
    assert model.training  # caller's mode is restored


def test_overfit_single_example():
    enc = encoding(np.random.default_rng(4).normal(size=(10, 8)).astype(np.float32), 6)
    for model in (build_cnn(CnnConfig((2, 3), 8), 8, seed=0), build_bilstm(BiLstmConfig(8), 8, seed=0)):
        opt = torch.optim.Adam(model.parameters(), lr=1e-2)
        vectors = torch.from_numpy(enc.vectors).unsqueeze(0)
        mask = torch.from_numpy(enc.mask).unsqueeze(0)
        target = torch.tensor([0])
        model.train()
        for _ in range(200):
            opt.zero_grad()
            torch.nn.functional.cross_entropy(model(vectors, mask), target).backward()
            opt.step()
        p_neg, p_pos = predict(model, enc)
        assert p_neg > p_pos


@pytest.mark.parametrize("make", [lambda: build_cnn(CnnConfig((2, 3), 4), 6, seed=5), lambda: build_bilstm(BiLstmConfig(3), 6, seed=5)])
def test_checkpoint_roundtrip(tmp_path, make):
    model = make().eval()
    save_classifier(model, tmp_path / "ckpt", max_len=12, training={"epochs": 3})
    loaded, info = load_classifier(tmp_path / "ckpt")
    assert info.architecture == model.architecture and info.max_len == 12 and info.training == {"epochs": 3}
    blob = np.fromfile(tmp_path / "ckpt" / "params.f32", dtype="<f4")
    assert blob.size == parameter_count(model)
    vectors = torch.randn(2, 12, 6)
    mask = torch.ones(2, 12, dtype=torch.bool)
    assert torch.equal(model.predict_proba(vectors, mask), loaded.predict_proba(vectors, mask))
