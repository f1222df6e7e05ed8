import pytest
import torch

from stylizer_bridge.features import (
    BuiltinFeatures,
    FeatureUnavailable,
    gram,
    make_features,
    weighted_gram_loss,
)


def test_builtin_deterministic():
    img = torch.rand(1, 3, 20, 20, generator=torch.Generator().manual_seed(0))
    a = BuiltinFeatures()(img)
    b = BuiltinFeatures()(img)
    assert len(a) == len(b) == 3
    for fa, fb in zip(a, b):
        assert torch.equal(fa, fb)


def test_builtin_scales_and_shapes():
    img = torch.rand(1, 3, 32, 48)
    feats = BuiltinFeatures()(img)
    assert [f.shape for f in feats] == [
        torch.Size([1, 8, 32, 48]),
        torch.Size([1, 8, 16, 24]),
        torch.Size([1, 8, 8, 12]),
    ]


def test_builtin_constant_image_constant_features():
    img = torch.full((1, 3, 16, 16), 0.5)
    for layer in BuiltinFeatures()(img):
        flat = layer.reshape(layer.shape[1], -1)
        assert torch.allclose(flat, flat[:, :1].expand_as(flat), atol=1e-6)


def test_gram_normalization():
    fm = torch.full((1, 2, 3, 3), 2.0)
    g = gram(fm)
    assert g.shape == (2, 2)
    assert torch.allclose(g, torch.full((2, 2), 4.0 / 2.0))


def test_loss_zero_when_target_matches():
    img = torch.rand(1, 3, 16, 16)
    feats = BuiltinFeatures()
    grams = [gram(f) for f in feats(img)]
    loss = weighted_gram_loss(feats(img), grams, grams, 0.3)
    assert float(loss) == 0.0


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        make_features("resnet")


def test_vgg19_loads_or_fails_actionably():
    try:
        feats = make_features("vgg19")
    except FeatureUnavailable as exc:
        message = str(exc)
        assert "builtin" in message
        assert "BRIDGE_VGG19_WEIGHTS" in message
    else:
        out = feats(torch.rand(1, 3, 64, 64))
        assert len(out) == 4
        assert out[0].shape[1] == 64  # relu1_2 channels
