import numpy as np
import pytest
import torch

from sqtts.codec import ScalarCodec, channel_schedule, param_count
from sqtts.config import CodecConfig
from sqtts.quantizer import on_lattice

TOY = CodecConfig(base_channels=4, max_channels=32)


@pytest.fixture(scope="module")
def toy_codec():
    torch.manual_seed(0)
    return ScalarCodec(TOY).eval()


def test_default_frame_arithmetic():
    cfg = CodecConfig()
    assert cfg.hop_length == 320
    assert cfg.frame_rate == 50.0


@pytest.mark.parametrize("n,frames", [(16000, 50), (32000, 100), (320, 1), (16319, 50)])
def test_encode_shape_and_lattice(toy_codec, n, frames):
    with torch.no_grad():
        q = toy_codec.encode(torch.randn(n) * 0.3)
    assert q.shape == (frames, 32)
    assert on_lattice(q, TOY.quantizer).all()


def test_encode_batched(toy_codec):
    with torch.no_grad():
        q = toy_codec.encode(torch.randn(3, 6400))
    assert q.shape == (3, 20, 32)


def test_encode_rejects_short(toy_codec):
    with pytest.raises(ValueError, match="at least one frame"):
        toy_codec.encode(torch.randn(319))


@pytest.mark.parametrize("frames", [50, 1])
def test_decode_length(toy_codec, frames):
    with torch.no_grad():
        wav = toy_codec.decode(torch.zeros(frames, 32))
    assert wav.shape == (frames * 320,)
    assert torch.isfinite(wav).all()


def test_decode_rejects_wrong_width(toy_codec):
    with pytest.raises(ValueError, match="latent width"):
        toy_codec.decode(torch.zeros(5, 16))


def test_roundtrip_length(toy_codec):
    x = torch.randn(2, 320 * 7)
    with torch.no_grad():
        y, _ = toy_codec(x)
    assert y.shape == x.shape


def test_encoder_causal(toy_codec):
    x = torch.randn(320 * 10) * 0.3
    with torch.no_grad():
        h = toy_codec.encoder(x[None, None])
        x2 = x.clone()
        x2[320 * 4 :] += torch.randn(320 * 6)
        h2 = toy_codec.encoder(x2[None, None])
    # frames 0..3 only see samples < 4 * 320
    assert torch.equal(h[..., :4], h2[..., :4])
    assert not torch.equal(h[..., 4:], h2[..., 4:])


def test_decoder_causal(toy_codec):
    q = torch.zeros(8, 32)
    q2 = q.clone()
    q2[5:] = 1.0
    with torch.no_grad():
        a, b = toy_codec.decode(q), toy_codec.decode(q2)
    assert torch.equal(a[: 5 * 320], b[: 5 * 320])


def test_deterministic():
    torch.manual_seed(3)
    a = ScalarCodec(TOY).eval()
    torch.manual_seed(3)
    b = ScalarCodec(TOY).eval()
    x = torch.randn(3200)
    with torch.no_grad():
        assert torch.equal(a(x)[0], b(x)[0])


def _expected_params(cfg: CodecConfig) -> int:
    """Independent count from layer shapes (weights + biases)."""
    c = channel_schedule(cfg)
    k = cfg.kernel_size
    total = (1 * c[0] * k + c[0]) + (c[-1] * cfg.d + cfg.d)  # encoder stem + projection
    total += (cfg.d * c[-1] * k + c[-1]) + (c[0] * k + 1)  # decoder projection + head
    for i, s in enumerate(cfg.strides):
        res = 2 * (c[i] * c[i] * k + c[i])
        total += res + (c[i] * c[i + 1] * 2 * s + c[i + 1])  # encoder block
        total += res + (c[i + 1] * c[i] * 2 * s + c[i])  # decoder block
    return total


@pytest.mark.parametrize("cfg", [CodecConfig(), TOY, CodecConfig(base_channels=8, max_channels=128)])
def test_param_count_matches_layer_sum(cfg):
    assert param_count(ScalarCodec(cfg)) == _expected_params(cfg)


def test_param_count_bands():
    default = param_count(ScalarCodec(CodecConfig()))
    assert 3e6 <= default <= 8e6
    half = param_count(ScalarCodec(CodecConfig(base_channels=8, max_channels=256)))
    assert half < default
    assert param_count(ScalarCodec(TOY)) < 1e6


def test_strides_validated():
    with pytest.raises(ValueError):
        CodecConfig(strides=(2, 0, 4))
