import pytest
import torch

from sqtts.backbone import DiffusionTransformer, embed_timestep
from sqtts.codec import param_count
from sqtts.conditioning import ConditionBatch
from sqtts.config import BackboneConfig

D_LAT, C = 8, 16
CFG = BackboneConfig(num_layers=2, num_heads=4, model_dim=32, max_positions=256)


def make_model(cfg=CFG, seed=0):
    torch.manual_seed(seed)
    return DiffusionTransformer(cfg, D_LAT, C).eval()


def make_cond(batch, text_len, gen=None, requires_grad=False):
    gen = gen or torch.Generator().manual_seed(1)
    cond = ConditionBatch(
        text=torch.randn(batch, text_len, C, generator=gen),
        text_lengths=torch.full((batch,), text_len),
        speaker=torch.randn(batch, C, generator=gen),
        timing=torch.randn(batch, C, generator=gen),
    )
    if requires_grad:
        for name in ("text", "speaker", "timing"):
            getattr(cond, name).requires_grad_(True)
    return cond


@pytest.mark.parametrize("cond_len", [1, 5, 40])
@pytest.mark.parametrize("frames", [1, 13])
def test_output_shape_matches_latents(cond_len, frames):
    model = make_model()
    x = torch.randn(2, frames, D_LAT)
    with torch.no_grad():
        out = model(x, torch.tensor([3, 700]), make_cond(2, cond_len))
    assert out.shape == x.shape
    assert out.abs().max() <= 1


@pytest.mark.parametrize("field", ["text", "speaker", "timing"])
def test_every_condition_path_is_live(field):
    model = make_model()
    x = torch.randn(1, 6, D_LAT)
    cond = make_cond(1, 5)
    with torch.no_grad():
        base = model(x, torch.tensor([50]), cond)
        getattr(cond, field).data[0].add_(1.0) if field != "text" else cond.text[0, 2].add_(1.0)
        moved = model(x, torch.tensor([50]), cond)
    assert not torch.allclose(base, moved)


def test_timestep_changes_output():
    model = make_model()
    x, cond = torch.randn(1, 6, D_LAT), make_cond(1, 5)
    with torch.no_grad():
        assert not torch.allclose(model(x, torch.tensor([1]), cond), model(x, torch.tensor([900]), cond))


def test_gradients_reach_condition_embeddings():
    model = make_model()
    model.train()
    cond = make_cond(3, 7, requires_grad=True)
    x0 = torch.randint(-9, 10, (3, 10, D_LAT)).float() / 9
    x_t = x0 + torch.randn_like(x0)
    loss = ((model(x_t, torch.tensor([5, 100, 800]), cond) - x0) ** 2).mean()
    loss.backward()
    for name in ("text", "speaker", "timing"):
        assert getattr(cond, name).grad.norm() > 0, name


def test_padding_does_not_leak():
    """A short-text sample padded inside a batch gives the same output as alone."""
    model = make_model()
    gen = torch.Generator().manual_seed(2)
    short = make_cond(1, 3, gen)
    long = make_cond(1, 9, gen)
    batch = ConditionBatch(
        text=torch.cat([torch.nn.functional.pad(short.text, (0, 0, 0, 6), value=7.0), long.text]),
        text_lengths=torch.tensor([3, 9]),
        speaker=torch.cat([short.speaker, long.speaker]),
        timing=torch.cat([short.timing, long.timing]),
        latent_lengths=torch.tensor([4, 6]),
    )
    x = torch.randn(2, 6, D_LAT, generator=gen)
    x[0, 4:] = 50.0  # padded latent frames of sample 0
    with torch.no_grad():
        out = model(x, torch.tensor([10, 10]), batch)
        alone_short = model(x[:1, :4], torch.tensor([10]), short)
        alone_long = model(x[1:], torch.tensor([10]), long)
    torch.testing.assert_close(out[0, :4], alone_short[0], atol=1e-5, rtol=1e-5)
    torch.testing.assert_close(out[1], alone_long[0], atol=1e-5, rtol=1e-5)


def test_permutation_equivariance_without_positions():
    model = make_model()
    with torch.no_grad():
        model.pos.weight.zero_()
        x, cond = torch.randn(1, 10, D_LAT), make_cond(1, 4)
        perm = torch.randperm(10, generator=torch.Generator().manual_seed(0))
        out = model(x, torch.tensor([20]), cond)
        out_perm = model(x[:, perm], torch.tensor([20]), cond)
    torch.testing.assert_close(out_perm[:, torch.argsort(perm)], out, atol=1e-5, rtol=1e-5)


def test_full_attention_sees_future_but_causal_flag_does_not():
    x, cond = torch.randn(1, 8, D_LAT), make_cond(1, 3)
    x2 = x.clone()
    x2[0, 6] += 3.0
    for causal in (False, True):
        cfg = BackboneConfig(num_layers=2, num_heads=4, model_dim=32, max_positions=256, use_causal_mask=causal)
        model = make_model(cfg)
        with torch.no_grad():
            a, b = model(x, torch.tensor([9]), cond), model(x2, torch.tensor([9]), cond)
        assert torch.allclose(a[0, :6], b[0, :6]) == causal


def test_input_validation():
    model = make_model()
    with pytest.raises(ValueError, match="latent width"):
        model(torch.randn(1, 4, D_LAT + 1), torch.tensor([1]), make_cond(1, 2))
    bad = make_cond(1, 2)
    bad.text = torch.randn(1, 2, C + 1)
    with pytest.raises(ValueError, match="condition width"):
        model(torch.randn(1, 4, D_LAT), torch.tensor([1]), bad)
    with pytest.raises(ValueError, match="batch"):
        model(torch.randn(2, 4, D_LAT), torch.tensor([1, 1]), make_cond(1, 2))
    with pytest.raises(ValueError, match="max_positions"):
        model(torch.randn(1, 250, D_LAT), torch.tensor([1]), make_cond(1, 10))


def test_timestep_embedding_properties():
    t = torch.arange(0, 1001)
    e = embed_timestep(t, 128)
    assert torch.isfinite(e).all()
    assert torch.equal(e, embed_timestep(t, 128))
    dist = torch.cdist(e.double(), e.double())
    dist.fill_diagonal_(float("inf"))
    assert dist.min() > 1e-3


def _expected_params(D, layers, d, c, positions, mlp=4):
    per_block = 2 * D + (3 * D * D + 3 * D) + (D * D + D) + 2 * D + (mlp * D * D + mlp * D) + (mlp * D * D + D)
    return (2 * (D * D + D) + (c * D + D) + (d * D + D) + positions * D
            + layers * per_block + 2 * D + (D * d + d))


def test_default_param_count():
    cfg = BackboneConfig()
    assert (cfg.num_layers, cfg.num_heads, cfg.model_dim) == (12, 8, 768)
    counts = {param_count(DiffusionTransformer(cfg, 32, 256)) for _ in range(2)}
    expected = _expected_params(768, 12, 32, 256, cfg.max_positions)
    assert counts == {expected}
    assert 85e6 < expected < 95e6
