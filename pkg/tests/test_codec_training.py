import copy
import csv

import numpy as np
import pytest
import torch

from sqtts.codec import ScalarCodec
from sqtts.codec_training import (CodecTrainer, MultiScaleDiscriminator, NonFiniteLossError,
                                  adversarial_losses, discriminator_scores, fit_codec,
                                  reconstruction_loss, train_codec_step)
from sqtts.config import CodecConfig, CodecTrainConfig, DiscriminatorConfig
from sqtts.synthetic import toy_corpus

TINY_CODEC = CodecConfig(base_channels=2, max_channels=8)
TINY_DISC = DiscriminatorConfig(channels=2, max_channels=8, num_layers=2)


def tiny_trainer(seed=0, **overrides):
    torch.manual_seed(seed)
    cfg = CodecTrainConfig(batch_size=2, segment_length=1280, stft_windows=(256, 512), adv_warmup_steps=2, **overrides)
    return CodecTrainer(ScalarCodec(TINY_CODEC), MultiScaleDiscriminator(TINY_DISC), cfg, seed=seed)


@pytest.fixture(scope="module")
def clips():
    return toy_corpus(4, 0.25)


def test_reconstruction_identity_and_offset():
    x = torch.randn(2, 4096)
    l1, st = reconstruction_loss(x, x.clone())
    assert l1.item() == 0 and st.item() == 0
    l1, _ = reconstruction_loss(torch.zeros(1, 4096), torch.full((1, 4096), 0.5))
    assert l1.item() == pytest.approx(0.5)


def test_reconstruction_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        reconstruction_loss(torch.zeros(1, 100), torch.zeros(1, 101))


def test_phase_shift_invisible_to_single_window_stft():
    n, k0 = 1024, 37
    t = np.arange(n)
    x = np.sin(2 * np.pi * k0 * t / n)
    y = np.sin(2 * np.pi * k0 * t / n + 1.0)
    # oracle: periodic-Hann DFT magnitudes of an on-bin sinusoid do not depend on phase
    w = np.hanning(n + 1)[:-1]
    np.testing.assert_allclose(np.abs(np.fft.rfft(x * w)), np.abs(np.fft.rfft(y * w)), atol=1e-9)
    l1, st = reconstruction_loss(torch.tensor(x)[None], torch.tensor(y)[None], stft_windows=(1024,))
    assert l1.item() > 0.1
    assert st.item() < 1e-12


def test_short_signals_padded_for_stft():
    x = torch.randn(1, 300)
    _, st = reconstruction_loss(x, x * 0.5, stft_windows=(512, 1024))
    assert st.item() > 0


def test_discriminator_scales():
    disc = MultiScaleDiscriminator(DiscriminatorConfig(channels=4, max_channels=16))
    x = torch.randn(2, 8000)
    scores = discriminator_scores(x, disc)
    assert len(scores) == 3
    lengths = [s.shape[-1] for s in scores]
    assert lengths[0] > lengths[1] > lengths[2]
    again = discriminator_scores(x, disc)
    assert all(torch.equal(a, b) for a, b in zip(scores, again))


def test_adversarial_losses_examples():
    ones = [torch.ones(2, 5), torch.ones(2, 3)]
    _, adv_d = adversarial_losses(ones, [-o for o in ones])
    assert adv_d.item() == 0
    zeros = [torch.zeros(2, 5), torch.zeros(2, 3)]
    adv_g, adv_d = adversarial_losses(zeros, zeros)
    assert adv_d.item() == 2 and adv_g.item() == 0
    gs = [adversarial_losses(zeros, [z + v for z in zeros])[0].item() for v in (-1.0, 0.0, 0.5, 2.0)]
    assert gs == sorted(gs, reverse=True)


def test_train_step_report(clips):
    tr = tiny_trainer()
    rep = train_codec_step(tr.sample_batch(clips), tr)
    values = [rep.l1_time, rep.stft_mse, rep.adv_g, rep.adv_d, rep.total_g]
    assert all(np.isfinite(values))
    assert rep.l1_time >= 0 and rep.stft_mse >= 0
    assert tr.step_count == 1


def test_encoder_receives_gradient(clips):
    tr = tiny_trainer()
    tr.train_step(tr.sample_batch(clips))
    grads = [p.grad for p in tr.codec.encoder.parameters()]
    assert all(g is not None for g in grads)
    assert sum(g.abs().sum().item() for g in grads) > 0


def test_optimizers_do_not_share_parameters():
    tr = tiny_trainer()
    g_ids = {id(p) for group in tr.opt_g.param_groups for p in group["params"]}
    d_ids = {id(p) for group in tr.opt_d.param_groups for p in group["params"]}
    assert not g_ids & d_ids
    assert g_ids == {id(p) for p in tr.codec.parameters()}


@pytest.mark.parametrize("frozen", ["disc", "codec"])
def test_updates_are_isolated(clips, frozen):
    tr = tiny_trainer()
    for _ in range(2):
        tr.train_step(tr.sample_batch(clips))  # past warm-up: adversarial term active
    assert tr.adversarial_active()
    opt = tr.opt_d if frozen == "disc" else tr.opt_g
    module = tr.disc if frozen == "disc" else tr.codec
    for group in opt.param_groups:
        group["lr"] = 0.0
    before = copy.deepcopy(module.state_dict())
    other = tr.codec if frozen == "disc" else tr.disc
    other_before = copy.deepcopy(other.state_dict())
    tr.train_step(tr.sample_batch(clips))
    assert all(torch.equal(before[k], v) for k, v in module.state_dict().items())
    assert any(not torch.equal(other_before[k], v) for k, v in other.state_dict().items())


def test_zero_adversarial_weight_is_pure_reconstruction(clips):
    a = tiny_trainer(w_adv=0.0)
    b_codec = copy.deepcopy(a.codec)
    batch = a.sample_batch(clips)
    a.train_step(batch)

    opt = torch.optim.Adam(b_codec.parameters(), lr=a.config.lr)
    y, _ = b_codec(batch)
    l1, st = reconstruction_loss(batch, y, a.config.stft_windows)
    opt.zero_grad()
    (l1 + st).backward()
    opt.step()
    for (name, p), q in zip(a.codec.named_parameters(), b_codec.parameters()):
        assert torch.equal(p, q), name


def test_nan_batch_aborts_without_update(clips):
    tr = tiny_trainer()
    before = copy.deepcopy(tr.codec.state_dict())
    disc_before = copy.deepcopy(tr.disc.state_dict())
    batch = tr.sample_batch(clips)
    batch[0, 10] = float("nan")
    with pytest.raises((NonFiniteLossError, ValueError)):
        tr.train_step(batch)
    assert all(torch.equal(before[k], v) for k, v in tr.codec.state_dict().items())
    assert all(torch.equal(disc_before[k], v) for k, v in tr.disc.state_dict().items())
    assert tr.step_count == 0


def test_same_seed_same_losses(clips):
    runs = []
    for _ in range(2):
        tr = tiny_trainer(seed=7)
        runs.append([r.total_g for r in fit_codec(tr, clips, 10)])
    assert runs[0] == runs[1]


def test_resume_reproduces_trajectory(clips, tmp_path):
    full = tiny_trainer(seed=3)
    ref = [r.total_g for r in fit_codec(full, clips, 6)]

    first = tiny_trainer(seed=3)
    head = [r.total_g for r in fit_codec(first, clips, 3)]
    path = tmp_path / "state.pt"
    torch.save(first.state_dict(), path)
    resumed = tiny_trainer(seed=99)
    resumed.load_state_dict(torch.load(path, weights_only=True))
    tail = [r.total_g for r in fit_codec(resumed, clips, 3)]
    np.testing.assert_allclose(head + tail, ref, atol=1e-6, rtol=0)


def test_loss_csv(clips, tmp_path):
    tr = tiny_trainer()
    path = tmp_path / "loss.csv"
    fit_codec(tr, clips, 3, log_path=path)
    fit_codec(tr, clips, 2, log_path=path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["step", "l1_time", "stft_mse", "adv_g", "adv_d", "total_g"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3, 4, 5]


def test_losses_finite_over_1000_toy_steps(clips):
    tr = tiny_trainer(seed=1)
    tr.config.segment_length = 640
    reports = fit_codec(tr, clips, 1000)
    assert all(np.isfinite([r.total_g, r.adv_d]).all() for r in reports)
