import pytest

from sqtts.config import (BackboneConfig, CodecConfig, CodecTrainConfig, ConditioningConfig, DiffusionConfig,
                          DiscriminatorConfig, RunConfig, TTSTrainConfig)


def tiny_config(seed: int = 0) -> RunConfig:
    """Smallest end-to-end configuration; seconds per command on one core."""
    return RunConfig(
        codec=CodecConfig(base_channels=2, max_channels=8),
        discriminator=DiscriminatorConfig(channels=2, max_channels=8, num_layers=2),
        codec_train=CodecTrainConfig(batch_size=2, segment_length=1280, stft_windows=[256, 512],
                                     adv_warmup_steps=1, steps=3, checkpoint_every=2),
        backbone=BackboneConfig(num_layers=1, num_heads=2, model_dim=16, max_positions=512),
        conditioning=ConditioningConfig(cond_dim=16, text_layers=1, text_heads=2),
        diffusion=DiffusionConfig(num_inference_steps=5),
        tts_train=TTSTrainConfig(lr=1e-3, batch_size=2, steps=2),
        seed=seed,
    )


@pytest.fixture
def tiny():
    return tiny_config()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
