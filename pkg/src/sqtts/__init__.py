"""Scalar-quantized speech codec and non-autoregressive latent diffusion TTS."""
from .codec import ScalarCodec, param_count
from .config import (BackboneConfig, CodecConfig, ConditioningConfig, DiffusionConfig, RunConfig)
from .quantizer import (QuantizerConfig, bitrate_bps, deserialize_codes, levels_count, pack_codes,
                        quantize_with_ste, scalar_quantize, serialize_codes, unpack_codes)

__version__ = "0.1.0"
