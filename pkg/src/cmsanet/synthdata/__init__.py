from cmsanet.synthdata.dataset import load, serialize
from cmsanet.synthdata.generator import (
    GenConfig,
    Sample,
    Scene,
    SceneObject,
    downsample_mask,
    generate,
    generate_one,
    make_sample,
    match,
    rasterize,
    render,
)
from cmsanet.synthdata.vocab import VOCAB_SIZE, decode, encode, parse

__all__ = [
    "load", "serialize", "GenConfig", "Sample", "Scene", "SceneObject", "downsample_mask",
    "generate", "generate_one", "make_sample", "match", "rasterize", "render",
    "VOCAB_SIZE", "decode", "encode", "parse",
]
