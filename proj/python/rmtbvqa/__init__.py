"""Contrastive recurrent-memory video quality pipeline."""

import json
import os

from . import _core
from ._core import (
    Error,
    InvalidArgument,
    __version__,
    embed_frames,
    fractional_ranks,
    lr_at,
    plcc,
    psnr,
    ridge_fit,
    srcc,
)

__all__ = [
    "Error",
    "InvalidArgument",
    "__version__",
    "config",
    "embed_frames",
    "fractional_ranks",
    "lr_at",
    "plcc",
    "psnr",
    "ridge_fit",
    "run_embed",
    "run_evaluate",
    "run_extract",
    "run_label",
    "run_selfcheck",
    "run_synth",
    "run_train",
    "srcc",
]


def config(**overrides):
    """Default run configuration with overrides applied, as a dict."""
    return json.loads(_core.resolve_config(json.dumps(overrides)))


def _cfg(cfg):
    return json.dumps(cfg or {})


def run_synth(out, cfg=None):
    _core.run_synth(_cfg(cfg), os.fspath(out))


def run_extract(videos, out, cfg=None):
    return _core.run_extract(os.fspath(videos), _cfg(cfg), os.fspath(out))


def run_label(manifest, out_manifest, cfg=None):
    return _core.run_label(os.fspath(manifest), _cfg(cfg), os.fspath(out_manifest))


def run_train(manifest, out, cfg=None):
    return _core.run_train(os.fspath(manifest), _cfg(cfg), os.fspath(out))


def run_embed(checkpoint, videos, out, max_frames=0):
    return _core.run_embed(os.fspath(checkpoint), os.fspath(videos), os.fspath(out), max_frames)


def run_evaluate(embeddings, labels, out, cfg=None):
    return _core.run_evaluate(os.fspath(embeddings), os.fspath(labels), _cfg(cfg), os.fspath(out))


def run_selfcheck():
    return _core.run_selfcheck()
