"""Bicubic-prefilled input views, materialized by the pipeline CLI."""

from __future__ import annotations

import os

from .data import pipeline_cli


def ensure_prefill_view(root, rate: float) -> str:
    name = f"prefill_{rate:g}"
    manifest = os.path.join(str(root), name, "manifest.jsonl")
    if not os.path.exists(manifest):
        pipeline_cli(["prefill", "--root", root, "--rate", rate, "--out", name])
    return os.path.join(name, "manifest.jsonl")
