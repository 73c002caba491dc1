"""Helpers shared by the experiment scripts."""

from __future__ import annotations

import argparse
import dataclasses
from pathlib import Path


def parse_config(cls, description: str):
    """Expose every dataclass field of ``cls`` as a ``--flag`` and build an instance."""
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            parser.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"),
                                default=default)
        elif isinstance(default, tuple):
            kind = type(default[0]) if default else float
            parser.add_argument(flag, type=lambda s, k=kind: tuple(k(v) for v in s.split(",")),
                                default=default, help="comma list")
        else:
            parser.add_argument(flag, type=type(default), default=default)
    ns = parser.parse_args()
    return cls(**vars(ns))


def out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
