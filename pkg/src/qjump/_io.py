"""Shared text serialization helpers.

All numeric output uses 17 significant digits so float64 values
round-trip losslessly, and all files use "\n" newlines regardless of
platform so identical runs produce byte-identical files.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np


def fmt(value: float) -> str:
    return "%.17g" % float(value)


def write_lines(path: str, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def density_dump_lines(rho: np.ndarray) -> list[str]:
    """Density dump format: first line "dim d", then d rows of d "re,im" pairs."""
    d = rho.shape[0]
    lines = [f"dim {d}"]
    for row in np.asarray(rho, dtype=np.complex128):
        lines.append(" ".join(f"{fmt(z.real)},{fmt(z.imag)}" for z in row))
    return lines
