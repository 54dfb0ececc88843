"""Otsu segmentation, crop and centre, 32x32 resize and vectorisation.

Draws a synthetic bright shape on a noisy background, writes each stage as a
PGM into a temporary folder and prints a coarse rendering of the result. Run
with ``python3 demos/image_pipeline.py``.
"""
import tempfile
from pathlib import Path

import numpy as np

from marginkit.imageprep import (GrayImage, crop_and_center, otsu_threshold, resize_to_32, vectorize,
                                 write_pgm)


def main():
    rng = np.random.default_rng(3)
    px = rng.integers(0, 60, size=(90, 120))
    yy, xx = np.mgrid[:90, :120]
    px[((yy - 40) / 25) ** 2 + ((xx - 70) / 15) ** 2 < 1] = 210  # an upright ellipse
    img = GrayImage(px)

    t = otsu_threshold(img)
    cropped = crop_and_center(img, t)
    small = resize_to_32(cropped)
    v = vectorize(small)
    print(f"otsu threshold {t}, cropped to {cropped.width}x{cropped.height}, vector of {v.size}")

    out = Path(tempfile.mkdtemp(prefix="marginkit-"))
    for name, stage in [("original", img), ("cropped", cropped), ("resized", small)]:
        write_pgm(stage, out / f"{name}.pgm")
    print(f"stages written to {out}")
    for row in small.pixels[::2]:
        print("".join("#" if p > 128 else "." for p in row))


if __name__ == "__main__":
    main()
