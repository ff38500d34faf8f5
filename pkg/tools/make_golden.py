#!/usr/bin/env python3
"""Regenerate the committed golden render used by the acceptance suite."""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from acceptance_config import golden_image  # noqa: E402


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden_a3.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    img = golden_image()
    from voxcorr.render import image_to_png_bytes

    out.write_bytes(image_to_png_bytes(img))
    alpha = img[:, :, 3]
    print(f"wrote {out} in {time.time() - t0:.1f}s; "
          f"covered {np.mean(alpha > 0.05) * 100:.1f}% of pixels")


if __name__ == "__main__":
    main()
