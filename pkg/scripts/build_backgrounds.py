"""Cut the background patches vendored under src/scenechar/data/backgrounds.

Crops come from scikit-image's bundled sample images (public domain / CC0,
see the scikit-image data README). Two disjoint sets are produced: ``train``
for the default engine and ``scene`` for the scene-like engine.

    python scripts/build_backgrounds.py src/scenechar/data/backgrounds
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

PATCH = 96

# (set, sample name, top, left, crop size)
CROPS = [
    ("train", "astronaut", 20, 300, 192),
    ("train", "astronaut", 300, 40, 192),
    ("train", "coffee", 100, 200, 192),
    ("train", "coffee", 10, 380, 192),
    ("train", "rocket", 200, 30, 192),
    ("train", "rocket", 40, 420, 192),
    ("train", "brick", 100, 100, 192),
    ("train", "grass", 250, 250, 192),
    ("train", "retina", 500, 500, 384),
    ("train", "coins", 80, 150, 192),
    ("scene", "chelsea", 60, 60, 192),
    ("scene", "chelsea", 90, 240, 192),
    ("scene", "hubble_deep_field", 200, 300, 384),
    ("scene", "immunohistochemistry", 100, 250, 192),
    ("scene", "immunohistochemistry", 300, 20, 192),
    ("scene", "gravel", 60, 300, 192),
    ("scene", "camera", 250, 280, 192),
    ("scene", "moon", 150, 150, 192),
    ("scene", "cat", 100, 220, 192),
    ("scene", "colorwheel", 90, 90, 192),
]


def main(out_dir):
    out_dir = Path(out_dir)
    counters = {}
    for subset, name, top, left, size in CROPS:
        img = getattr(data, name)()
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=-1)
        img = img[top:top + size, left:left + size, :3]
        patch = Image.fromarray(np.ascontiguousarray(img)).resize((PATCH, PATCH), Image.Resampling.BOX)
        k = counters.get(subset, 0)
        counters[subset] = k + 1
        dest = out_dir / subset
        dest.mkdir(parents=True, exist_ok=True)
        patch.save(dest / f"{name}_{k:02d}.png")


if __name__ == "__main__":
    main(sys.argv[1])
