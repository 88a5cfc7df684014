"""Regenerates the small synthetic OmniCity-style fixture under omnicity/."""
import json
import pathlib

import numpy as np
from PIL import Image

root = pathlib.Path(__file__).parent / "omnicity"
rng = np.random.default_rng(7)
size, pano_h = 64, 32

for sub in ("satellite", "panorama", "height"):
    (root / sub).mkdir(parents=True, exist_ok=True)


def save_rgb(path, arr):
    Image.fromarray(arr.astype(np.uint8), "RGB").save(path)


def satellite(heights):
    img = np.full((size, size, 3), (90, 120, 80), np.float64)
    img[heights > 0] = (170, 160, 150)
    img += rng.normal(0, 6, img.shape)
    return np.clip(img, 0, 255)


def panorama():
    img = np.zeros((pano_h, 2 * pano_h, 3))
    img[: pano_h // 2] = (140, 180, 230)
    img[pano_h // 2 :] = (110, 105, 95)
    img += rng.normal(0, 6, img.shape)
    return np.clip(img, 0, 255)


block = np.zeros((size, size), np.uint16)
block[12:24, 40:52] = 120  # 12 m at 0.1 m per unit
block[44:56, 10:18] = 60
flat = np.zeros((size, size), np.uint16)

for sid, h in (("block", block), ("flat", flat)):
    Image.fromarray(h).save(root / "height" / f"{sid}.png")
    save_rgb(root / "satellite" / f"{sid}.png", satellite(h))
    save_rgb(root / "panorama" / f"{sid}.jpg", panorama())

# Sample without a height map.
save_rgb(root / "satellite" / "noheight.png", satellite(flat))
save_rgb(root / "panorama" / "noheight.jpg", panorama())

config = {
    "dataset": {
        "layout": "OmniCity",
        "root": ".",
        "pano_height": pano_h,
        "pano_width": 2 * pano_h,
        "satellite_size": size,
    },
    "voxel": {"meters_per_voxel": 1.0, "nz": 32, "camera_height_m": 1.0},
    "controls": {
        "beta": 0.05,
        "control_rows": 8,
        "control_cols": 16,
        "satellite_token_rows": 8,
        "satellite_token_cols": 8,
    },
    "attention": {"dim": 8},
    "diffusion": {"height": 16, "width": 16, "channels": 3},
    "seed": 0,
}
(root / "config.json").write_text(json.dumps(config, indent=2) + "\n")
