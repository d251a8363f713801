"""Convert AdaTime-style ``train_<id>.pt`` / ``test_<id>.pt`` files to dataset directories.

Each ``.pt`` file holds a dict with ``samples`` (N x C x T or N x T x C) and
``labels`` (N). Train and test files of a domain are merged into
``<out>/<id>``; the experiment code draws its own 70/30 split.

    python3 scripts/convert_adatime.py data/HAR converted/HAR --classes walk,upstairs,downstairs,sit,stand,lie
"""
import argparse
import re
from pathlib import Path

import numpy as np

from unijdot.data import TimeSeriesDataset, save_dataset

HAR_CLASSES = ["walk", "upstairs", "downstairs", "sit", "stand", "lie"]


def load_pt(path: Path) -> tuple[np.ndarray, np.ndarray]:
    import torch  # only needed for conversion

    blob = torch.load(path, map_location="cpu")
    x = np.asarray(blob["samples"], dtype=np.float32)
    y = np.asarray(blob["labels"]).astype(np.int64).ravel()
    if x.ndim == 2:
        x = x[:, None, :]
    if x.shape[1] > x.shape[2]:  # channels are the short axis
        x = x.transpose(0, 2, 1)
    return np.ascontiguousarray(x), y


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("src", type=Path, help="directory with train_<id>.pt / test_<id>.pt")
    p.add_argument("out", type=Path)
    p.add_argument("--classes", default=",".join(HAR_CLASSES), help="comma-separated class names")
    args = p.parse_args(argv)
    names = args.classes.split(",")
    ids = sorted({m.group(1) for f in args.src.glob("*.pt") if (m := re.match(r"(?:train|test)_(\w+)\.pt$", f.name))})
    if not ids:
        p.error(f"no train_<id>.pt / test_<id>.pt files in {args.src}")
    for dom in ids:
        parts = [load_pt(f) for f in (args.src / f"train_{dom}.pt", args.src / f"test_{dom}.pt") if f.exists()]
        x = np.concatenate([a for a, _ in parts])
        y = np.concatenate([b for _, b in parts])
        path = save_dataset(TimeSeriesDataset(x, y, names), args.out / dom)
        print(f"{dom}: {x.shape} -> {path}")


if __name__ == "__main__":
    main()
