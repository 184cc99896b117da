"""Write the 5000-image MNIST subset bundled with mlxtend as gzipped IDX files.

Usage:
    python scripts/make_mnist5k_idx.py [--wheel PATH] [--out data/mnist5k]

Without --wheel the installed ``mlxtend`` package is used.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from rulehead.idx import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def load_csv_bytes(wheel):
    if wheel:
        with zipfile.ZipFile(wheel) as z:
            return gzip.decompress(z.read(MEMBER))
    import mlxtend.data.mnist as m

    with gzip.open(m.DATA_PATH, "rb") as fh:
        return fh.read()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", default=None)
    ap.add_argument("--out", default="data/mnist5k")
    args = ap.parse_args()

    table = np.loadtxt(io.BytesIO(load_csv_bytes(args.wheel)), delimiter=",")
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "images-idx3-ubyte.gz", images)
    write_idx(out / "labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main()
