#!/usr/bin/env python3
"""Write the 5000-sample MNIST subset bundled with mlxtend as IDX files.

Rows in the source file are grouped by class (500 per digit, label in the last
column). Each class contributes its first 400 rows to the training split and the
remaining 100 to the test split; both splits are interleaved by class.
Usage: make_mnist_subset.py [out_dir] [--wheel path/to/mlxtend.whl]
"""
import argparse
import csv
import gzip
import io
import pathlib
import struct
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(wheel):
    if wheel:
        with zipfile.ZipFile(wheel) as z:
            raw = z.read(MEMBER)
    else:
        import mlxtend.data

        path = pathlib.Path(mlxtend.data.__file__).parent / "data" / "mnist_5k.csv.gz"
        raw = path.read_bytes()
    text = gzip.decompress(raw).decode()
    return [list(map(int, row)) for row in csv.reader(io.StringIO(text)) if row]


def write_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r[:-1]))


def write_labels(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(r[-1] for r in rows))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", nargs="?", default="data/mnist5k")
    ap.add_argument("--wheel")
    args = ap.parse_args()
    rows = read_rows(args.wheel)
    assert len(rows) == 5000 and all(len(r) == 785 for r in rows)
    by_class = [[r for r in rows if r[-1] == c] for c in range(10)]
    train = [by_class[c][i] for i in range(400) for c in range(10)]
    test = [by_class[c][i] for i in range(400, 500) for c in range(10)]
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", train)
    write_labels(out / "train-labels-idx1-ubyte", train)
    write_images(out / "t10k-images-idx3-ubyte", test)
    write_labels(out / "t10k-labels-idx1-ubyte", test)


if __name__ == "__main__":
    main()
