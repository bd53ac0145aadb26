#!/usr/bin/env python3
"""Convert a labeled .npy array into the mesher's volume format.

The array is read as (z, y, x) by default, which matches a C-ordered stack of slices.
"""
import argparse
import sys

import numpy as np


def write_volume(path, labels, spacing, origin):
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 65535):
        raise ValueError("labels must lie in [0, 65535]")
    kind = "uint8" if labels.size == 0 or labels.max() < 256 else "uint16"
    data = np.ascontiguousarray(labels, dtype="<u1" if kind == "uint8" else "<u2")
    nz, ny, nx = data.shape
    fmt = lambda v: repr(float(v))
    head = (
        f"DIMS: {nx} {ny} {nz}\n"
        f"SPACING: {' '.join(fmt(v) for v in spacing)}\n"
        f"ORIGIN: {' '.join(fmt(v) for v in origin)}\n"
        f"TYPE: {kind}\n"
    )
    offset = len(head) + len("DATA_OFFSET: 0000000000\n\n")
    with open(path, "wb") as f:
        f.write((head + f"DATA_OFFSET: {offset:010d}\n\n").encode("ascii"))
        f.write(data.tobytes(order="C"))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("input", help=".npy file with integer labels")
    p.add_argument("output", help="volume file to write")
    p.add_argument("--spacing", type=float, nargs=3, default=[1.0, 1.0, 1.0], metavar=("SX", "SY", "SZ"))
    p.add_argument("--origin", type=float, nargs=3, default=[0.0, 0.0, 0.0], metavar=("OX", "OY", "OZ"))
    p.add_argument("--axis-order", choices=["zyx", "xyz"], default="zyx", help="axis order of the array")
    args = p.parse_args(argv)

    labels = np.load(args.input)
    if not np.issubdtype(labels.dtype, np.integer):
        sys.exit("labels must be integers")
    if args.axis_order == "xyz":
        labels = np.transpose(labels, (2, 1, 0))
    write_volume(args.output, labels, args.spacing, args.origin)


if __name__ == "__main__":
    main()
