#!/usr/bin/env python3
"""Regenerate tests/fixtures/tiny: ten small synthetic CT scans with candidate
and annotation lists. Output is deterministic."""

import argparse
import pathlib

import numpy as np

DIMS = (24, 24, 12)  # x, y, z
SPACING = (0.75, 0.75, 1.25)
N_SCANS = 10
NEGATIVES_PER_SCAN = 5


def header(dims, spacing, origin, element_type, big_endian, data_file):
    msb = "True" if big_endian else "False"
    return (
        "ObjectType = Image\n"
        "NDims = 3\n"
        "BinaryData = True\n"
        f"BinaryDataByteOrderMSB = {msb}\n"
        "CompressedData = False\n"
        "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
        f"Offset = {origin[0]} {origin[1]} {origin[2]}\n"
        "CenterOfRotation = 0 0 0\n"
        "AnatomicalOrientation = RAI\n"
        f"ElementSpacing = {spacing[0]} {spacing[1]} {spacing[2]}\n"
        f"DimSize = {dims[0]} {dims[1]} {dims[2]}\n"
        f"ElementType = {element_type}\n"
        f"ElementDataFile = {data_file}\n"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    default_out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "tiny"
    parser.add_argument("--out", type=pathlib.Path, default=default_out)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(20240517)
    nx, ny, nz = DIMS
    zz, yy, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    candidates = ["seriesuid,coordX,coordY,coordZ,class"]
    annotations = ["seriesuid,coordX,coordY,coordZ,diameter_mm"]

    for s in range(N_SCANS):
        series = f"1.3.6.1.4.1.99999.{s:03d}"
        origin = (round(-9.0 - s * 0.5, 2), round(-9.0 + s * 0.25, 2), round(-7.5 + s, 2))
        volume = -850.0 + rng.normal(0.0, 25.0, size=(nz, ny, nx))

        # one nodule per scan: a bright sphere of radius 2.5-4 voxels in-plane
        c = (int(rng.integers(8, 16)), int(rng.integers(8, 16)), int(rng.integers(4, 8)))  # x, y, z
        radius_vox = float(rng.uniform(2.5, 4.0))
        dist = np.sqrt(((xx - c[0]) * SPACING[0]) ** 2 + ((yy - c[1]) * SPACING[1]) ** 2 + ((zz - c[2]) * SPACING[2]) ** 2)
        radius_mm = radius_vox * SPACING[0]
        volume[dist <= radius_mm] = 40.0 + rng.normal(0.0, 15.0, size=int((dist <= radius_mm).sum()))

        world = [origin[i] + c[i] * SPACING[i] for i in range(3)]
        annotations.append(f"{series},{world[0]:.3f},{world[1]:.3f},{world[2]:.3f},{2 * radius_mm:.3f}")
        candidates.append(f"{series},{world[0]:.3f},{world[1]:.3f},{world[2]:.3f},1")
        if s % 3 == 0:
            # a second mark of the same nodule, one voxel off centre
            candidates.append(f"{series},{world[0] + SPACING[0]:.3f},{world[1]:.3f},{world[2]:.3f},1")
        for _ in range(NEGATIVES_PER_SCAN):
            v = (rng.uniform(0, nx - 1), rng.uniform(0, ny - 1), rng.uniform(0, nz - 1))
            w = [origin[i] + v[i] * SPACING[i] for i in range(3)]
            candidates.append(f"{series},{w[0]:.3f},{w[1]:.3f},{w[2]:.3f},0")

        # exercise both element types and both byte orders
        if s == 1:
            element_type, big_endian, dtype = "MET_FLOAT", False, "<f4"
        elif s == 2:
            element_type, big_endian, dtype = "MET_SHORT", True, ">i2"
        else:
            element_type, big_endian, dtype = "MET_SHORT", False, "<i2"
        values = np.rint(volume) if dtype.endswith("i2") else volume
        raw_name = f"{series}.raw"
        (args.out / raw_name).write_bytes(values.astype(dtype).tobytes())
        (args.out / f"{series}.mhd").write_text(header(DIMS, SPACING, origin, element_type, big_endian, raw_name))

    (args.out / "candidates.csv").write_text("\n".join(candidates) + "\n")
    (args.out / "annotations.csv").write_text("\n".join(annotations) + "\n")


if __name__ == "__main__":
    main()
