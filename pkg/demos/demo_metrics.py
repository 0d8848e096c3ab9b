"""Segmentation metrics walkthrough: Dice, IoU, and HD95 on small masks.

Run:  python demos/demo_metrics.py
"""

import numpy as np

from prefseg.core import Mask
from prefseg.metrics import boundary_pixels, dice, hd95, iou, report


def show(mask: Mask, title: str) -> None:
    print(title)
    for row in mask.bits:
        print("   " + "".join("#" if v else "." for v in row))


def main() -> None:
    # two overlapping squares on a 12x12 grid
    a_bits = np.zeros((12, 12), dtype=np.uint8)
    a_bits[2:9, 2:9] = 1
    b_bits = np.zeros((12, 12), dtype=np.uint8)
    b_bits[4:11, 4:11] = 1
    a, b = Mask(a_bits), Mask(b_bits)

    show(a, "mask A (7x7 square at (2,2)):")
    show(b, "mask B (7x7 square at (4,4)):")

    print(f"\ndice(A, B) = {dice(a, b):.4f}")
    print(f"iou(A, B)  = {iou(a, b):.4f}")
    d, i = dice(a, b), iou(a, b)
    print(f"identity check: 2*iou/(1+iou) = {2 * i / (1 + i):.4f} == dice")

    print(f"\nboundary pixels of A: {len(boundary_pixels(a.bits))}")
    print(f"hd95(A, B) = {hd95(a, b):.4f} pixels")
    print(f"hd95 is symmetric: hd95(B, A) = {hd95(b, a):.4f}")

    # conventions on degenerate masks
    empty = Mask.zeros(12, 12)
    print(f"\nboth masks empty: dice = {dice(empty, empty)}, iou = {iou(empty, empty)}")
    print(f"one mask empty: hd95 = {hd95(a, empty)} (undefined, never 0)")

    print("\nfull report:", report(a, b))


if __name__ == "__main__":
    main()
