"""Click propagation walkthrough: how one labeled click densifies into a
region through cosine similarity in feature space.

Run:  python demos/demo_propagation.py
"""

import numpy as np

from prefseg.core import BACKGROUND, FOREGROUND, Mask, load_feature_map
from prefseg.propagation import LabeledClick, PropagationConfig, propagate, similarity_map
from prefseg.world import SyntheticWorldConfig, generate_world


def render(mask: Mask, patch_size: int) -> str:
    cells = mask.bits[::patch_size, ::patch_size]
    return "\n".join("   " + "".join("#" if v else "." for v in row) for row in cells)


def main() -> None:
    import tempfile

    config = SyntheticWorldConfig(image_size=64, patch_size=8, blob_count_range=(1, 1),
                                  feature_dim=8, fg_bg_separation=1.2, noise_sigma=0.1,
                                  seed=21)
    manifest = generate_world(config, 1, tempfile.mkdtemp(prefix="propdemo_"))
    record = manifest.records[0]
    features = load_feature_map(record.feature_path)

    print("ground truth (patch view):")
    print(render(record.gt_mask, 8))

    # click the center of the blob
    fg_cells = np.argwhere(record.gt_mask.bits[::8, ::8] == 1)
    gr, gc = fg_cells[len(fg_cells) // 2]
    click = LabeledClick(row=int(gr) * 8 + 4, col=int(gc) * 8 + 4, label=FOREGROUND, sequence=1)
    print(f"\nforeground click at pixel ({click.row}, {click.col}) -> patch ({gr}, {gc})")

    sim = similarity_map(click, features, patch_size=8)
    print("\ncosine similarity to the clicked patch (x10, clipped):")
    for row in sim:
        print("   " + "".join(f"{min(9, max(0, int(v * 10)))}" for v in row))

    for tau in (0.9, 0.8, 0.5):
        out = propagate([click], features, Mask.zeros(64, 64),
                        PropagationConfig(tau=tau), patch_size=8)
        claimed = int(out.bits[::8, ::8].sum())
        print(f"\npropagated mask at tau={tau} ({claimed} patches claimed):")
        print(render(out, 8))

    # a later background click overrides low-similarity spill
    bg_cells = np.argwhere(record.gt_mask.bits[::8, ::8] == 0)
    bgr, bgc = bg_cells[0]
    bg_click = LabeledClick(row=int(bgr) * 8 + 4, col=int(bgc) * 8 + 4,
                            label=BACKGROUND, sequence=2)
    both = propagate([click, bg_click], features, Mask.zeros(64, 64),
                     PropagationConfig(tau=0.8), patch_size=8)
    print(f"\nafter adding a background click at patch ({bgr}, {bgc}) "
          f"(max-similarity conflict rule):")
    print(render(both, 8))


if __name__ == "__main__":
    main()
