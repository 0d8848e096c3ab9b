"""Human-in-the-loop mode, headless: starts the feedback service, runs one
interactive round, and answers the comparisons with a scripted reviewer
speaking the same HTTP API a browser UI would use.

Run:  python demos/demo_feedback_service.py
"""

import base64
import tempfile
import threading
from pathlib import Path

import requests

from prefseg.core import Mask
from prefseg.metrics import dice
from prefseg.orchestrator import RunConfig, run
from prefseg.service import FeedbackBridge, serve
from prefseg.tensor_io import read_mask_bytes
from prefseg.world import SyntheticWorldConfig, generate_world


def scripted_reviewer(base_url, gt_by_id, stop):
    """Long-polls comparisons and judges them with ground truth, the same
    way the simulated oracle would."""
    while not stop.is_set():
        reply = requests.get(f"{base_url}/api/v1/session/next", params={"wait": 0.3}).json()
        if reply.get("status") != "awaiting_verdict":
            continue
        gt = gt_by_id[reply["image_id"]]
        before = Mask(read_mask_bytes(base64.b64decode(reply["mask_before"])))
        after = Mask(read_mask_bytes(base64.b64decode(reply["mask_after"])))
        verdict = "better" if dice(after, gt) > dice(before, gt) else "worse"
        requests.post(f"{base_url}/api/v1/session/verdict",
                      json={"comparison_id": reply["comparison_id"], "verdict": verdict})
        print(f"   reviewer: {reply['image_id']} round {reply['round']} "
              f"step {reply['step']} -> {verdict}")


def main() -> None:
    root = Path(tempfile.mkdtemp(prefix="servicedemo_"))
    world = SyntheticWorldConfig(image_size=32, patch_size=8, blob_count_range=(1, 1),
                                 feature_dim=6, fg_bg_separation=1.5, noise_sigma=0.1, seed=11)
    manifest = generate_world(world, 3, root / "world")

    bridge = FeedbackBridge(run_id="demo")
    server = serve(bridge, bind="127.0.0.1:0")
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base_url = f"http://127.0.0.1:{server.server_address[1]}"
    print(f"service listening on {base_url} (session {bridge.session_id})")
    print(requests.get(f"{base_url}/api/v1/run/status").json())

    stop = threading.Event()
    gt_by_id = {r.id: r.gt_mask for r in manifest.records}
    threading.Thread(target=scripted_reviewer, args=(base_url, gt_by_id, stop),
                     daemon=True).start()

    config = RunConfig(rounds=1, steps_per_image=3, oracle_mode="human", seed=2,
                       output_dir=str(root / "out"), seg_epochs=4, adapter_steps=30,
                       human_timeout_s=30.0)
    print("\nrunning one human-mode round over 3 images (3 steps each):")
    result = run(manifest, config, bridge=bridge)

    stop.set()
    bridge.finish()
    server.shutdown()
    report = result.reports[0]
    print(f"\nround complete: mean reward {report['mean_reward']:+.3f}, "
          f"verdicts recorded: {bridge.status()['verdicts_recorded']}")
    print(f"artifacts in {result.out_dir}")


if __name__ == "__main__":
    main()
