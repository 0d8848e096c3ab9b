"""The clicking policy up close: sampling, temperature, and a REINFORCE
training loop on a stationary toy task where one region is always rewarded.

Run:  python demos/demo_click_policy.py
"""

import numpy as np

from prefseg.agent import (
    AgentState,
    make_policy,
    policy_forward,
    reinforce_update,
    sample_action,
    softmax_policy,
)


def region_mass(params, state, rewarded):
    probs = softmax_policy(policy_forward(params, state), params.temperature)
    return float(probs.reshape(rewarded.shape)[rewarded].sum())


def main() -> None:
    rng = np.random.default_rng(0)
    state = AgentState(np.concatenate([np.full((1, 4, 4), 0.5), np.zeros((1, 4, 4))]))

    params = make_policy(in_channels=2, seed=1, temperature=1.0, learning_rate=0.01)
    probs = softmax_policy(policy_forward(params, state), 1.0)
    print(f"fresh policy is uniform: min {probs.min():.5f} max {probs.max():.5f} "
          f"(1/32 = {1 / 32:.5f})")

    a = sample_action(params, state, rng)
    print(f"sampled action: label={a.label} at grid ({a.row}, {a.col}), "
          f"log-prob {a.log_prob:.3f}")

    # one fixed region pays +1 (label 1 clicks in the top-left quadrant)
    rewarded = np.zeros((2, 4, 4), dtype=bool)
    rewarded[1, :2, :2] = True
    print(f"\ntraining 400 single-step episodes; rewarded region holds "
          f"{rewarded.sum()}/32 actions ({region_mass(params, state, rewarded):.3f} mass)")
    for episode in range(400):
        action = sample_action(params, state, rng)
        r = 1 if rewarded[action.label, action.row, action.col] else -1
        params, grad_norm = reinforce_update(params, [(state, action, r)])
        if episode % 80 == 0:
            print(f"   episode {episode:3d}: mass on rewarded region "
                  f"{region_mass(params, state, rewarded):.3f} (grad norm {grad_norm:.2f})")
    print(f"   final: {region_mass(params, state, rewarded):.3f}")

    # temperature controls exploration
    for temp in (0.3, 1.0, 3.0):
        p = softmax_policy(policy_forward(params, state), temp)
        entropy = -np.sum(p * np.log(p + 1e-300))
        print(f"temperature {temp}: action entropy {entropy:.2f} nats "
              f"(uniform = {np.log(32):.2f})")


if __name__ == "__main__":
    main()
