"""Better/worse verdicts: simulated from ground-truth Dice deltas, or relayed
from a human reviewer through the feedback service.

Both sources share the PreferenceVerdict type so the episode loop never
knows which one it is talking to.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ImageRecord, Mask, ValidationError
from .metrics import dice


class FeedbackTimeout(Exception):
    """The human did not answer within the configured window."""


@dataclass(frozen=True)
class PreferenceVerdict:
    reward: int  # +1 or -1
    source: str  # "simulated" | "human"
    dice_before: Optional[float] = None
    dice_after: Optional[float] = None
    latency_ms: Optional[float] = None


def judge_simulated(m_new: Mask, m_current: Mask, gt: Mask,
                    flip_prob: float = 0.0,
                    rng: Optional[np.random.Generator] = None) -> PreferenceVerdict:
    """+1 iff Dice strictly increases; a tie is "worse".

    flip_prob > 0 randomly inverts the verdict (robustness experiments only).
    """
    if gt is None:
        raise ValidationError("simulated oracle needs a ground-truth mask")
    if not (m_new.same_grid(m_current) and m_new.same_grid(gt)):
        raise ValidationError("oracle masks must share one grid")
    before = dice(m_current, gt)
    after = dice(m_new, gt)
    reward = 1 if after > before else -1
    if flip_prob > 0.0:
        if rng is None:
            raise ValidationError("flip_prob > 0 requires an rng")
        if rng.random() < flip_prob:
            reward = -reward
    return PreferenceVerdict(reward=reward, source="simulated",
                             dice_before=before, dice_after=after)


def judge_human(session, m_new: Mask, m_current: Mask, context: ImageRecord,
                round_index: int, step_index: int,
                timeout_s: Optional[float] = None) -> PreferenceVerdict:
    """Block until the reviewer submits Better or Worse for this comparison.

    `session` is a feedback bridge (see prefseg.service). Raises
    FeedbackTimeout when the window elapses; the caller decides whether to
    skip the step or abort the run.
    """
    start = time.monotonic()
    verdict = session.request_verdict(
        image_record=context, mask_before=m_current, mask_after=m_new,
        round_index=round_index, step_index=step_index, timeout_s=timeout_s,
    )
    if verdict is None:
        raise FeedbackTimeout(
            f"no verdict for {context.id} round {round_index} step {step_index}")
    latency = (time.monotonic() - start) * 1000.0
    return PreferenceVerdict(reward=1 if verdict == "better" else -1,
                             source="human", latency_ms=latency)
