"""Drives the full loop: per-image interactive episodes with accept-on-
improvement, episode-end REINFORCE updates, top-K pseudo-label filtering,
per-round learner fine-tuning and adapter training, persistence, and report
emission.

Every round writes a self-contained directory (state.json, pseudo masks,
three checkpoints, report.json) from which its report can be rebuilt, plus a
run-level CSV. Timings go to a sidecar so reports stay byte-deterministic.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import metrics, seg
from .agent import (
    AgentState,
    ClickAction,
    MovingBaseline,
    PolicyParams,
    build_agent_state,
    make_policy,
    policy_from_arrays,
    policy_to_arrays,
    reinforce_update,
    sample_action,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .core import (
    DatasetManifest,
    FeatureMap,
    ImageRecord,
    Mask,
    ValidationError,
    load_feature_map,
    patch_center_pixel,
)
from .features import AdapterParams, adapt_features, apply_adapter, make_adapter
from .oracle import FeedbackTimeout, PreferenceVerdict, judge_human, judge_simulated
from .propagation import LabeledClick, PropagationConfig, propagate
from .tensor_io import read_mask, write_mask

logger = logging.getLogger(__name__)

HIST_BINS = 10


@dataclass(frozen=True)
class RunConfig:
    rounds: int = 5
    steps_per_image: int = 5
    tau: float = 0.8
    top_k_percent: float = 1.0  # 1.0 = filtering off
    quality_proxy: str = "mean_accepted_reward"  # | "model_agreement"
    oracle_mode: str = "simulated"  # | "human"
    seed: int = 0
    output_dir: str = "run_out"
    conflict_rule: str = "max_similarity_wins"
    agent_temperature: float = 1.0
    agent_learning_rate: float = 1e-3
    agent_baseline: bool = False
    seg_learning_rate: float = 0.5
    seg_epochs: int = 20
    seg_batch_size: int = 64
    adapter_learning_rate: float = 1e-2
    adapter_margin: float = 0.2
    adapter_steps: int = 200
    cumulative_pseudo: bool = False
    flip_prob: float = 0.0
    batched_agent_updates: bool = False
    eval_random_baseline: bool = False
    human_timeout_s: Optional[float] = None
    human_timeout_policy: str = "skip_step"  # | "abort_run"

    def __post_init__(self):
        if self.rounds < 1 or self.steps_per_image < 1:
            raise ValidationError("rounds and steps_per_image must be >= 1")
        if not (0.0 < self.top_k_percent <= 1.0):
            raise ValidationError("top_k_percent must be in (0, 1]")
        if self.quality_proxy not in ("mean_accepted_reward", "model_agreement"):
            raise ValidationError(f"unknown quality proxy {self.quality_proxy!r}")
        if self.oracle_mode not in ("simulated", "human"):
            raise ValidationError(f"unknown oracle mode {self.oracle_mode!r}")
        if self.human_timeout_policy not in ("skip_step", "abort_run"):
            raise ValidationError(f"unknown timeout policy {self.human_timeout_policy!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def propagation(self) -> PropagationConfig:
        return PropagationConfig(tau=self.tau, conflict_rule=self.conflict_rule)


@dataclass
class StepLog:
    t: int
    grid_row: int
    grid_col: int
    label: int
    log_prob: float
    pixel_row: int
    pixel_col: int
    reward: Optional[int]
    accepted: bool
    dice_before: Optional[float] = None
    dice_after: Optional[float] = None
    skipped: bool = False


@dataclass
class EpisodeLog:
    image_id: str
    init_dice: Optional[float]
    final_dice: Optional[float]
    final_hd95: Optional[float]
    steps: list[StepLog] = field(default_factory=list)
    grad_norm: Optional[float] = None

    def accepted_fraction(self) -> float:
        judged = [s for s in self.steps if not s.skipped]
        if not judged:
            return 0.0
        return sum(1 for s in self.steps if s.accepted) / len(judged)

    def rewards(self) -> list[int]:
        return [s.reward for s in self.steps if not s.skipped]


JudgeFn = Callable[[Mask, Mask, int], PreferenceVerdict]


def run_episode(record: ImageRecord, agent: PolicyParams, features: FeatureMap,
                init_mask: Mask, config: RunConfig, patch_size: int,
                rng: np.random.Generator, judge: JudgeFn,
                ) -> tuple[Mask, EpisodeLog, list[tuple[AgentState, ClickAction, int]]]:
    """One image's interactive phase: T candidate clicks, each kept only on a
    +1 verdict. Each candidate mask is all accepted clicks plus the candidate
    propagated onto the round's base mask, so the episode mask is a pure
    function of the accepted click set."""
    prop_cfg = config.propagation()
    simulated = config.oracle_mode == "simulated"
    m_current = init_mask
    accepted: list[LabeledClick] = []
    trajectory: list[tuple[AgentState, ClickAction, int]] = []
    gt = record.gt_mask
    init_dice = metrics.dice(init_mask, gt) if simulated else None
    running_dice = init_dice
    log = EpisodeLog(image_id=record.id, init_dice=init_dice, final_dice=None, final_hd95=None)
    for t in range(1, config.steps_per_image + 1):
        state = build_agent_state(record.image, m_current, patch_size)
        action = sample_action(agent, state, rng)
        px_row, px_col = patch_center_pixel(action.row, action.col, patch_size)
        click = LabeledClick(row=px_row, col=px_col, label=action.label, sequence=t)
        m_new = propagate(accepted + [click], features, init_mask, prop_cfg, patch_size)
        try:
            verdict = judge(m_new, m_current, t)
        except FeedbackTimeout:
            if config.human_timeout_policy == "abort_run":
                raise
            log.steps.append(StepLog(t=t, grid_row=action.row, grid_col=action.col,
                                     label=action.label, log_prob=action.log_prob,
                                     pixel_row=px_row, pixel_col=px_col, reward=None,
                                     accepted=False, skipped=True))
            continue
        trajectory.append((state, action, verdict.reward))
        took = verdict.reward == 1
        if took:
            accepted.append(click)
            m_current = m_new
        if simulated and config.flip_prob == 0.0:
            new_dice = verdict.dice_after if took else running_dice
            if new_dice < running_dice - 1e-12:
                raise RuntimeError(
                    f"{record.id}: interactive Dice decreased within an episode "
                    f"({running_dice} -> {new_dice}); accept-on-improvement is broken")
            running_dice = new_dice
        log.steps.append(StepLog(t=t, grid_row=action.row, grid_col=action.col,
                                 label=action.label, log_prob=action.log_prob,
                                 pixel_row=px_row, pixel_col=px_col, reward=verdict.reward,
                                 accepted=took, dice_before=verdict.dice_before,
                                 dice_after=verdict.dice_after))
    if simulated:
        log.final_dice = metrics.dice(m_current, gt)
        log.final_hd95 = metrics.hd95(m_current, gt)
    return m_current, log, trajectory


def random_episode(record: ImageRecord, features: FeatureMap, init_mask: Mask,
                   config: RunConfig, patch_size: int, rng: np.random.Generator,
                   judge: JudgeFn) -> list[int]:
    """Uniform-random click policy on the same mechanics; returns the rewards.

    The comparison baseline for trained-agent reward: no learning, no state.
    """
    prop_cfg = config.propagation()
    gh = record.height // patch_size
    gw = record.width // patch_size
    m_current = init_mask
    accepted: list[LabeledClick] = []
    rewards = []
    for t in range(1, config.steps_per_image + 1):
        idx = int(rng.integers(0, 2 * gh * gw))
        label, grow, gcol = np.unravel_index(idx, (2, gh, gw))
        px_row, px_col = patch_center_pixel(int(grow), int(gcol), patch_size)
        click = LabeledClick(row=px_row, col=px_col, label=int(label), sequence=t)
        m_new = propagate(accepted + [click], features, init_mask, prop_cfg, patch_size)
        verdict = judge(m_new, m_current, t)
        rewards.append(verdict.reward)
        if verdict.reward == 1:
            accepted.append(click)
            m_current = m_new
    return rewards


def filter_top_k(pseudo: dict[str, Mask], logs: dict[str, EpisodeLog], config: RunConfig,
                 init_predictions: dict[str, Mask]) -> list[str]:
    """Rank images by a GT-blind quality proxy and keep ceil(K * N) of them.

    Ties break toward the lexicographically smaller id.
    """
    if not pseudo:
        raise ValidationError("filter_top_k needs a non-empty pseudo-label set")
    if config.quality_proxy == "mean_accepted_reward":
        scores = {rid: logs[rid].accepted_fraction() for rid in pseudo}
    else:
        scores = {rid: metrics.dice(pseudo[rid], init_predictions[rid]) for rid in pseudo}
    keep = math.ceil(config.top_k_percent * len(pseudo))
    ranked = sorted(pseudo, key=lambda rid: (-scores[rid], rid))
    return sorted(ranked[:keep])


# --- persistence ---------------------------------------------------------------

def _round_dir(out: Path, round_index: int) -> Path:
    return out / f"round_{round_index:03d}"


def _episode_to_dict(log: EpisodeLog) -> dict:
    return {
        "image_id": log.image_id,
        "init_dice": log.init_dice,
        "final_dice": log.final_dice,
        "final_hd95": log.final_hd95,
        "grad_norm": log.grad_norm,
        "steps": [asdict(s) for s in log.steps],
    }


def build_report(state: dict) -> dict:
    """Aggregate a persisted round state into its report. Pure function of the
    state dict, so reports can be regenerated from disk byte-identically."""
    episodes = [state["episodes"][rid] for rid in sorted(state["episodes"])]
    rewards = [s["reward"] for e in episodes for s in e["steps"] if not s["skipped"]]
    accepted = [s["accepted"] for e in episodes for s in e["steps"] if not s["skipped"]]
    dices = [e["final_dice"] for e in episodes if e["final_dice"] is not None]
    hd95s = [e["final_hd95"] for e in episodes if e["final_hd95"] is not None]
    hd95_undefined = sum(1 for e in episodes
                         if e["final_dice"] is not None and e["final_hd95"] is None)
    report = {
        "round": state["round"],
        "n_images": len(episodes),
        "n_kept": len(state["kept_ids"]),
        "mean_dice": float(np.mean(dices)) if dices else None,
        "median_dice": float(np.median(dices)) if dices else None,
        "std_dice": float(np.std(dices)) if dices else None,
        "mean_hd95": float(np.mean(hd95s)) if hd95s else None,
        "hd95_undefined_count": hd95_undefined,
        "mean_reward": float(np.mean(rewards)) if rewards else None,
        "mean_accepted_fraction": float(np.mean(accepted)) if accepted else None,
        "dice_histogram": None,
        "random_baseline_mean_reward": state.get("random_baseline_mean_reward"),
    }
    if dices:
        counts, edges = np.histogram(dices, bins=HIST_BINS, range=(0.0, 1.0))
        report["dice_histogram"] = {"bin_edges": [float(e) for e in edges],
                                    "counts": [int(c) for c in counts]}
    return report


def report_from_round_dir(round_dir: str | Path) -> dict:
    state = json.loads((Path(round_dir) / "state.json").read_text(encoding="utf-8"))
    return build_report(state)


def load_pseudo_masks(round_dir: str | Path) -> dict[str, Mask]:
    out = {}
    for p in sorted((Path(round_dir) / "pseudo").glob("*.pgm")):
        out[p.stem] = Mask(read_mask(p))
    return out


def write_report_csv(path: Path, reports: Sequence[dict]) -> None:
    def cell(v):
        return "" if v is None else repr(v)

    lines = ["round,mean_dice,std_dice,mean_hd95,hd95_undefined_count,mean_reward"]
    for rep in reports:
        lines.append(",".join([
            str(rep["round"]), cell(rep["mean_dice"]), cell(rep["std_dice"]),
            cell(rep["mean_hd95"]), str(rep["hd95_undefined_count"]), cell(rep["mean_reward"]),
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- the run loop ----------------------------------------------------------------

@dataclass
class RunResult:
    out_dir: Path
    reports: list[dict]
    agent: PolicyParams
    seg_params: seg.SegModelParams
    adapter: AdapterParams


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def run(manifest: DatasetManifest, config: RunConfig, bridge=None,
        resume: bool = False) -> RunResult:
    """Execute all rounds of the loop; see module docstring for the layout of
    the persisted artifacts. Deterministic given (manifest, config.seed) in
    simulated mode. resume=True continues a run from its last completed round
    (exact: checkpoints are float64 and rng states are persisted)."""
    if config.oracle_mode == "simulated":
        missing = [r.id for r in manifest.records if r.gt_mask is None]
        if missing:
            raise ValidationError(f"simulated mode needs gt masks; missing for {missing[:3]}")
    elif bridge is None:
        raise ValidationError("human mode needs a feedback bridge (see prefseg.service)")
    if not manifest.records:
        raise ValidationError("manifest has no records")
    channels = {r.channels for r in manifest.records}
    if len(channels) > 1:
        raise ValidationError(f"mixed channel counts in dataset: {sorted(channels)}")

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(config.to_json(), encoding="utf-8")

    ps = manifest.patch_size
    raw_fmaps = {r.id: load_feature_map(r.feature_path) for r in manifest.records}
    dim = next(iter(raw_fmaps.values())).dim

    ss = np.random.SeedSequence(config.seed)
    agent_ss, sample_ss, seg_ss, adapter_ss, baseline_ss, oracle_ss = ss.spawn(6)
    agent = make_policy(manifest.records[0].channels + 1, seed=_seed_int(agent_ss),
                        temperature=config.agent_temperature,
                        learning_rate=config.agent_learning_rate)
    seg_params = seg.init_seg_params(dim, learning_rate=config.seg_learning_rate,
                                     epochs=config.seg_epochs, batch_size=config.seg_batch_size)
    adapter = make_adapter(dim, learning_rate=config.adapter_learning_rate,
                           margin=config.adapter_margin)
    sample_rng = np.random.default_rng(sample_ss)
    flip_rng = np.random.default_rng(oracle_ss)
    seg_seeds = seg_ss.spawn(config.rounds)
    adapter_seeds = adapter_ss.spawn(config.rounds)
    baseline_seeds = baseline_ss.spawn(config.rounds)
    reward_baseline = MovingBaseline() if config.agent_baseline else None

    start_round = 1
    history: list[tuple[str, int]] = []  # (image_id, round) of kept pseudo-labels
    if resume:
        if not (out / "run_state.json").is_file():
            raise ValidationError(f"no resume token in {out}")
        agent, seg_params, adapter, sample_rng, flip_rng, start_round, history = _load_resume(
            out, sample_rng, flip_rng, agent, seg_params, adapter)

    reports: list[dict] = []
    for prev in range(1, start_round):
        reports.append(json.loads((_round_dir(out, prev) / "report.json").read_text()))

    timings = []
    for round_index in range(start_round, config.rounds + 1):
        round_start_rngs = (_rng_state(sample_rng), _rng_state(flip_rng))
        _persist_resume(out, round_index - 1, round_start_rngs, history, status="running")
        t0 = time.monotonic()
        try:
            agent, seg_params, adapter = _run_round(
                manifest, config, round_index, agent, seg_params, adapter, raw_fmaps,
                sample_rng, flip_rng, seg_seeds[round_index - 1],
                adapter_seeds[round_index - 1], baseline_seeds[round_index - 1],
                reward_baseline, bridge, out, history)
        except Exception:
            _persist_resume(out, round_index - 1, round_start_rngs, history, status="aborted")
            logger.exception("round %d failed; partial state persisted, resume token written",
                             round_index)
            raise
        reports.append(json.loads((_round_dir(out, round_index) / "report.json").read_text()))
        timings.append({"round": round_index, "seconds": time.monotonic() - t0})
        write_report_csv(out / "report.csv", reports)
    _persist_resume(out, config.rounds, (_rng_state(sample_rng), _rng_state(flip_rng)),
                    history, status="completed")
    _dump_json(out / "timings.json", {"rounds": timings})
    return RunResult(out_dir=out, reports=reports, agent=agent, seg_params=seg_params,
                     adapter=adapter)


def _run_round(manifest, config, round_index, agent, seg_params, adapter, raw_fmaps,
               sample_rng, flip_rng, seg_seed, adapter_seed, baseline_seed,
               reward_baseline, bridge, out, history):
    ps = manifest.patch_size
    adapted = {rid: apply_adapter(adapter, fmap) for rid, fmap in raw_fmaps.items()}
    init_preds = {r.id: seg.predict(seg_params, adapted[r.id], ps) for r in manifest.records}
    pseudo: dict[str, Mask] = {}
    logs: dict[str, EpisodeLog] = {}
    deferred: list[tuple[str, list]] = []
    updates_applied = 0
    for record in manifest.records:
        judge = _make_judge(record, config, flip_rng, bridge, round_index)
        if bridge is not None:
            bridge.update_status(round_index=round_index, image_id=record.id,
                                 total_rounds=config.rounds, total_images=len(manifest.records))
        final_mask, ep_log, trajectory = run_episode(
            record, agent, adapted[record.id], init_preds[record.id], config, ps,
            sample_rng, judge)
        pseudo[record.id] = final_mask
        logs[record.id] = ep_log
        if config.batched_agent_updates:
            deferred.append((record.id, trajectory))
        else:
            agent, updates_applied = _apply_update(agent, trajectory, reward_baseline,
                                                   ep_log, updates_applied)
    for rid, trajectory in deferred:
        agent, updates_applied = _apply_update(agent, trajectory, reward_baseline,
                                               logs[rid], updates_applied)
    expected = sum(1 for rid in logs if logs[rid].rewards())
    if updates_applied != expected:
        raise RuntimeError(f"agent updates {updates_applied} != episodes with feedback {expected}")

    kept = filter_top_k(pseudo, logs, config, init_preds)
    round_dir = _round_dir(out, round_index)
    (round_dir / "pseudo").mkdir(parents=True, exist_ok=True)
    for rid in sorted(pseudo):
        write_mask(round_dir / "pseudo" / f"{rid}.pgm", pseudo[rid].bits)

    train_ids: list[tuple[str, int]] = [(rid, round_index) for rid in kept]
    if config.cumulative_pseudo:
        train_ids = history + train_ids
    pseudo_for = lambda rid, rnd: (pseudo[rid] if rnd == round_index
                                   else Mask(read_mask(_round_dir(out, rnd) / "pseudo" / f"{rid}.pgm")))
    # adapt the feature space first, then fine-tune the learner on the features
    # it will actually see next round (the learner consumes adapter output, so
    # training it on pre-adaptation features would invalidate it every round)
    adapt_set = [(raw_fmaps[rid], pseudo_for(rid, rnd)) for rid, rnd in train_ids]
    adapter, adapter_losses = adapt_features(adapter, adapt_set, config.adapter_steps,
                                             _seed_int(adapter_seed))
    seg_set = [(apply_adapter(adapter, raw_fmaps[rid]), pseudo_for(rid, rnd))
               for rid, rnd in train_ids]
    seg_params, seg_losses = seg.train(seg_params, seg_set, _seed_int(seg_seed))
    history.extend((rid, round_index) for rid in kept)

    random_baseline = None
    if config.eval_random_baseline:
        rb_rng = np.random.default_rng(baseline_seed)
        all_rewards = []
        for record in manifest.records:
            judge = _make_judge(record, config, flip_rng, bridge, round_index,
                                for_baseline=True)
            all_rewards.extend(random_episode(record, adapted[record.id],
                                              init_preds[record.id], config, ps, rb_rng, judge))
        random_baseline = float(np.mean(all_rewards))

    state = {
        "round": round_index,
        "kept_ids": kept,
        "episodes": {rid: _episode_to_dict(logs[rid]) for rid in sorted(logs)},
        "seg_loss": seg_losses,
        "adapter_loss": adapter_losses,
        "random_baseline_mean_reward": random_baseline,
    }
    _dump_json(round_dir / "state.json", state)
    save_checkpoint(round_dir / "agent.ckpt", *policy_to_arrays(agent))
    save_checkpoint(round_dir / "seg.ckpt", {"weight": seg_params.weight},
                    {"bias": seg_params.bias, "learning_rate": seg_params.learning_rate,
                     "epochs": seg_params.epochs, "batch_size": seg_params.batch_size,
                     "round": round_index})
    save_checkpoint(round_dir / "adapter.ckpt", {"weight": adapter.weight},
                    {"learning_rate": adapter.learning_rate, "margin": adapter.margin,
                     "round": round_index})
    _dump_json(round_dir / "report.json", build_report(state))
    return agent, seg_params, adapter


def _apply_update(agent, trajectory, reward_baseline, ep_log, updates_applied):
    if not trajectory:  # every step timed out (human mode); nothing to learn from
        logger.warning("episode %s produced no judged steps; agent update skipped",
                       ep_log.image_id)
        return agent, updates_applied
    agent, grad_norm = reinforce_update(agent, trajectory, reward_baseline)
    ep_log.grad_norm = grad_norm
    return agent, updates_applied + 1


def _make_judge(record, config, flip_rng, bridge, round_index, for_baseline=False):
    if config.oracle_mode == "simulated":
        def judge(m_new, m_current, t):
            return judge_simulated(m_new, m_current, record.gt_mask,
                                   flip_prob=0.0 if for_baseline else config.flip_prob,
                                   rng=flip_rng)
        return judge

    def judge(m_new, m_current, t):
        return judge_human(bridge, m_new, m_current, record, round_index, t,
                           timeout_s=config.human_timeout_s)
    return judge


def _persist_resume(out, completed_rounds, rng_states, history, status):
    sample_state, flip_state = rng_states
    _dump_json(out / "run_state.json", {
        "status": status,
        "completed_rounds": completed_rounds,
        "sample_rng_state": sample_state,
        "flip_rng_state": flip_state,
        "history": [[rid, rnd] for rid, rnd in history],
    })


def _rng_state(rng: np.random.Generator) -> dict:
    return json.loads(json.dumps(rng.bit_generator.state, default=int))


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    st = dict(state)
    st["state"] = {k: (int(v) if isinstance(v, (int, float)) else v)
                   for k, v in state["state"].items()}
    rng.bit_generator.state = st


def _load_resume(out, sample_rng, flip_rng, agent, seg_params, adapter):
    doc = json.loads((out / "run_state.json").read_text(encoding="utf-8"))
    completed = doc["completed_rounds"]
    _set_rng_state(sample_rng, doc["sample_rng_state"])
    _set_rng_state(flip_rng, doc["flip_rng_state"])
    history = [(rid, rnd) for rid, rnd in doc["history"]]
    if completed < 1:
        return agent, seg_params, adapter, sample_rng, flip_rng, 1, history
    latest = _round_dir(out, completed)
    arrays, meta = load_checkpoint(latest / "agent.ckpt")
    agent = policy_from_arrays(arrays, meta)
    seg_arrays, seg_meta = load_checkpoint(latest / "seg.ckpt")
    seg_params = seg.SegModelParams(weight=seg_arrays["weight"], bias=float(seg_meta["bias"]),
                                    learning_rate=float(seg_meta["learning_rate"]),
                                    epochs=int(seg_meta["epochs"]),
                                    batch_size=int(seg_meta["batch_size"]))
    ad_arrays, ad_meta = load_checkpoint(latest / "adapter.ckpt")
    adapter = AdapterParams(weight=ad_arrays["weight"],
                            learning_rate=float(ad_meta["learning_rate"]),
                            margin=float(ad_meta["margin"]))
    logger.info("resuming after round %d", completed)
    return agent, seg_params, adapter, sample_rng, flip_rng, completed + 1, history
