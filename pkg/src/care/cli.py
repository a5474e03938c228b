"""Command-line surface: synth, rectify, verify, evaluate.

Configuration comes from built-in defaults, optionally a JSON config file
(--config), with individual flags winning over both. The effective config is
echoed into report.json for provenance. Every command is idempotent under a
fixed seed: reruns produce byte-identical artifacts.

Exit codes: 0 success, 1 validation error, 2 IO error, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as care_io
from .consensus import KPolicy
from .core import Dataset, validate_dataset
from .experts import load_confidence_file
from .metrics import (MetricRecord, accuracy, group_split, macro_f1,
                      noise_rate_by_group, per_class_noise_rate)
from .synth import (ClusterSpec, ImbalanceSpec, NoiseSpec, empirical_noise_rate,
                    inject_noise, longtail_profile, synth_features)
from .trainer import TrainConfig, run_care
from .verify import (THEOREM1_RATIO_THRESHOLD, TheoryTrialConfig,
                     ablation_single_expert, baseline_ie_probs,
                     mc_proposition1, mc_theorem1, oracle_equivalence)

_NOISE_ALIASES = {
    "symmetric": "symmetric-uniform",
    "pairflip": "asymmetric-pairflip",
    "asymmetric": "asymmetric-pairflip",
}


class CliValidationError(Exception):
    pass


class VerificationFailure(Exception):
    pass


@dataclass
class RunConfig:
    """Every knob of the pipeline, with documented defaults."""

    seed: int = 1234
    # synthetic data
    classes: int = 20
    n1: int = 500                       # largest class size
    imbalance_factor: float = 10.0
    noise: str = "symmetric-uniform"
    noise_rate: float = 0.5
    feature_dim: int = 64
    spread: float = 0.3                 # intra-class cluster spread
    # consensus
    k_form: str = "quarter"
    k_global: int = 4
    k_step: tuple[int, int, int] = (8, 4, 2)
    k_linear: tuple[int, int] = (1, 9)
    be_weight: float = 1.0
    scale: float = 25.0
    # training
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    loss: str = "la"
    # file-backed experts
    te_file: str | None = None
    ie_file: str | None = None
    # verification
    trials: int = 10_000
    mc_classes: int = 10
    mc_k: int = 2
    delta: float = 0.2
    k_pair: tuple[int, int] = (2, 8)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["k_step"] = list(self.k_step)
        out["k_linear"] = list(self.k_linear)
        out["k_pair"] = list(self.k_pair)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise CliValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("k_step", "k_linear", "k_pair"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def policy(self) -> KPolicy:
        return KPolicy(form=self.k_form, global_k=self.k_global,
                       step_k=self.k_step,
                       linear_k_min=self.k_linear[0],
                       linear_k_max=self.k_linear[1])

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay, loss=self.loss,
                           seed=self.seed)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data: dict = {}
    if path:
        with open(path) as fh:
            data.update(json.load(fh))
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "noise" in data:
        data["noise"] = _NOISE_ALIASES.get(data["noise"], data["noise"])
    return RunConfig.from_dict(data)


def _dump_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_synth(cfg: RunConfig, out_dir: str) -> Path:
    imb = ImbalanceSpec(imbalance_factor=cfg.imbalance_factor,
                        max_per_class=cfg.n1, num_classes=cfg.classes)
    cluster = ClusterSpec(feature_dim=cfg.feature_dim,
                          intra_class_spread=cfg.spread, seed=cfg.seed)
    noise = NoiseSpec(kind=cfg.noise, rate=cfg.noise_rate, seed=cfg.seed)

    counts = longtail_profile(imb)
    clean = synth_features(counts, cluster)
    noisy = inject_noise(clean, noise) if cfg.noise_rate > 0 else clean

    out = Path(out_dir)
    care_io.save_dataset(out, noisy, meta_extra={
        "config": cfg.to_dict(),
        "class_counts": [int(x) for x in counts.counts],
        "empirical_noise_rate": empirical_noise_rate(noisy),
    })
    return out


def _load_validated(data_dir: str) -> Dataset:
    d = care_io.load_dataset(data_dir)
    report = validate_dataset(d)
    if not report.ok:
        raise CliValidationError(f"dataset {data_dir} is invalid:\n{report}")
    return d


def cmd_rectify(cfg: RunConfig, data_dir: str, out_dir: str) -> Path:
    d = _load_validated(data_dir)
    n, c = d.num_samples, d.num_classes

    te_probs = ie_probs = None
    if cfg.te_file:
        te_probs = load_confidence_file(cfg.te_file, n, c)
    if cfg.ie_file:
        ie_probs = load_confidence_file(cfg.ie_file, n, c)

    started = time.time()
    report = run_care(d, cfg.train_config(), policy=cfg.policy(),
                      scale=cfg.scale, be_weight=cfg.be_weight,
                      te_probs=te_probs, ie_probs=ie_probs)
    elapsed = time.time() - started

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
    with open(out / "curves.csv", "w") as fh:
        fh.write("epoch,nr_overall,nr_head,nr_med,nr_tail\n")
        for rec in report.records:
            cells = [rec.epoch, rec.nr_overall, rec.nr_head, rec.nr_med,
                     rec.nr_tail]
            fh.write(",".join("" if x is None else str(x) for x in cells) + "\n")
    care_io.write_array(out / "rectified_labels.u32",
                        report.final_state.labels, "u32")
    _dump_json(out / "report.json", {
        "config": cfg.to_dict(),
        "dataset": str(data_dir),
        "initial": report.records[0].to_dict(),
        "final": report.records[-1].to_dict(),
        "prior": [float(x) for x in report.final_state.prior],
        "runtime_sec": elapsed,
    })
    return out


def cmd_evaluate(run_dir: str, data_dir: str) -> dict:
    d = _load_validated(data_dir)
    labels = care_io.read_array(Path(run_dir) / "rectified_labels.u32").astype(np.int64)
    if labels.shape[0] != d.num_samples:
        raise CliValidationError(
            f"run {run_dir} has {labels.shape[0]} labels, dataset has "
            f"{d.num_samples} samples")

    if d.true_labels is None:
        print("dataset has no ground-truth labels: noise rates unavailable, "
              "and accuracy/F1 against observed labels would be meaningless, "
              "so they are refused", file=sys.stderr)
        record = MetricRecord(None, None, None, None, None, None, None)
    else:
        c = d.num_classes
        split = group_split(np.bincount(d.true_labels, minlength=c))
        nr = noise_rate_by_group(labels, d.true_labels, split)
        record = MetricRecord(
            nr_overall=nr[0], nr_head=nr[1], nr_med=nr[2], nr_tail=nr[3],
            accuracy=accuracy(labels, d.true_labels),
            macro_f1=macro_f1(labels, d.true_labels, c),
            per_class_nr=tuple(per_class_noise_rate(labels, d.true_labels, c)),
        )
    return record.to_dict()


def cmd_verify(cfg: RunConfig, out_path: str | None) -> dict:
    if cfg.trials < 1000:
        print(f"warning: {cfg.trials} trials is below the statistical "
              f"minimum of 1000; results will be noisy", file=sys.stderr)

    mc = TheoryTrialConfig(trials=cfg.trials, num_classes=cfg.mc_classes,
                           k=cfg.mc_k, k_pair=cfg.k_pair, delta=cfg.delta,
                           seed=cfg.seed)
    t1 = mc_theorem1(mc)
    t1_pass = t1.ratio >= THEOREM1_RATIO_THRESHOLD

    prop = mc_proposition1(dataclasses.replace(mc, num_classes=20))
    k_small, k_large = cfg.k_pair
    if k_small == k_large:
        prop_pass = prop.margin == 0.0
    else:
        prop_pass = (not prop.degenerate) and prop.ci_low > 0.0

    oracle = oracle_equivalence(instances=1000, seed=cfg.seed)
    oracle_pass = oracle.passed()

    ablation = _verify_ablation(cfg)

    payload = {
        "theorem1": {
            "joint_prob_true": t1.joint_prob_true,
            "max_joint_prob_wrong": t1.max_joint_prob_wrong,
            "ratio": t1.ratio,
            "threshold": THEOREM1_RATIO_THRESHOLD,
            "pass": t1_pass,
        },
        "proposition1": {
            "k_pair": [k_small, k_large],
            "precision_small_k": prop.precision_small_k,
            "precision_large_k": prop.precision_large_k,
            "margin": prop.margin,
            "ci": [prop.ci_low, prop.ci_high],
            "pass": prop_pass,
        },
        "oracle": {
            "instances": oracle.instances,
            "max_abs_diff": oracle.max_abs_diff,
            "pass": oracle_pass,
        },
        "ablation": ablation,
    }
    if out_path:
        _dump_json(Path(out_path), payload)
    if not (t1_pass and prop_pass and oracle_pass and ablation["pass"]):
        raise VerificationFailure(json.dumps(payload))
    return payload


def _verify_ablation(cfg: RunConfig) -> dict:
    # A small but non-trivial instance keeps this section under a minute.
    counts = longtail_profile(ImbalanceSpec(
        imbalance_factor=10.0, max_per_class=300, num_classes=10))
    clean = synth_features(counts, ClusterSpec(
        feature_dim=32, intra_class_spread=0.25, seed=cfg.seed))
    noisy = inject_noise(clean, NoiseSpec(
        kind="symmetric-uniform", rate=0.4, seed=cfg.seed))
    train = TrainConfig(epochs=8, seed=cfg.seed)
    # Image-side expert for single-expert runs: a head fit to the observed
    # labels, so it is informative from the first pass.
    ie_static = baseline_ie_probs(noisy, train)

    single_te = ablation_single_expert(noisy, "BE+TE", be_weight=1.0, cfg=train)
    single_ie = ablation_single_expert(noisy, "BE+IE", be_weight=1.0, cfg=train,
                                       ie_probs=ie_static)
    triple = ablation_single_expert(noisy, "BE+TE+IE", be_weight=1.0, cfg=train)
    half = ablation_single_expert(noisy, "BE+IE", be_weight=0.5, cfg=train,
                                  ie_probs=ie_static)

    no_correction = all(
        r.nr_overall == run.records[0].nr_overall
        for run in (single_te, single_ie) for r in run.records)
    triple_corrects = triple.final_noise_rate < triple.initial_noise_rate
    half_corrects = half.final_noise_rate < half.initial_noise_rate
    return {
        "single_expert_full_weight_nr": [single_te.initial_noise_rate,
                                         single_te.final_noise_rate,
                                         single_ie.final_noise_rate],
        "three_expert_nr": [triple.initial_noise_rate, triple.final_noise_rate],
        "single_expert_half_weight_nr": [half.initial_noise_rate,
                                         half.final_noise_rate],
        "no_correction_at_full_weight": no_correction,
        "three_experts_correct": bool(triple_corrects),
        "half_weight_corrects": bool(half_corrects),
        "pass": bool(no_correction and triple_corrects and half_corrects),
    }


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file; flags override its values")
    p.add_argument("--out", type=str, default=None, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="care",
        description="Class-adaptive expert consensus for long-tailed noisy labels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    _add_common(p)
    p.add_argument("--if", dest="imbalance_factor", type=float, default=None)
    p.add_argument("--nr", dest="noise_rate", type=float, default=None)
    p.add_argument("--noise", type=str, default=None,
                   choices=sorted(set(_NOISE_ALIASES) | {"symmetric-uniform",
                                  "asymmetric-pairflip", "joint"}))
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--n1", type=int, default=None)
    p.add_argument("--dim", dest="feature_dim", type=int, default=None)
    p.add_argument("--spread", type=float, default=None)

    p = sub.add_parser("rectify", help="run consensus rectification + training")
    _add_common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--k-form", dest="k_form", type=str, default=None,
                   choices=["quarter", "step", "exp", "log", "linear", "global"])
    p.add_argument("--k-global", dest="k_global", type=int, default=None)
    p.add_argument("--loss", type=str, default=None, choices=["la", "ce"])
    p.add_argument("--be-weight", dest="be_weight", type=float, default=None)
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--te-file", dest="te_file", type=str, default=None)
    p.add_argument("--ie-file", dest="ie_file", type=str, default=None)

    p = sub.add_parser("verify", help="statistical + oracle verification suite")
    _add_common(p)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--k-pair", dest="k_pair", type=int, nargs=2, default=None)

    p = sub.add_parser("evaluate", help="metrics for a finished rectify run")
    _add_common(p)
    p.add_argument("--run", type=str, required=True)
    p.add_argument("--data", type=str, required=True)
    return parser


_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    if overrides.get("k_pair") is not None:
        overrides["k_pair"] = tuple(overrides["k_pair"])

    try:
        cfg = load_config(args.config, overrides)
        if args.command == "synth":
            if not args.out:
                raise CliValidationError("synth requires --out")
            out = cmd_synth(cfg, args.out)
            print(f"wrote dataset to {out}")
        elif args.command == "rectify":
            if not args.out:
                raise CliValidationError("rectify requires --out")
            out = cmd_rectify(cfg, args.data, args.out)
            print(f"wrote run artifacts to {out}")
        elif args.command == "verify":
            payload = cmd_verify(cfg, args.out)
            print(json.dumps(payload, indent=2))
        elif args.command == "evaluate":
            record = cmd_evaluate(args.run, args.data)
            payload = json.dumps(record, indent=2)
            if args.out:
                Path(args.out).write_text(payload + "\n")
            print(payload)
    except (CliValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
