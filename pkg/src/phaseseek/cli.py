"""Command-line pipeline: synth, train, infer, eval, ribbon.

Every command is deterministic for a fixed (config, seed).  Options can be
preloaded from a flat ``key=value`` config file via ``--config``; explicit
command-line flags win.  Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .compose import gaussian_compose
from .errors import PhaseseekError
from .features import (
    PhaseLabels,
    SynthConfig,
    TransitionSet,
    labels_to_transitions,
    load_features,
    load_labels,
    save_features,
    save_labels,
    synth_dataset,
)
from .inference import (
    FixedInit,
    PredictionInit,
    fit_fi,
    init_positions,
    rollout,
    train_clip_classifier,
)
from .metrics import evaluate_video, write_report
from .nets import adam_init, clone_params, load_checkpoint, param_list, save_checkpoint
from .training import AgentPair, ReplayMemory, TrainConfig, train

TRANSITIONS_SCHEMA_VERSION = 1

# One distinct color per phase id (cycled); the last entry is reused for
# the uncovered-clip sentinel when it appears.
PALETTE = [
    (230, 64, 52), (46, 134, 222), (38, 166, 91), (244, 179, 80),
    (142, 68, 173), (0, 184, 184), (255, 121, 180), (128, 128, 64),
    (70, 70, 200), (200, 120, 40),
]
GRAY = (160, 160, 160)


class UsageError(Exception):
    """Bad arguments or option combinations (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _iter_parsers(parser: argparse.ArgumentParser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            seen = set()
            for sub in action.choices.values():
                if id(sub) not in seen:  # aliases share a parser
                    seen.add(id(sub))
                    yield from _iter_parsers(sub)


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    # --config seeds parser defaults so explicit flags still override.
    # Defaults must land on the subparsers: they parse into a fresh
    # namespace, ignoring defaults registered on the root parser.
    probe = _Parser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    values = _load_config_file(known.config)
    actions: dict[str, argparse.Action] = {}
    for sub in _iter_parsers(parser):
        for action in sub._actions:
            if action.dest != "help":
                actions.setdefault(action.dest, action)
    unknown = [k for k in values if k not in actions]
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    defaults = {}
    for key, value in values.items():
        action = actions[key]
        if action.type is not None:
            try:
                value = action.type(value)
            except ValueError as exc:
                raise UsageError(f"config key {key}: {value!r} is not a valid value") from exc
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key}: {value!r} not in {sorted(action.choices)}")
        defaults[key] = value
    for sub in _iter_parsers(parser):
        known_dests = {a.dest for a in sub._actions}
        subset = {k: v for k, v in defaults.items() if k in known_dests}
        if subset:
            sub.set_defaults(**subset)


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--phases", type=int, default=3, help="number of phases N")
    parser.add_argument("--window", type=int, default=5, help="search window length L (odd)")
    parser.add_argument("--init", choices=["fi", "rmi"], default="fi")


def _train_config(args, phase: int) -> TrainConfig:
    return TrainConfig(
        episodes_max=args.episodes,
        max_steps_per_video=args.max_steps,
        batch=args.batch,
        lr=args.lr,
        gamma=args.gamma,
        eps_start=args.eps_start,
        eps_min=args.eps_min,
        eps_decay=args.eps_decay,
        target_sync_period=args.target_sync,
        seed=args.seed + phase,
        window_len=args.window,
        hidden_dim=args.hidden,
        num_layers=args.layers,
        memory_capacity=args.memory,
    )


def _validate_common(args) -> None:
    if args.phases < 1:
        raise UsageError("--phases must be >= 1")
    if args.window < 1 or args.window % 2 == 0:
        raise UsageError("--window must be a positive odd number")


def _video_stems(features_dir: Path) -> list[str]:
    stems = sorted(p.stem for p in features_dir.glob("*.trnf"))
    if not stems:
        raise PhaseseekError(f"no .trnf files in {features_dir}")
    return stems


def _load_dataset(features_dir: Path, labels_dir: Path, num_phases: int):
    """(stems, [(FeatureSequence, PhaseLabels)]) for every feature file."""
    stems = _video_stems(features_dir)
    out = []
    for stem in stems:
        label_path = labels_dir / f"{stem}.csv"
        if not label_path.exists():
            raise PhaseseekError(f"missing labels for video {stem}")
        seq = load_features(features_dir / f"{stem}.trnf")
        labels = load_labels(label_path, num_phases)
        if labels.num_clips != seq.num_clips:
            raise PhaseseekError(f"{stem}: labels cover {labels.num_clips} clips, features {seq.num_clips}")
        out.append((seq, labels))
    return stems, out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    _validate_common(args)
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    cfg = SynthConfig(
        num_phases=args.phases,
        min_len=args.min_len,
        max_len=args.max_len,
        dim=args.dim,
        noise_sigma=args.noise,
        blend_width=args.blend,
        dropout_prob=args.dropout,
        clip_len_frames=args.clip_len,
        fps=args.fps,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, (seq, labels) in enumerate(synth_dataset(cfg, args.count, args.seed)):
        save_features(seq, out_dir / f"video_{i:03d}.trnf")
        save_labels(labels, out_dir / f"video_{i:03d}.csv")
    print(f"wrote {args.count} video(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _meta_path(ckpt_dir: Path, phase: int) -> Path:
    return ckpt_dir / f"phase{phase}_meta.json"


def cmd_train(args) -> int:
    _validate_common(args)
    if not 0 <= args.phase < args.phases:
        raise UsageError(f"--phase must lie in [0, {args.phases})")
    features_dir, labels_dir = Path(args.features_dir), Path(args.labels_dir)
    stems, labeled = _load_dataset(features_dir, labels_dir, args.phases)
    dataset = [(seq, labels_to_transitions(labels)) for seq, labels in labeled]
    fi = fit_fi([(seq.num_clips, ts) for seq, ts in dataset], args.phase)
    cfg = _train_config(args, args.phase)
    init = fi
    if args.init == "rmi":
        clf = train_clip_classifier(
            np.concatenate([seq.features for seq, _ in labeled]),
            np.concatenate([labels.labels for _, labels in labeled]),
            num_phases=args.phases,
            seed=args.seed,
        )
        init = PredictionInit(clf.predict, fallback=fi)

    ckpt_dir = Path(args.checkpoints_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_rows: list = []
    pair = train(dataset, args.phase, cfg, init, on_video=log_rows.append)

    save_checkpoint(pair.begin_net, ckpt_dir / f"phase{args.phase}_begin.qnet")
    save_checkpoint(pair.end_net, ckpt_dir / f"phase{args.phase}_end.qnet")
    meta = {
        "phase": args.phase,
        "window": args.window,
        "rho_begin": fi.rho_begin,
        "rho_end": fi.rho_end,
        "input_dim": dataset[0][0].dim,
        "hidden": args.hidden,
        "layers": args.layers,
        "seed": args.seed,
    }
    _meta_path(ckpt_dir, args.phase).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    with open(ckpt_dir / f"phase{args.phase}_train_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "video", "begin_loss", "end_loss", "begin_error", "end_error"])
        for row in log_rows:
            writer.writerow([row.episode, stems[row.video], f"{row.begin_loss:.6f}",
                             f"{row.end_loss:.6f}", row.begin_error, row.end_error])
    print(f"phase {args.phase}: trained on {len(dataset)} video(s), "
          f"checkpoints in {ckpt_dir}")
    return 0


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def _load_agent_pair(ckpt_dir: Path, phase: int) -> tuple[AgentPair, dict]:
    meta_path = _meta_path(ckpt_dir, phase)
    if not meta_path.exists():
        raise PhaseseekError(f"missing checkpoint metadata for phase {phase}: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    begin = load_checkpoint(ckpt_dir / f"phase{phase}_begin.qnet")
    end = load_checkpoint(ckpt_dir / f"phase{phase}_end.qnet")
    pair = AgentPair(
        begin_net=begin,
        end_net=end,
        begin_target=clone_params(begin),
        end_target=clone_params(end),
        begin_adam=adam_init(param_list(begin)),
        end_adam=adam_init(param_list(end)),
        begin_memory=ReplayMemory(1),
        end_memory=ReplayMemory(1),
        window_len=int(meta["window"]),
    )
    return pair, meta


def cmd_infer(args) -> int:
    _validate_common(args)
    single_phase = args.phase is not None
    if single_phase and not 0 <= args.phase < args.phases:
        raise UsageError(f"--phase must lie in [0, {args.phases})")
    phases = [args.phase] if single_phase else list(range(args.phases))

    ckpt_dir = Path(args.checkpoints_dir)
    pairs, metas = {}, {}
    for phase in phases:
        pairs[phase], metas[phase] = _load_agent_pair(ckpt_dir, phase)

    predictions_dir = None
    predictor = None
    if args.init == "rmi":
        if args.rmi_predictions_dir:
            predictions_dir = Path(args.rmi_predictions_dir)
        elif args.train_features_dir and args.train_labels_dir:
            _, labeled = _load_dataset(Path(args.train_features_dir),
                                       Path(args.train_labels_dir), args.phases)
            clf = train_clip_classifier(
                np.concatenate([seq.features for seq, _ in labeled]),
                np.concatenate([labels.labels for _, labels in labeled]),
                num_phases=args.phases,
                seed=args.seed,
            )
            predictor = clf.predict
        else:
            raise UsageError("rmi initialization needs --rmi-predictions-dir, or "
                             "--train-features-dir and --train-labels-dir")

    features_dir = Path(args.features_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = _video_stems(features_dir)
    for stem in stems:
        seq = load_features(features_dir / f"{stem}.trnf")
        video_predictor = predictor
        if predictions_dir is not None:
            pred_path = predictions_dir / f"{stem}.csv"
            if not pred_path.exists():
                raise PhaseseekError(f"missing prediction labels for video {stem}")
            provided = load_labels(pred_path, args.phases).labels
            video_predictor = lambda video, labels=provided: labels
        rmi = video_predictor is not None
        visited_sets = []
        pair_results = {}
        for phase in phases:
            fi = FixedInit(metas[phase]["rho_begin"], metas[phase]["rho_end"])
            init = PredictionInit(video_predictor, fallback=fi) if rmi else fi
            start = init_positions(init, seq, phase)
            result = rollout(pairs[phase], seq, start, max_steps=args.max_steps)
            # prediction-based starts imply every clip was read upstream
            visited = set(range(seq.num_clips)) if rmi else result.visited
            visited_sets.append(visited)
            pair_results[phase] = result

        all_visited = set().union(*visited_sets)
        coverage = len(all_visited) / seq.num_clips
        if single_phase:
            phase = phases[0]
            res = pair_results[phase]
            labels = np.zeros(seq.num_clips, dtype=np.int64)
            labels[res.begin: res.end + 1] = 1
            pred = PhaseLabels(labels, num_phases=2)
        else:
            ts = TransitionSet(
                num_phases=args.phases,
                pairs={ph: (r.begin, r.end) for ph, r in pair_results.items()},
            )
            pred = gaussian_compose(ts, seq.num_clips)
        save_labels(pred, out_dir / f"{stem}.csv")
        payload = {
            "schema_version": TRANSITIONS_SCHEMA_VERSION,
            "video": stem,
            "num_clips": seq.num_clips,
            "init": args.init,
            "single_phase": phases[0] if single_phase else None,
            "coverage": coverage,
            "phases": {
                str(ph): {
                    "begin": r.begin,
                    "end": r.end,
                    "steps": r.steps_taken,
                    "converged": r.converged,
                }
                for ph, r in pair_results.items()
            },
        }
        (out_dir / f"{stem}.transitions.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
        print(f"{stem}: coverage {coverage:.3f}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    gt_files = sorted(gt_dir.glob("*.csv"))
    if not gt_files:
        raise PhaseseekError(f"no groundtruth label files in {gt_dir}")
    missing = [p.stem for p in gt_files if not (pred_dir / p.name).exists()]
    if missing:
        raise PhaseseekError(f"missing prediction files for: {', '.join(missing)}")
    reports = []
    for gt_path in gt_files:
        gt = load_labels(gt_path)
        pred = load_labels(pred_dir / gt_path.name)
        coverage = None
        trans_path = pred_dir / f"{gt_path.stem}.transitions.json"
        if trans_path.exists():
            coverage = float(json.loads(trans_path.read_text(encoding="utf-8"))["coverage"])
        reports.append(evaluate_video(pred.labels, gt.labels, video=gt_path.stem,
                                      coverage=coverage))
    report_path = Path(args.report)
    payload = write_report(reports, report_path, report_path.with_suffix(".csv"))
    agg = payload["aggregate"]
    print(f"{len(reports)} video(s): accuracy {agg['accuracy']['mean']:.3f} "
          f"± {agg['accuracy']['std']:.3f}, F1 {agg['f1']['mean']:.3f}, "
          f"event ratio {agg['event_ratio']:.3f}, ward {agg['ward_event_ratio']:.3f}, "
          f"coverage {agg['coverage']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# ribbon
# ---------------------------------------------------------------------------

def _label_color(label: int) -> tuple[int, int, int]:
    if label < 0:
        return GRAY
    return PALETTE[label % len(PALETTE)]


def cmd_ribbon(args) -> int:
    if args.band_height < 1:
        raise UsageError("--band-height must be >= 1")
    if not args.labels:
        raise UsageError("ribbon needs at least one label CSV")
    sequences = [load_labels(path).labels for path in args.labels]
    width = max(len(s) for s in sequences)
    height = args.band_height * len(sequences)
    lines = ["P3", f"{width} {height}", "255"]
    for seq in sequences:
        row_lines = []
        for x in range(width):
            color = _label_color(int(seq[x])) if x < len(seq) else (255, 255, 255)
            row_lines.append(f"{color[0]} {color[1]} {color[2]}")
        lines.extend(row_lines * args.band_height)
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {width}x{height} ribbon to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phaseseek", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic videos")
    _add_shared(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--min-len", type=int, default=67)
    p.add_argument("--max-len", type=int, default=133)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--blend", type=int, default=2)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--clip-len", type=int, default=16)
    p.add_argument("--fps", type=float, default=2.4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one phase's agent pair")
    _add_shared(p)
    p.add_argument("--phase", type=int, required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--checkpoints-dir", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--eps-start", type=float, default=0.9)
    p.add_argument("--eps-min", type=float, default=0.05)
    p.add_argument("--eps-decay", type=float, default=0.995)
    p.add_argument("--target-sync", type=int, default=100)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--memory", type=int, default=10000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="retrieve transitions and labels")
    _add_shared(p)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--checkpoints-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--phase", type=int, default=None,
                   help="single-phase mode: binary labels, no composition")
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--train-features-dir", help="training split features (rmi)")
    p.add_argument("--train-labels-dir", help="training split labels (rmi)")
    p.add_argument("--rmi-predictions-dir",
                   help="per-clip label CSVs from an external classifier (rmi)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against groundtruth")
    _add_shared(p)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--report", required=True, help="output JSON path (CSV written alongside)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ribbon", help="render label CSVs as a color ribbon")
    p.add_argument("labels", nargs="*", help="label CSV files, one band each")
    p.add_argument("--out", required=True)
    p.add_argument("--band-height", type=int, default=16)
    p.set_defaults(func=cmd_ribbon)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse exit paths (--help, bad flags)
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PhaseseekError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
