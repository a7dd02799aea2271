"""Batch command line: ``rivetkey <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 runtime failure.
Each command prints one summary line on stdout; logs go to stderr with the
level taken from ``RIVETKEY_LOG`` (error, info or debug).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import DataError

log = logging.getLogger("rivetkey")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from err
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("thresholds must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="rivetkey", description="SPR joint keypoint pipeline", formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("gen", help="generate a phantom dataset", formatter_class=fmt)
    c.add_argument("--domain", choices=("clean", "noisy"), required=True)
    c.add_argument("--count", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--size", type=int, default=224, help="render canvas size in px")

    c = sub.add_parser("split", help="config-exclusive train/test split", formatter_class=fmt)
    c.add_argument("--manifest", required=True)
    c.add_argument("--ratio", type=float, default=0.8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="output directory for train.json/test.json")

    for name, helptext in (("train", "pretrain or train from scratch"),
                           ("finetune", "continue training from a checkpoint")):
        c = sub.add_parser(name, help=helptext, formatter_class=fmt)
        c.add_argument("--config", default=None,
                       help="training config JSON (defaults to the full-length protocol)")
        c.add_argument("--train-manifest", required=True)
        c.add_argument("--out", required=True, help="output directory for checkpoint and log")
        if name == "train":
            c.add_argument("--phase", choices=("pretrain", "scratch"), default="pretrain")
        else:
            c.add_argument("--init", required=True, help="checkpoint to start from")

    c = sub.add_parser("predict", help="predict keypoints", formatter_class=fmt)
    c.add_argument("--ckpt", required=True)
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True, help="predictions JSON path")
    c.add_argument("--subpixel", action=argparse.BooleanOptionalAction, default=True)

    c = sub.add_parser("eval", help="PCK / MPJPE / OKS report", formatter_class=fmt)
    c.add_argument("--preds", required=True)
    c.add_argument("--manifest", required=True)
    c.add_argument("--pck-thresholds", type=_float_list, default="10,50")
    c.add_argument("--oks-k", type=float, default=0.1)
    c.add_argument("--out", default=None, help="optional report JSON path")

    c = sub.add_parser("measure", help="head height, interlock, bottom thickness",
                       formatter_class=fmt)
    c.add_argument("--manifest", required=True)
    c.add_argument("--preds", default=None,
                   help="measure predicted keypoints instead of ground truth")
    c.add_argument("--out", required=True, help="measurements JSON path")

    c = sub.add_parser("render", help="overlay and heatmap figures", formatter_class=fmt)
    c.add_argument("--manifest", required=True)
    c.add_argument("--preds", default=None)
    c.add_argument("--ckpt", default=None, help="also draw per-keypoint confidence maps")
    c.add_argument("--count", type=int, default=4, help="number of samples to draw")
    c.add_argument("--out", required=True, help="output directory")
    return p


# --- commands -------------------------------------------------------------

def _cmd_gen(a):
    from .phantom import generate_dataset
    if a.count < 1:
        raise UsageError("--count must be >= 1")
    m = generate_dataset(a.count, a.domain, a.seed, a.out, size=a.size)
    return f"gen: wrote {len(m)} {a.domain} samples to {Path(a.out) / 'manifest.json'}"


def _cmd_split(a):
    from .dataio import read_manifest, split_by_config, write_manifest
    if not 0 < a.ratio < 1:
        raise UsageError("--ratio must lie strictly between 0 and 1")
    m = read_manifest(a.manifest)
    train, test = split_by_config(m, a.ratio, a.seed)
    out = Path(a.out)
    write_manifest(train, out / "train.json")
    write_manifest(test, out / "test.json")
    n_tr = len({s.config_id for s in train})
    n_te = len({s.config_id for s in test})
    return (f"split: train {len(train)} samples / {n_tr} configs, "
            f"test {len(test)} samples / {n_te} configs")


def _train_common(a, phase, init):
    from .dataio import read_manifest
    from .model import ModelConfig, save_checkpoint
    from .train import finetune_config, load_train_config, pretrain_config, run_phase
    if a.config:
        cfg, model_cfg = load_train_config(a.config)
    else:
        cfg = finetune_config() if phase == "finetune" else pretrain_config()
        model_cfg = ModelConfig()
    m = read_manifest(a.train_manifest)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{phase}_log.jsonl"
    if log_path.exists():
        log_path.unlink()
    ckpt = run_phase(init, m, cfg, phase, model_config=model_cfg, log_path=log_path)
    path = save_checkpoint(ckpt, out / f"{phase}.pt")
    last = ckpt.history[-1]
    return f"{phase}: {cfg.epochs} epochs, final train loss {last['train_loss']:.5f}, checkpoint {path}"


def _cmd_train(a):
    return _train_common(a, a.phase, None)


def _cmd_finetune(a):
    from .model import load_checkpoint
    return _train_common(a, "finetune", load_checkpoint(a.init))


def _cmd_predict(a):
    from .dataio import read_manifest, write_predictions
    from .model import load_checkpoint
    from .train import predict
    m = read_manifest(a.manifest)
    preds = predict(load_checkpoint(a.ckpt), m, subpixel=a.subpixel)
    preds.checkpoint = str(a.ckpt)
    write_predictions(preds, a.out)
    return f"predict: {len(preds)} samples -> {a.out}"


def _cmd_eval(a):
    from .dataio import atomic_write_json, read_manifest, read_predictions
    from .metrics import evaluate
    report = evaluate(read_predictions(a.preds), read_manifest(a.manifest),
                      taus=a.pck_thresholds, k=a.oks_k)
    if a.out:
        atomic_write_json(a.out, report.to_dict())
    return f"eval: {report.sample_count} samples  {report.table_row()}"


def _cmd_measure(a):
    from .dataio import atomic_write_json, read_manifest, read_predictions
    from .errors import InvertedPair, UnknownId
    from .measure import bottom_thickness, head_height, interlock
    m = read_manifest(a.manifest)
    by_id = m.by_id()
    if a.preds:
        items = [(p.id, p.keypoints) for p in read_predictions(a.preds)]
    else:
        items = [(s.id, s.keypoints) for s in m.samples]
    rows = []
    for sid, kps in items:
        if sid not in by_id:
            raise UnknownId(f"id {sid!r} is not in the manifest")
        pitch = by_id[sid].pixel_pitch_mm
        try:
            d_b = bottom_thickness(kps, pitch)
        except InvertedPair:
            log.warning("%s: K6 above K5, bottom thickness undefined", sid)
            d_b = None
        rows.append({"id": sid, "d_h_mm": head_height(kps, pitch),
                     "d_i_mm": interlock(kps, pitch), "d_b_mm": d_b})
    atomic_write_json(a.out, rows)
    return f"measure: {len(rows)} samples -> {a.out}"


def _cmd_render(a):
    from . import figures
    from .dataio import load_png, preprocess, read_manifest, read_predictions
    from .errors import UnknownId
    m = read_manifest(a.manifest)
    preds = read_predictions(a.preds).predictions if a.preds else None
    by_id = m.by_id()
    model = None
    if a.ckpt:
        from .model import load_checkpoint
        model = load_checkpoint(a.ckpt).model
    chosen = [p.id for p in preds] if preds else [s.id for s in m.samples]
    chosen = chosen[:max(a.count, 0)]
    pred_by_id = {p.id: p for p in preds} if preds else {}
    out = Path(a.out)
    written = 0
    for sid in chosen:
        if sid not in by_id:
            raise UnknownId(f"id {sid!r} is not in the manifest")
        sample = by_id[sid]
        image = load_png(m.image_file(sample))
        pred = pred_by_id[sid].keypoints if sid in pred_by_id else None
        figures.overlay(image, sample.keypoints, pred, title=sid, path=out / f"{sid}_overlay.png")
        written += 1
        if model is not None:
            from .heatmap import decode
            from .train import predict_heatmaps
            img_p, _, _ = preprocess(image, size=model.config.input_size)
            maps = predict_heatmaps(model, [img_p * 2.0 - 1.0])[0]
            _, conf = decode(maps)
            figures.heatmap_panel(img_p, maps, conf, path=out / f"{sid}_heatmaps.png")
            written += 1
    return f"render: {written} figures -> {out}"


COMMANDS = {
    "gen": _cmd_gen, "split": _cmd_split, "train": _cmd_train, "finetune": _cmd_finetune,
    "predict": _cmd_predict, "eval": _cmd_eval, "measure": _cmd_measure, "render": _cmd_render,
}


def _setup_logging():
    level = os.environ.get("RIVETKEY_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(
        '{"level":"%(levelname)s","logger":"%(name)s","msg":"%(message)s"}'))
    root = logging.getLogger("rivetkey")
    root.handlers[:] = [handler]
    root.setLevel(levels.get(level, logging.INFO))
    root.propagate = False


def run(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        summary = COMMANDS[args.command](args)
    except SystemExit as err:  # --help
        return EXIT_OK if not err.code else EXIT_USAGE
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError, KeyError) as err:
        log.error("%s: %s", type(err).__name__, err)
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:  # noqa: BLE001 - top-level boundary
        log.exception("runtime failure")
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
