"""Command-line entry point: ``salrank <subcommand> ...``.

Exit status is 0 on success, 1 on input errors (including bad flags) and 2
on internal errors. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as sio
from .core import (
    PRESETS,
    ContractError,
    InputError,
    InstanceMap,
    RankScores,
    SalRankError,
    Setting,
)

log = logging.getLogger("salrank")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _threads(n):
    return n if n else (os.cpu_count() or 1)


def _resolve(root: Path | None, p) -> Path:
    p = Path(p)
    if root is None or p.is_absolute():
        return p
    return root / p


def _root(args, fallback: Path | None = None) -> Path | None:
    if args.root:
        return Path(args.root)
    env = os.environ.get("SALRANK_ROOT")
    if env:
        return Path(env)
    return fallback


def _image_stems(directory: Path) -> list[str]:
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    return sorted(p.stem for p in directory.glob("*.png") if ".slice" not in p.name)


def gt_order_from_map(gray: np.ndarray, instances: InstanceMap) -> tuple[int, ...]:
    """Order instances by mean gray value of a graded map (ties: larger total, then label)."""
    flat = instances.grid.ravel()
    sums = np.bincount(flat, weights=gray.ravel().astype(np.float64), minlength=int(flat.max()) + 1)
    mean = {k: float(sums[k]) / instances.size(k) for k in instances.labels}
    total = {k: float(sums[k]) for k in instances.labels}
    order = RankScores(mean, total).strict_order()
    return tuple(k for k in order if mean[k] > 0)


def load_reference(path: Path, instances: InstanceMap) -> tuple[int, ...]:
    if sio.sidecar_path(path).exists():
        return sio.read_ranked_gt(path).order
    return gt_order_from_map(sio.read_png(path), instances)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    from .rankgen import generate_dataset

    manifest = Path(args.manifest)
    root = _root(args, manifest.parent)
    entries = sio.read_manifest(_resolve(None, manifest))
    config = PRESETS[args.preset].with_(
        sigma=args.sigma, mu=args.mu, xi=args.xi, ell=args.ell, gamma=args.gamma,
        alpha1=args.alpha1, alpha2=args.alpha2, alpha=args.alpha,
        setting=Setting(args.setting),
    )
    out = _resolve(_root(args), args.out)
    report = generate_dataset(entries, config, out, root=root or Path("."), threads=_threads(args.threads))
    report["preset"] = args.preset
    sio.write_report(report, out / "report.json")
    s = report["summary"]
    print(f"accepted={s['accepted']} rejected={s['rejected']} error={s['error']} "
          f"report={out / 'report.json'}")
    return EXIT_OK


def _rank_row(stem, pred_dir, gt_dir, inst_dir, mode, alpha):
    from .rankmetrics import ImageRanking, score_image

    try:
        instances = sio.read_instance_map(inst_dir / f"{stem}.png")
        order = load_reference(gt_dir / f"{stem}.png", instances)
        sal = sio.read_saliency(pred_dir / f"{stem}.png")
        return score_image(stem, order, sal, instances, mode, alpha), None
    except SalRankError as exc:
        log.warning("image %s: %s", stem, exc)
        return ImageRanking(stem, None, None, 0), str(exc)


def cmd_eval_rank(args) -> int:
    from .rankmetrics import Mode, summarize

    root = _root(args)
    pred_dir, gt_dir, inst_dir = (_resolve(root, d) for d in (args.pred, args.gt, args.instances))
    mode = Mode(args.mode)
    stems = [s for s in _image_stems(gt_dir)]
    with ThreadPoolExecutor(max_workers=_threads(args.threads)) as pool:
        results = list(pool.map(
            lambda s: _rank_row(s, pred_dir, gt_dir, inst_dir, mode, args.alpha), stems))
    res = summarize([r for r, _ in results])
    report = {"mode": mode.value, "alpha": args.alpha, **res.as_dict()}
    for row, (_, err) in zip(report["per_image"], results):
        if err:
            row["error"] = err
    out = _resolve(root, args.out)
    sio.write_report(report, out)
    sio.write_table(
        [(r.image_id, "" if r.rho is None else r.rho, "" if r.sor is None else r.sor, r.matched)
         for r in res.per_image],
        ("id", "rho", "sor", "matched"), out.with_suffix(".csv"))
    if not args.no_figures:
        from .plotting import plot_sor_hist
        plot_sor_hist([r.sor for r in res.per_image], out.with_suffix(".png"))
    sor_txt = "undefined" if res.dataset_sor is None else sio.fmt_float(res.dataset_sor)
    print(f"dataset_sor={sor_txt} defined={res.defined_count} undefined={res.undefined_count}")
    return EXIT_OK


def _detect_row(stem, pred_dir, obs_dir, beta_sq, levels):
    from .detectmetrics import best_over_observers

    try:
        sal = sio.read_saliency(pred_dir / f"{stem}.png")
        sub = obs_dir / stem
        agreement = sio.read_observers(sub if sub.is_dir() else obs_dir / f"{stem}.png", levels)
        return best_over_observers(sal, agreement, beta_sq), None
    except SalRankError as exc:
        log.warning("image %s: %s", stem, exc)
        return None, str(exc)


def _mean_or_none(vals):
    vals = [v for v in vals if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def cmd_eval_detect(args) -> int:
    from .detectmetrics import DEFAULT_THRESHOLDS

    root = _root(args)
    pred_dir, obs_dir = _resolve(root, args.pred), _resolve(root, args.observers)
    stems = _image_stems(pred_dir)
    with ThreadPoolExecutor(max_workers=_threads(args.threads)) as pool:
        results = list(pool.map(
            lambda s: _detect_row(s, pred_dir, obs_dir, args.beta_sq, args.levels), stems))
    per_image = []
    for stem, (rep, err) in zip(stems, results):
        row = {"id": stem}
        row.update(rep.as_dict() if rep else {"error": err})
        per_image.append(row)
    good = [r for r, _ in results if r is not None]
    metrics = ("auc", "max_f", "avg_f", "mae", "s_measure")
    report = {
        "beta_sq": args.beta_sq,
        "n_thresholds": len(DEFAULT_THRESHOLDS),
        "evaluated": len(good),
        "failed": len(results) - len(good),
        "mean": {m: _mean_or_none([getattr(r, m) for r in good]) for m in metrics},
        "per_image": per_image,
    }
    out = _resolve(root, args.out)
    sio.write_report(report, out)
    if args.curves:
        cdir = _resolve(root, args.curves)
        for stem, (rep, _) in zip(stems, results):
            if rep is not None:
                sio.write_curve(rep.curve, cdir / f"{stem}.csv")
        if good:
            cols = {f: np.mean([[getattr(p, f) for p in r.curve] for r in good], axis=0)
                    for f in ("precision", "recall", "tpr", "fpr")}
            rows = [(float(t), float(cols["precision"][i]), float(cols["recall"][i]),
                     float(cols["tpr"][i]), float(cols["fpr"][i]))
                    for i, t in enumerate(DEFAULT_THRESHOLDS)]
            sio.write_table(rows, sio.CURVE_HEADER, cdir / "mean.csv")
            if not args.no_figures:
                from .plotting import plot_curves
                plot_curves(cols["precision"], cols["recall"], cols["tpr"], cols["fpr"],
                            cdir / "curves.png", title=f"{len(good)} images")
    m = report["mean"]
    print(" ".join(f"{k}={'undefined' if m[k] is None else sio.fmt_float(m[k])}" for k in metrics))
    return EXIT_OK


def _load_corpus(manifest: Path, root: Path | None, need: str):
    from .analysis import CorpusItem

    root = root or manifest.parent
    items = []
    for e in sio.read_manifest(manifest):
        instances = sio.read_instance_map(_resolve(root, e.instance_map))
        if need == "reference":
            if not e.reference_rank or not e.fixations:
                raise InputError(f"corpus entry {e.id!r} lacks fixations or reference_rank")
            items.append(CorpusItem(
                e.id, instances,
                fixations=sio.read_fixations(_resolve(root, e.fixations)),
                reference=load_reference(_resolve(root, e.reference_rank), instances)))
        else:
            if not e.observer_masks:
                raise InputError(f"corpus entry {e.id!r} lacks observer_masks")
            paths = [_resolve(root, p) for p in e.observer_masks]
            if len(paths) == 1 and paths[0].is_dir():
                obs = sio.read_observers(paths[0])
            else:
                from .core import ObserverMaskSet
                obs = ObserverMaskSet(tuple(sio.read_png(p) != 0 for p in paths))
            items.append(CorpusItem(e.id, instances, observers=obs))
    return items


def _parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise InputError(f"--values: cannot parse {text!r}") from None
    if not vals:
        raise InputError("--values: empty list")
    return vals


def cmd_sweep(args) -> int:
    from .analysis import param_sweep

    manifest = Path(args.corpus)
    corpus = _load_corpus(manifest, _root(args), "reference")
    base = PRESETS[args.preset].with_(alpha=args.alpha, sigma=args.sigma, mu=args.mu)
    rows = param_sweep(corpus, base, args.axis, _parse_values(args.values), threads=_threads(args.threads))
    out = _resolve(_root(args), args.out)
    sio.write_table(
        [(r.parameter, float(r.value), r.mu, "" if r.sor is None else float(r.sor), r.defined, r.undefined)
         for r in rows],
        ("parameter", "value", "mu", "sor", "defined", "undefined"), out)
    if not args.no_figures:
        from .plotting import plot_sweep
        plot_sweep(rows, out.with_suffix(".png"))
    for r in rows:
        print(f"{r.parameter}={sio.fmt_float(r.value)} sor={'undefined' if r.sor is None else sio.fmt_float(r.sor)}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .analysis import annotator_ablation

    corpus = _load_corpus(Path(args.corpus), _root(args), "observers")
    val = annotator_ablation(corpus, args.remove, args.trials, args.seed, threads=_threads(args.threads))
    txt = "undefined" if val is None else sio.fmt_float(val)
    if args.out:
        sio.write_table([(args.remove, args.trials, args.seed, "" if val is None else float(val))],
                        ("remove", "trials", "seed", "sor"), _resolve(_root(args), args.out))
    print(f"remove={args.remove} trials={args.trials} seed={args.seed} sor={txt}")
    return EXIT_OK


def cmd_stats(args) -> int:
    from .analysis import STATS_HEADER, size_rank_stats

    corpus = _resolve(_root(args), args.corpus)
    if not corpus.is_dir():
        raise InputError(f"{corpus}: not a directory")
    pngs = sorted(p.with_name(p.name[: -len(".rank.json")] + ".png") for p in corpus.glob("*.rank.json"))
    gts = [sio.read_ranked_gt(p) for p in pngs]
    stats = size_rank_stats(gts)
    out = _resolve(_root(args), args.out)
    sio.write_table(stats.rows(), STATS_HEADER, out)
    long_rows = [(r, float(s)) for r in sorted(stats.sizes_by_rank) for s in stats.sizes_by_rank[r]]
    sio.write_table(long_rows, ("rank", "size_fraction"), out.with_suffix(".sizes.csv"))
    if not args.no_figures:
        from .plotting import plot_size_rank
        plot_size_rank(stats, out.with_suffix(".png"))
    print(f"images={stats.n_images} " + " ".join(
        f"count{k}={v}" for k, v in sorted(stats.images_by_count.items())))
    return EXIT_OK


def cmd_validate(args) -> int:
    stem = _resolve(_root(args), args.stack)
    stack = sio.read_stack(stem)
    png = stem.with_name(stem.name + ".png")
    extra = ""
    if sio.sidecar_path(png).exists():
        gt = sio.read_ranked_gt(png)
        extra = f", ranked gt with {len(gt)} instance(s)"
    print(f"ok: {stem} has {stack.n_slices} nested slice(s){extra}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import write_corpus

    path = write_corpus(_resolve(_root(args), args.out), n_images=args.n, seed=args.seed)
    print(f"manifest={path}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--root", help="base directory for relative paths (default: $SALRANK_ROOT)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available CPUs); results do not depend on it")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="salrank", description="Ranked saliency ground truth and evaluation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="synthesize ranked ground truth from a manifest")
    g.add_argument("--manifest", required=True, help="JSON manifest of instance maps and fixations")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--preset", choices=sorted(PRESETS), default="v1", help="parameter preset (default v1)")
    g.add_argument("--setting", choices=[s.value for s in Setting], default="relative")
    g.add_argument("--sigma", type=float, help="Gaussian std in pixels")
    g.add_argument("--mu", type=int, help="Gaussian window side in pixels")
    g.add_argument("--xi", type=int, help="maximum instance count")
    g.add_argument("--ell", type=float, help="minimum fixation coverage fraction")
    g.add_argument("--gamma", type=float, help="maximum salient-area fraction")
    g.add_argument("--alpha1", type=float, help="maximum instance-size fraction")
    g.add_argument("--alpha2", type=float, help="minimum normalized rank score")
    g.add_argument("--alpha", type=float, help="size-normalization exponent (default 0.3)")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("eval-rank", parents=[common], help="SOR of predicted maps against ranked gt")
    r.add_argument("--pred", required=True, help="directory of predicted saliency PNGs")
    r.add_argument("--gt", required=True, help="directory of ranked gt PNGs (with .rank.json sidecars)")
    r.add_argument("--instances", required=True, help="directory of instance-map PNGs")
    r.add_argument("--mode", choices=["avg", "pow", "max"], default="avg")
    r.add_argument("--alpha", type=float, default=0.3, help="exponent for pow mode")
    r.add_argument("--out", required=True, help="report JSON path (CSV and figure written alongside)")
    r.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    r.set_defaults(func=cmd_eval_rank)

    d = sub.add_parser("eval-detect", parents=[common], help="AUC/F/MAE/S-measure over observer levels")
    d.add_argument("--pred", required=True, help="directory of predicted saliency PNGs")
    d.add_argument("--observers", required=True,
                   help="directory with <id>/ mask folders or <id>.png agreement-count maps")
    d.add_argument("--beta-sq", type=float, default=0.3, help="F-measure beta squared (default 0.3)")
    d.add_argument("--levels", type=int, default=None, help="observer count for agreement-count maps")
    d.add_argument("--out", required=True, help="report JSON path")
    d.add_argument("--curves", help="directory for per-image and mean curve CSVs")
    d.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    d.set_defaults(func=cmd_eval_detect)

    s = sub.add_parser("sweep", parents=[common], help="SOR against reference rankings over a parameter")
    s.add_argument("--corpus", required=True, help="manifest with fixations and reference_rank")
    s.add_argument("--axis", choices=["alpha", "sigma"], required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--preset", choices=sorted(PRESETS), default="v1")
    s.add_argument("--alpha", type=float, help="fixed exponent for the sigma axis")
    s.add_argument("--sigma", type=float, help="fixed sigma for the alpha axis")
    s.add_argument("--mu", type=int, help="fixed window for the alpha axis")
    s.add_argument("--out", required=True, help="CSV path (figure written alongside)")
    s.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate", parents=[common], help="annotator-removal ablation")
    a.add_argument("--corpus", required=True, help="manifest with instance maps and observer_masks")
    a.add_argument("--remove", type=int, required=True, help="annotators removed per trial")
    a.add_argument("--trials", type=int, default=5)
    a.add_argument("--seed", type=int, default=0, help="64-bit seed for the PCG64 generator")
    a.add_argument("--out", help="optional CSV path")
    a.set_defaults(func=cmd_ablate)

    t = sub.add_parser("stats", parents=[common], help="size-vs-rank statistics of generated gt")
    t.add_argument("--corpus", required=True, help="directory of generated <id>.png + <id>.rank.json")
    t.add_argument("--out", required=True, help="CSV path (sizes CSV and figure written alongside)")
    t.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    t.set_defaults(func=cmd_stats)

    v = sub.add_parser("validate", parents=[common], help="check a stored stack for format and nesting")
    v.add_argument("--stack", required=True, help="stack stem (files <stem>.sliceK.png)")
    v.set_defaults(func=cmd_validate)

    y = sub.add_parser("synth", parents=[common], help="write a synthetic demo corpus")
    y.add_argument("--out", required=True, help="output directory")
    y.add_argument("--n", type=int, default=16, help="number of images")
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (InputError, sio.SalRankIOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
