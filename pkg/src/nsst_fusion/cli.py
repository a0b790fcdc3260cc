"""Command-line front end.

Subcommands::

    nsst-fuse fuse    --ir A.png --vis B.png --out F.png [--metrics m.json] [--diagnostics-dir D]
    nsst-fuse batch   --batch-dir IN --out-dir OUT [--jobs N]
    nsst-fuse metrics --ir A.png --vis B.png --fused F.png [--metrics m.json]

Batch pairing: every ``<stem>_ir.<ext>`` is paired with ``<stem>_vis.<ext>``
in the same directory (any of .png/.pgm). Files without a partner are
skipped with a warning. The batch report is ``metrics.csv`` (one row per
stem, sorted, then a ``MEAN`` row) plus ``metrics.png``.

Settings come from built-in defaults, overlaid by ``--config`` JSON, overlaid
by explicit flags. Exit codes: 0 ok, 2 input error, 3 empty batch,
4 config error, 5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .context import ContextWeights
from .errors import FusionError, ImageFormatError, IncompatiblePairError, InvalidImageError, TooSmallError
from .fusion import FusionConfig, fuse_images, write_diagnostics
from .image import GrayImage, check_pair, load_image, save_image
from .metrics import MetricsReport, report
from .mchmm import MchmmConfig
from .nsst import DecompositionSpec
from . import plotting

log = logging.getLogger("nsst_fusion")

EXIT_OK, EXIT_INPUT, EXIT_EMPTY, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3, 4, 5
IMAGE_SUFFIXES = (".png", ".pgm")

DEFAULTS = {
    "states": 4,
    "alpha": 0.5,
    "levels": 2,
    "dirs": [4, 8],
    "filter": "maxflat",
    "low_window": 3,
    "window_radius": 3,
    "weights": [0.8, 0.6, 0.2, 0.4],
    "max_global_iters": 20,
    "max_local_iters": 10,
    "convergence_tol": 1e-4,
    "epsilon": 1e-6,
    "noise_variance": None,
    "jobs": 1,
}


class ConfigError(FusionError):
    """Bad configuration value; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class EmptyBatchError(FusionError):
    pass


@dataclass
class RunConfig:
    fusion: FusionConfig
    settings: dict
    ir: Optional[Path] = None
    vis: Optional[Path] = None
    out: Optional[Path] = None
    batch_dir: Optional[Path] = None
    out_dir: Optional[Path] = None
    metrics: Optional[Path] = None
    diagnostics_dir: Optional[Path] = None
    jobs: int = 1
    extra: dict = field(default_factory=dict)


def _default_dirs(levels: int) -> list[int]:
    return [4] + [8] * (levels - 1)


def _check(settings: dict) -> None:
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(key, f"{key} out of range: {msg}")

    n = settings["states"]
    need(isinstance(n, int) and 2 <= n <= 16, "states", f"{n!r} not in [2, 16]")
    a = settings["alpha"]
    need(isinstance(a, (int, float)) and 0 <= a <= 1, "alpha", f"{a!r} not in [0, 1]")
    lv = settings["levels"]
    need(isinstance(lv, int) and lv >= 1, "levels", f"{lv!r} < 1")
    dirs = settings["dirs"]
    need(isinstance(dirs, list) and len(dirs) == lv
         and all(isinstance(d, int) and d >= 2 and d & (d - 1) == 0 for d in dirs),
         "dirs", f"{dirs!r} must list {lv} powers of two >= 2")
    lw = settings["low_window"]
    need(isinstance(lw, int) and lw >= 1 and lw % 2 == 1, "low_window", f"{lw!r} must be odd >= 1")
    wr = settings["window_radius"]
    radii = wr if isinstance(wr, list) else [wr]
    need(all(isinstance(r, int) and r >= 1 for r in radii), "window_radius", f"{wr!r} must be >= 1")
    w = settings["weights"]
    need(isinstance(w, list) and len(w) == 4 and all(isinstance(x, (int, float)) and x >= 0 for x in w),
         "weights", f"{w!r} must be four non-negative numbers")
    for key in ("max_global_iters", "max_local_iters", "jobs"):
        need(isinstance(settings[key], int) and settings[key] >= 1, key, f"{settings[key]!r} < 1")
    for key in ("convergence_tol", "epsilon"):
        need(isinstance(settings[key], (int, float)) and settings[key] > 0, key, f"{settings[key]!r} <= 0")
    nv = settings["noise_variance"]
    need(nv is None or (isinstance(nv, (int, float)) and nv >= 0), "noise_variance", f"{nv!r} < 0")
    need(settings["filter"] == "maxflat", "filter", f"{settings['filter']!r} unsupported")


def fusion_config_from(settings: dict) -> FusionConfig:
    wr = settings["window_radius"]
    return FusionConfig(
        decomposition=DecompositionSpec(settings["levels"], tuple(settings["dirs"]), settings["filter"]),
        context_weights=ContextWeights(*map(float, settings["weights"])),
        mchmm=MchmmConfig(
            n_states=settings["states"],
            window_radius=tuple(wr) if isinstance(wr, list) else wr,
            max_global_iters=settings["max_global_iters"],
            max_local_iters=settings["max_local_iters"],
            convergence_tol=float(settings["convergence_tol"]),
            epsilon=float(settings["epsilon"]),
            noise_variance=settings["noise_variance"],
        ),
        alpha=float(settings["alpha"]),
        low_window=settings["low_window"],
    )


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
    settings = dict(DEFAULTS)
    file_values = {}
    if path is not None:
        try:
            file_values = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"malformed JSON in {path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError("config", f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config", f"{path} must hold a JSON object")
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], f"unknown config key(s): {', '.join(sorted(unknown))}")
    settings.update(file_values)
    flags = {k: v for k, v in (overrides or {}).items() if v is not None}
    settings.update({k: v for k, v in flags.items() if k in DEFAULTS})
    if "levels" in (set(file_values) | set(flags)) and "dirs" not in (set(file_values) | set(flags)):
        settings["dirs"] = _default_dirs(settings["levels"])
    _check(settings)
    try:
        fusion = fusion_config_from(settings)
    except FusionError as exc:
        raise ConfigError("config", str(exc)) from exc
    paths = {k: Path(flags[k]) for k in ("ir", "vis", "out", "batch_dir", "out_dir", "metrics",
                                        "diagnostics_dir", "fused") if k in flags}
    extra = {"fused": paths.pop("fused")} if "fused" in paths else {}
    return RunConfig(fusion=fusion, settings=settings, jobs=settings["jobs"], extra=extra, **paths)


def _write_metrics(rep: MetricsReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rep.to_json() + "\n")


def _fuse_one(cfg: RunConfig, ir: Path, vis: Path, out: Path, diagnostics_dir=None):
    stage = "load"
    try:
        a, b = load_image(ir), load_image(vis)
        check_pair(a, b)
        stage = "fuse"
        result = fuse_images(a, b, cfg.fusion, keep_maps=diagnostics_dir is not None)
        stage = "save"
        out.parent.mkdir(parents=True, exist_ok=True)
        save_image(result.fused, out)
        if diagnostics_dir is not None:
            stage = "diagnostics"
            write_diagnostics(result, cfg.fusion, diagnostics_dir)
            for name in ("v", "sm", "mh"):
                for idx, tag in enumerate("AB"):
                    maps = {key: getattr(m, name)[idx] for key, m in result.saliency.items()}
                    plotting.plot_subband_maps(maps, Path(diagnostics_dir) / f"{name}_{tag}.png",
                                               title=f"{name.upper()} ({'infrared' if tag == 'A' else 'visible'})")
            plotting.plot_fusion_triplet(a.data, b.data, result.fused.data,
                                         Path(diagnostics_dir) / "fusion.png")
        stage = "metrics"
        # metrics on the stored 8-bit image, as a reader of the file would see it
        fused_bytes = load_image(out) if out.suffix.lower() in IMAGE_SUFFIXES else result.fused
        return report(a, b, fused_bytes)
    except FusionError as exc:
        exc.stage = getattr(exc, "stage", stage)
        raise
    except OSError as exc:
        err = InvalidImageError(str(exc))
        err.stage = stage
        raise err from exc


def run_fuse(cfg: RunConfig) -> int:
    if cfg.ir is None or cfg.vis is None or cfg.out is None:
        raise ConfigError("fuse", "fuse needs --ir, --vis and --out")
    rep = _fuse_one(cfg, cfg.ir, cfg.vis, cfg.out, cfg.diagnostics_dir)
    if cfg.metrics is not None:
        _write_metrics(rep, cfg.metrics)
    log.info("wrote %s", cfg.out)
    return EXIT_OK


def discover_pairs(directory: Path) -> dict[str, tuple[Path, Path]]:
    found: dict[str, dict[str, Path]] = {}
    for p in sorted(directory.iterdir()):
        if not p.is_file() or p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        for tag in ("ir", "vis"):
            if p.stem.endswith("_" + tag):
                found.setdefault(p.stem[: -len(tag) - 1], {})[tag] = p
    pairs = {}
    for stem, parts in sorted(found.items()):
        if set(parts) == {"ir", "vis"}:
            pairs[stem] = (parts["ir"], parts["vis"])
        else:
            log.warning("skipping unpaired file %s", next(iter(parts.values())).name)
    return pairs


def write_batch_csv(rows: dict[str, MetricsReport], path: Path) -> dict[str, float]:
    keys = MetricsReport.keys()
    means = {k: float(np.mean([getattr(r, k) for r in rows.values()])) for k in keys}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pair"] + keys)
        for stem in sorted(rows):
            writer.writerow([stem] + [f"{getattr(rows[stem], k):.6f}" for k in keys])
        writer.writerow(["MEAN"] + [f"{means[k]:.6f}" for k in keys])
    return means


def run_batch(cfg: RunConfig) -> int:
    if cfg.batch_dir is None or cfg.out_dir is None:
        raise ConfigError("batch", "batch needs --batch-dir and --out-dir")
    if not cfg.batch_dir.is_dir():
        err = InvalidImageError(f"batch directory {cfg.batch_dir} not found")
        err.stage = "load"
        raise err
    pairs = discover_pairs(cfg.batch_dir)
    if not pairs:
        raise EmptyBatchError(f"no <stem>_ir/<stem>_vis pairs in {cfg.batch_dir}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    def job(stem):
        ir, vis = pairs[stem]
        diag = cfg.diagnostics_dir / stem if cfg.diagnostics_dir else None
        return stem, _fuse_one(cfg, ir, vis, cfg.out_dir / f"{stem}_fused.png", diag)

    stems = sorted(pairs)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = dict(pool.map(job, stems))
    else:
        rows = dict(map(job, stems))
    write_batch_csv(rows, cfg.out_dir / "metrics.csv")
    plotting.plot_batch_metrics({s: r.to_dict() for s, r in rows.items()}, cfg.out_dir / "metrics.png")
    log.info("fused %d pairs into %s", len(rows), cfg.out_dir)
    return EXIT_OK


def run_metrics(cfg: RunConfig) -> int:
    fused = cfg.extra.get("fused")
    if cfg.ir is None or cfg.vis is None or fused is None:
        raise ConfigError("metrics", "metrics needs --ir, --vis and --fused")
    try:
        a, b, f = load_image(cfg.ir), load_image(cfg.vis), load_image(fused)
    except OSError as exc:
        err = InvalidImageError(str(exc))
        err.stage = "load"
        raise err from exc
    check_pair(a, b)
    check_pair(a, f)
    rep = report(a, b, f)
    if cfg.metrics is not None:
        _write_metrics(rep, cfg.metrics)
    else:
        print(rep.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsst-fuse",
        description="Infrared/visible image fusion with NSST and a multi-state contextual HMM.",
        epilog="Batch mode pairs <stem>_ir.(png|pgm) with <stem>_vis.(png|pgm).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def tuning(p):
        p.add_argument("--config", help="JSON file with settings (overridden by flags)")
        p.add_argument("--states", type=int, help="number of hidden states n (default 4)")
        p.add_argument("--alpha", type=float, help="saliency/context balance in [0,1] (default 0.5)")
        p.add_argument("--levels", type=int, help="pyramid levels (default 2)")
        p.add_argument("--dirs", type=lambda s: [int(x) for x in s.split(",")],
                       help="directions per scale, coarse to fine, e.g. 4,8")
        p.add_argument("--low-window", type=int, help="odd window for low-band regional energy (default 3)")
        p.add_argument("--window-radius", type=int, help="local EM window radius W (default 3)")
        p.add_argument("--diagnostics-dir", help="write V/SM/MH maps, figures and a run summary here")
        p.add_argument("--jobs", type=int, help="parallel workers (default 1)")

    p = sub.add_parser("fuse", help="fuse one infrared/visible pair")
    p.add_argument("--ir", required=True)
    p.add_argument("--vis", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", help="write the metric report as JSON")
    tuning(p)

    p = sub.add_parser("batch", help="fuse every pair in a directory")
    p.add_argument("--batch-dir", required=True)
    p.add_argument("--out-dir", required=True)
    tuning(p)

    p = sub.add_parser("metrics", help="score an existing fused image")
    p.add_argument("--ir", required=True)
    p.add_argument("--vis", required=True)
    p.add_argument("--fused", required=True)
    p.add_argument("--metrics", help="write JSON here instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    handlers = {"fuse": run_fuse, "batch": run_batch, "metrics": run_metrics}
    try:
        cfg = load_config(getattr(args, "config", None), flags)
        return handlers[args.command](cfg)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyBatchError as exc:
        print(f"error [batch]: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except IncompatiblePairError as exc:
        print(f"error [{getattr(exc, 'stage', 'load')}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidImageError, ImageFormatError, TooSmallError) as exc:
        print(f"error [{getattr(exc, 'stage', 'load')}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FusionError as exc:
        print(f"error [{getattr(exc, 'stage', 'fuse')}]: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"error [internal]: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
