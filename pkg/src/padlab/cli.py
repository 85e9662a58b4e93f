"""Command-line front end: ``padlab {encode,analyze,probe,schedule}``.

Exit codes: 0 success (whatever the verdict), 1 internal error, 2 bad
configuration or input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .convnet import load_network, network_to_dict
from .errors import PadlabError
from .export import (sha256_file, sha256_json, write_json, write_map_csv, write_map_pgms, write_pgm,
                     write_table_csv)
from .mspie import ScaleSchedule, sample_scales
from .posenc import EncodingKind, encoding_descriptor, resize_encoding
from .presets import get_preset
from .probe import DEFAULT_LAMBDA, fit_probe, location_statistics, positional_info_score
from .statlab import DEFAULT_Z, analytic_moments, estimate_moments, stationarity_verdict
from .tensor import FeatureMap, GridSize, RngSpec

DEFAULTS = {
    "kind": "csg",
    "channels": None,
    "size": None,
    "resize_to": None,
    "mode": "interp",
    "align_corners": False,
    "stream": 0,
    "net": None,
    "preset": None,
    "samples": 100000,
    "seed": 0,
    "offsets": "0,0;0,1;1,1;2,2;3,0",
    "z": DEFAULT_Z,
    "lam": DEFAULT_LAMBDA,
    "schedule": None,
    "steps": 100000,
    "out": None,
    "threads": None,
}

# runtime-only settings: echoed under "runtime" so they never affect the config hash
_RUNTIME_KEYS = ("threads", "out", "config")


class ConfigError(Exception):
    pass


def _parse_offsets(text) -> list[tuple[int, int]]:
    if isinstance(text, list):
        return [tuple(int(v) for v in d) for d in text]
    out = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        a, b = part.split(",")
        out.append((int(a), int(b)))
    return out


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cfg.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    for k, v in vars(args).items():
        if v is not None and k not in ("func", "config"):
            cfg[k] = v
    cfg["command"] = args.command
    if cfg.get("threads") is None and os.environ.get("PADLAB_THREADS"):
        cfg["threads"] = int(os.environ["PADLAB_THREADS"])
    return cfg


def _size(value, fallback=None) -> GridSize | None:
    if value is None:
        return fallback
    if isinstance(value, (list, tuple)):
        return GridSize(*value)
    return GridSize.parse(value)


def _outdir(cfg) -> Path:
    out = Path(cfg["out"] or f"padlab_out/{cfg['command']}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_net(cfg):
    """Network, default input size and a JSON-able description of where it came from."""
    if cfg.get("net"):
        path = Path(cfg["net"])
        if not path.is_file():
            raise ConfigError(f"network file not found: {path}")
        net = load_network(path)
        return net, _size(cfg.get("size")), {"net_file": str(path), "net_file_sha256": sha256_file(path)}
    if cfg.get("preset"):
        try:
            preset = get_preset(cfg["preset"])
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        return preset.net, _size(cfg.get("size"), preset.input_size), {"preset": preset.name}
    raise ConfigError("either --net or --preset is required")


def _manifest(cfg, out: Path, files: list[Path], started: float, **extra) -> Path:
    stable_cfg = {k: v for k, v in sorted(cfg.items()) if k not in _RUNTIME_KEYS}
    entries = [{"path": f.relative_to(out).as_posix(), "sha256": sha256_file(f)} for f in files]
    doc = {
        "command": cfg["command"],
        "config": stable_cfg,
        "config_sha256": sha256_json(stable_cfg),
        "library_version": __version__,
        "files": sorted(entries, key=lambda e: e["path"]),
        "runtime": {"wall_clock_seconds": round(time.perf_counter() - started, 3),
                    "threads": cfg.get("threads") or 1},
    }
    doc.update(extra)
    return write_json(doc, out / "manifest.json")


def cmd_encode(cfg) -> int:
    started = time.perf_counter()
    size = _size(cfg["size"], GridSize(8, 8))
    kind_name = cfg["kind"]
    channels = cfg["channels"]
    if kind_name == "csg":
        kind = EncodingKind.csg()
    elif kind_name == "spe":
        kind = EncodingKind.spe(channels if channels is not None else 8)
    elif kind_name == "fixed":
        kind = EncodingKind.fixed(channels if channels is not None else 4,
                                  RngSpec(int(cfg["seed"]), int(cfg["stream"])))
    else:
        raise ConfigError(f"unknown encoding kind {kind_name!r}")
    enc = kind.generate(size, align_corners=bool(cfg["align_corners"]))
    final_size = size
    if cfg.get("resize_to"):
        final_size = _size(cfg["resize_to"])
        enc = resize_encoding(kind, enc, final_size, cfg["mode"])
    out = _outdir(cfg)
    files = [write_map_csv(enc, out / "encoding.csv")]
    files += write_map_pgms(enc, out / "encoding")
    desc = encoding_descriptor(kind, final_size, cfg["mode"], bool(cfg["align_corners"]))
    files.append(write_json(desc, out / "encoding.json"))
    _manifest(cfg, out, files, started)
    return 0


def _stat_rows(report, with_se=True):
    rows = []
    e = report.expectation
    for c, y, x in np.ndindex(*e.shape):
        rows.append(["expectation", 0, 0, c, y, x, e[c, y, x], report.expectation_se[c, y, x]])
    for (di, dj), ac in report.autocorr.items():
        r0, c0 = ac.origin
        for c, y, x in np.ndindex(*ac.values.shape):
            rows.append(["autocorr", di, dj, c, r0 + y, c0 + x, ac.values[c, y, x], ac.se[c, y, x]])
    return rows


_STAT_HEADER = ["quantity", "offset_i", "offset_j", "channel", "row", "col", "estimate", "se"]


def cmd_analyze(cfg) -> int:
    started = time.perf_counter()
    net, size, source = _load_net(cfg)
    if size is None:
        raise ConfigError("--size is required with --net")
    samples = int(cfg["samples"])
    if samples < 2:
        raise ConfigError("--samples must be at least 2")
    offsets = _parse_offsets(cfg["offsets"])
    rng = RngSpec(int(cfg["seed"]))
    report = estimate_moments(net, size, offsets, samples, rng, workers=cfg.get("threads"))
    verdict = stationarity_verdict(report, float(cfg["z"]))
    out = _outdir(cfg)
    files = [write_table_csv(_STAT_HEADER, _stat_rows(report), out / "moments.csv")]
    extra = {}
    if net.is_linear:
        exact = analytic_moments(net, size, offsets)
        files.append(write_table_csv(_STAT_HEADER, _stat_rows(exact), out / "analytic.csv"))
        extra["analytic_verdict"] = stationarity_verdict(exact, float(cfg["z"])).summary()
    files += write_map_pgms(FeatureMap(report.expectation), out / "expectation")
    files += write_map_pgms(FeatureMap(verdict.anchor_map), out / "anchor")
    for (di, dj), ac in report.autocorr.items():
        for c in range(ac.values.shape[0]):
            files += write_pgm(ac.values[c], out / f"autocorr_{di}_{dj}_c{c}.pgm")
    summary = verdict.summary()
    a = np.abs(verdict.anchor_map[0])
    summary["anchor_argmax"] = [int(v) for v in np.unravel_index(int(np.argmax(a)), a.shape)]
    _manifest(cfg, out, files, started, inputs={**source, "net_sha256": sha256_json(network_to_dict(net))},
              samples=samples, seed=rng.seed, verdict=summary, **extra)
    return 0


def cmd_probe(cfg) -> int:
    started = time.perf_counter()
    net, size, source = _load_net(cfg)
    if size is None:
        raise ConfigError("--size is required with --net")
    samples = int(cfg["samples"])
    if samples < 2:
        raise ConfigError("--samples must be at least 2")
    lam = float(cfg["lam"])
    stats = location_statistics(net, size, samples, RngSpec(int(cfg["seed"])), workers=cfg.get("threads"))
    result = fit_probe(stats, lam=lam)
    out = _outdir(cfg)
    doc = result.to_dict()
    files = [write_json(doc, out / "probe.json")]
    files += write_pgm(result.error_map, out / "error_map.pgm")
    err = result.error_map
    _manifest(cfg, out, files, started,
              inputs={**source, "net_sha256": sha256_json(network_to_dict(net))},
              samples=samples, seed=int(cfg["seed"]), lam=lam,
              score=positional_info_score(result),
              error_argmin=[int(v) for v in np.unravel_index(int(np.argmin(err)), err.shape)])
    return 0


def cmd_schedule(cfg) -> int:
    started = time.perf_counter()
    sched_cfg = cfg.get("schedule")
    if sched_cfg is None:
        schedule = ScaleSchedule.default()
    else:
        if isinstance(sched_cfg, dict):
            data = sched_cfg
        else:
            path = Path(sched_cfg)
            if not path.is_file():
                raise ConfigError(f"schedule file not found: {path}")
            data = json.loads(path.read_text(encoding="utf-8"))
        schedule = ScaleSchedule.from_dict(data)
    steps = int(cfg["steps"])
    if steps < 1:
        raise ConfigError("--steps must be at least 1")
    seed = int(cfg["seed"])
    idx = sample_scales(schedule, seed, np.arange(steps))
    out = _outdir(cfg)
    rows = [[t, int(k), schedule.scales[k].height, schedule.scales[k].width] for t, k in enumerate(idx)]
    files = [write_table_csv(["step", "index", "height", "width"], rows, out / "draws.csv")]
    counts = np.bincount(idx, minlength=len(schedule.scales))
    freq = (counts / steps).tolist()
    summary = {
        "schedule": schedule.to_dict(),
        "steps": steps,
        "counts": counts.tolist(),
        "frequencies": freq,
        "max_abs_deviation": float(np.max(np.abs(np.array(freq) - np.array(schedule.probs)))),
    }
    files.append(write_json(summary, out / "summary.json"))
    _manifest(cfg, out, files, started, summary=summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="padlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"padlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config; explicit flags override it")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, help="worker cap (default: $PADLAB_THREADS or 1)")

    e = sub.add_parser("encode", help="write a positional encoding")
    common(e)
    e.add_argument("--kind", choices=["csg", "spe", "fixed"])
    e.add_argument("--channels", type=int)
    e.add_argument("--size", help="HxW")
    e.add_argument("--resize-to", dest="resize_to", help="HxW after resizing")
    e.add_argument("--mode", choices=["interp", "expand"])
    e.add_argument("--align-corners", dest="align_corners", action="store_true", default=None)
    e.add_argument("--stream", type=int)
    e.set_defaults(func=cmd_encode)

    for name, func, helptext in (("analyze", cmd_analyze, "moments and stationarity verdict"),
                                 ("probe", cmd_probe, "positional-information probe")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--net", help="network JSON file")
        src.add_argument("--preset")
        sp.add_argument("--size", help="input HxW")
        sp.add_argument("--samples", type=int)
        if name == "analyze":
            sp.add_argument("--offsets", help='e.g. "0,0;0,1;3,0"')
            sp.add_argument("--z", type=float)
        else:
            sp.add_argument("--lambda", dest="lam", type=float)
        sp.set_defaults(func=func)

    s = sub.add_parser("schedule", help="draw a multi-scale schedule")
    common(s)
    s.add_argument("--schedule", help="schedule JSON file")
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_schedule)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return args.func(cfg)
    except (ConfigError, PadlabError, ValueError, KeyError, OSError) as exc:
        print(f"padlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"padlab {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
