"""Batch command-line front-end: digitize, evaluate, complete, render, synth."""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import completion as comp
from . import recordio, synth
from .errors import ConfigError, EcgtizeError, NoPairs
from .extract import METHODS, EcgRecord
from .features import compare_features, detect_fiducials, metrics_by_scope
from .layouts import LEAD_INDEX, LEAD_ORDER, preset
from .pipeline import DigitizeOptions, digitize_page
from .render import RenderStyle, load_style_file, render_page, save_page

log = logging.getLogger("ecgtize")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3

_PAGE_SUFFIXES = (".pdf", ".png", ".jpg", ".jpeg")
_LAYOUT_CHOICES = ("auto", "3x4", "3x4-transposed", "2x6")


@dataclass
class RunConfig:
    method: str = "fragmented"
    layout: str = "auto"
    layout_file: str | None = None
    dpi: float = 300.0
    page: int = 0
    ocr: str = "heuristic"
    ocr_cmd: str | None = None
    completion: str = "off"
    backend_addr: str | None = None
    backend_cmd: str | None = None
    anonymize: bool = False
    format: str = "xml"
    jobs: int = 1
    dump_bands: bool = False
    noise: float = 0.0
    seed: int = 0
    sdtw_gamma: float = 1.0
    style_file: str | None = None

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"--method must be one of {METHODS}")
        if self.layout not in _LAYOUT_CHOICES:
            raise ConfigError(f"--layout must be one of {_LAYOUT_CHOICES}")
        if self.ocr not in ("heuristic", "external", "off"):
            raise ConfigError("--ocr must be heuristic, external or off")
        if self.completion not in ("off", "algebra", "tiled", "backend"):
            raise ConfigError("--completion must be off, algebra, tiled or backend")
        if self.format not in ("xml", "csv"):
            raise ConfigError("--format must be xml or csv")
        if not 72 <= self.dpi <= 1200:
            raise ConfigError("--dpi must be within [72, 1200]")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if self.sdtw_gamma <= 0:
            raise ConfigError("--sdtw-gamma must be > 0")
        return self


def build_config(args: argparse.Namespace) -> RunConfig:
    """CLI flags > config file > defaults; unknown file keys are rejected."""
    values = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if values.get("ocr_cmd") is None and os.environ.get("ECGTIZE_OCR_CMD"):
        values["ocr_cmd"] = os.environ["ECGTIZE_OCR_CMD"]
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()


def _make_backend(config: RunConfig):
    if config.backend_cmd:
        return comp.SubprocessBackend(config.backend_cmd)
    if config.backend_addr:
        return comp.TcpBackend(config.backend_addr)
    return None


def _collect_pages(inputs: list[str]) -> list[Path]:
    out: list[Path] = []
    for raw in inputs:
        p = Path(raw)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir()
                              if q.suffix.lower() in _PAGE_SUFFIXES))
        else:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# digitize


def _digitize_one(path_str: str, out_dir: str, config_dict: dict) -> dict:
    config = RunConfig(**config_dict)
    path = Path(path_str)
    started = time.perf_counter()
    try:
        opts = DigitizeOptions(method=config.method, layout=config.layout,
                               layout_file=config.layout_file, dpi=config.dpi,
                               page_index=config.page, ocr=config.ocr,
                               ocr_cmd=config.ocr_cmd)
        record, report = digitize_page(path, opts)
        if config.completion != "off":
            result = comp.complete(record, config.completion,
                                   backend=_make_backend(config))
            record = result.record
        out_path = Path(out_dir) / f"{path.stem}.{config.format}"
        recordio.write_record(record, out_path, fmt=config.format,
                              anonymize=config.anonymize)
        if config.dump_bands:
            lines = ["band,row_start,row_end,col_start,col_end"]
            lines += [f"{i},{b.row_start},{b.row_end},{b.col_start},{b.col_end}"
                      for i, b in enumerate(report.bands)]
            (Path(out_dir) / f"{path.stem}.bands.csv").write_text(
                "\n".join(lines) + "\n", encoding="ascii")
        return {"path": path_str, "ok": True,
                "seconds": time.perf_counter() - started,
                "warnings": report.warnings}
    except (EcgtizeError, OSError, ValueError) as exc:
        return {"path": path_str, "ok": False,
                "seconds": time.perf_counter() - started,
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_digitize(args: argparse.Namespace) -> int:
    config = build_config(args)
    pages = _collect_pages(args.inputs)
    if not pages:
        raise ConfigError("no input pages found")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_dict = asdict(config)

    jobs = [(str(p), str(out_dir), config_dict) for p in pages]
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_digitize_one, *zip(*jobs)))
    else:
        results = [_digitize_one(*job) for job in jobs]

    ok = [r for r in results if r["ok"]]
    failed = [r for r in results if not r["ok"]]
    for r in results:
        for w in r.get("warnings", []):
            log.warning("%s: %s", r["path"], w)
    for r in failed:
        log.error("failed: %s (%s)", r["path"], r["error"])
    avg = float(np.mean([r["seconds"] for r in results])) if results else 0.0
    print(f"digitize: {len(pages)} in, {len(ok)} ok, {len(failed)} failed; "
          f"{avg:.2f} s per ECG")
    return EXIT_OK if ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# evaluate


def _pair_records(dig_dir: Path, ref_dir: Path) -> list[tuple[str, Path, Path]]:
    digs = {p.stem: p for p in sorted(dig_dir.iterdir())
            if p.suffix.lower() in (".xml", ".csv")}
    refs = {p.stem: p for p in sorted(ref_dir.iterdir())
            if p.suffix.lower() in (".xml", ".csv")}
    stems = sorted(set(digs) & set(refs))
    if not stems:
        raise NoPairs(f"no matching record stems between {dig_dir} and {ref_dir}")
    return [(stem, digs[stem], refs[stem]) for stem in stems]


def _metric_rows(stem: str, dig: EcgRecord, ref: EcgRecord,
                 gamma: float) -> list[dict]:
    rows = []
    for report in metrics_by_scope(dig.leads, ref.leads, dig.observed,
                                   LEAD_ORDER, gamma):
        for lead, m in report.per_lead.items():
            rows.append({"record": stem, "lead": lead, "scope": report.scope,
                         "pcc": "" if m.pcc is None else f"{m.pcc:.6f}",
                         "rmse_uv": f"{m.rmse * 1000.0:.3f}",
                         "sdtw": f"{m.sdtw:.4f}",
                         "degenerate": int(m.pcc is None)})
    return rows


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = build_config(args)
    pairs = _pair_records(Path(args.dig), Path(args.ref))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    metric_rows: list[dict] = []
    feature_rows: list[dict] = []
    for stem, dig_path, ref_path in pairs:
        dig = recordio.read_record(dig_path)
        ref = recordio.read_record(ref_path)
        metric_rows.extend(_metric_rows(stem, dig, ref, config.sdtw_gamma))
        try:
            deltas = compare_features(
                detect_fiducials(dig.lead("II")), detect_fiducials(ref.lead("II")))
            feature_rows.extend(
                {"record": stem, "lead": "II", "feature": name,
                 "delta": f"{value:.6f}"}
                for name, value in deltas.items())
        except EcgtizeError as exc:
            log.warning("%s: fiducial comparison skipped (%s)", stem, exc)

    _write_csv(out_dir / "metrics.csv",
               ["record", "lead", "scope", "pcc", "rmse_uv", "sdtw", "degenerate"],
               metric_rows)
    _write_csv(out_dir / "features.csv",
               ["record", "lead", "feature", "delta"], feature_rows)
    print(f"evaluate: {len(pairs)} record pairs, {len(metric_rows)} metric rows")
    return EXIT_OK


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(row[h]) for h in header) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# complete / render / synth


def cmd_complete(args: argparse.Namespace) -> int:
    config = build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = config.completion if config.completion != "off" else "tiled"
    backend = _make_backend(config)
    count = 0
    for path in [Path(p) for p in args.inputs]:
        record = recordio.read_record(path)
        result = comp.complete(record, mode, backend=backend)
        recordio.write_record(result.record, out_dir / f"{path.stem}.{config.format}",
                              fmt=config.format, anonymize=config.anonymize)
        count += 1
    print(f"complete: {count} records via {mode}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    config = build_config(args)
    out = Path(args.out)
    single_file = out.suffix.lower() in (".png", ".pdf")
    if single_file and len(args.inputs) != 1:
        raise ConfigError("a single output file needs exactly one input record")
    if not single_file:
        out.mkdir(parents=True, exist_ok=True)
    style = load_style_file(config.style_file) if config.style_file else RenderStyle()
    if config.noise > 0:
        from dataclasses import replace
        style = replace(style, noise_sigma=config.noise, seed=config.seed)
    for path in [Path(p) for p in args.inputs]:
        record = recordio.read_record(path)
        layout_name = config.layout
        if layout_name == "auto":
            layout_name = "3x4"
        rhythm = bool(record.observed[LEAD_INDEX["II"]].all())
        layout = preset(layout_name, rhythm=rhythm)
        page = render_page(record, layout, style)
        target = out if single_file else out / f"{path.stem}.{args.image_format}"
        save_page(page, target)
    print(f"render: {len(args.inputs)} pages")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = preset("3x4", rhythm=args.mask == "3x4+rhythm")
    for k in range(args.count):
        record, _ = synth.make_record(seed=config.seed + k, sine_amp=args.sine_amp)
        if args.mask != "full":
            record = synth.apply_observation_mask(record, layout)
        recordio.write_record(record, out_dir / f"synth{k:04d}.{config.format}",
                              fmt=config.format)
    print(f"synth: {args.count} records in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--layout", choices=_LAYOUT_CHOICES)
    p.add_argument("--layout-file", dest="layout_file")
    p.add_argument("--dpi", type=float)
    p.add_argument("--page", type=int)
    p.add_argument("--ocr", choices=("heuristic", "external", "off"))
    p.add_argument("--ocr-cmd", dest="ocr_cmd")
    p.add_argument("--completion", choices=("off", "algebra", "tiled", "backend"))
    p.add_argument("--backend-addr", dest="backend_addr")
    p.add_argument("--backend-cmd", dest="backend_cmd")
    p.add_argument("--anonymize", action="store_const", const=True, default=None)
    p.add_argument("--format", choices=("xml", "csv"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--dump-bands", dest="dump_bands",
                   action="store_const", const=True, default=None)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sdtw-gamma", dest="sdtw_gamma", type=float)
    p.add_argument("--style-file", dest="style_file")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgtize",
        description="Digitize paper ECG pages, complete missing lead "
                    "segments, and evaluate fidelity.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("digitize", help="pages (PDF/PNG/JPEG) -> records")
    p.add_argument("inputs", nargs="+", help="page files or directories")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_digitize)

    p = sub.add_parser("evaluate", help="digitized vs reference metrics CSVs")
    p.add_argument("--dig", required=True, help="directory of digitized records")
    p.add_argument("--ref", required=True, help="directory of reference records")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("complete", help="fill missing lead segments in records")
    p.add_argument("inputs", nargs="+", help="record files")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("render", help="records -> paper-style pages")
    p.add_argument("inputs", nargs="+", help="record files")
    p.add_argument("--out", required=True)
    p.add_argument("--image-format", choices=("png", "pdf"), default="png")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="generate synthetic records (test/training data)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--mask", choices=("full", "3x4", "3x4+rhythm"), default="full")
    p.add_argument("--sine-amp", dest="sine_amp", type=float, default=0.25)
    _add_common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (EcgtizeError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
