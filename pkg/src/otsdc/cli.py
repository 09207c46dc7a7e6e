"""Command-line interface: ``correct``, ``estimate-field``, ``metrics``, ``phantom``.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical degeneracy.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as met
from .morozov import DEFAULT_TAU, discrepancy, estimate_noise, select_lambda
from .nifti import NiftiError, read_volume, write_volume
from .ot1d import column_field
from .phantom import PhantomSpec, make_pair
from .spectral import DisplacementField, regularize_field
from .unwarp import apply_correction
from .volume import DegenerateInputError, EpiPair, Volume, auto_mask, check_mask

log = logging.getLogger("otsdc")

SCHEMA = 1
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE = 0, 1, 2, 3
AXES = {"x": 0, "y": 1, "z": 2, "0": 0, "1": 1, "2": 2}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    plus: list = field(default_factory=list)
    minus: list = field(default_factory=list)
    t1: str | None = None
    mask: str | None = None
    ref_field: str | None = None
    pe_axis: int = 0
    tau: float = DEFAULT_TAU
    lam: float | None = None
    delta: float | None = None
    mode: str = "slice2d"
    bins: int = met.DEFAULT_BINS
    out: str = "otsdc"
    threads: int = 0
    seed: int = 0

    def validate(self):
        if self.lam is not None and self.delta is not None:
            raise UsageError("--lambda and --delta are mutually exclusive")
        if self.lam is not None and self.lam < 0:
            raise UsageError("--lambda must be >= 0")
        if self.delta is not None and self.delta < 0:
            raise UsageError("--delta must be >= 0")
        if not self.tau > 0:
            raise UsageError("--tau must be positive")
        if self.bins < 2:
            raise UsageError("--bins must be >= 2")
        if self.threads < 0:
            raise UsageError("--threads must be >= 0")
        return self


class _Timer:
    def __init__(self):
        self.stages = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        yield
        self.stages[name] = round(time.perf_counter() - t0, 6)


def _out_path(cfg: RunConfig, suffix: str) -> Path:
    p = Path(f"{cfg.out}_{suffix}")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _read(path, pe_axis) -> Volume:
    if not Path(path).is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return read_volume(path, pe_axis)


def _load_pair(cfg: RunConfig) -> EpiPair:
    if len(cfg.plus) != 1 or len(cfg.minus) != 1:
        raise UsageError("exactly one --plus and one --minus are required")
    return EpiPair(_read(cfg.plus[0], cfg.pe_axis), _read(cfg.minus[0], cfg.pe_axis))


def _load_mask(cfg: RunConfig, ref: Volume, avg: Volume):
    if cfg.mask:
        m = _read(cfg.mask, cfg.pe_axis).data > 0
        return check_mask(m, ref.dims, nonempty=True), "file"
    return auto_mask(avg), "auto"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _field_volume(f: DisplacementField, like: Volume) -> Volume:
    return like.with_data(f.u)


def _estimate(cfg: RunConfig, pair: EpiPair, timer: _Timer):
    """Shared front half of ``correct`` and ``estimate-field``."""
    avg = pair.plus.with_data(0.5 * (pair.plus.data + pair.minus.data))
    with timer("mask"):
        mask, mask_source = _load_mask(cfg, pair.plus, avg)
    with timer("transport"):
        raw = column_field(pair, cfg.threads)
    noise = morozov = None
    with timer("noise"):
        try:
            noise = estimate_noise(pair, mask, cfg.tau)
        except DegenerateInputError:
            if cfg.lam is None and cfg.delta is None:
                raise
    with timer("lambda_selection"):
        if cfg.lam is not None:
            lam = cfg.lam
        else:
            delta = cfg.delta if cfg.delta is not None else noise.delta
            morozov = select_lambda(raw, delta, cfg.mode, threads=cfg.threads)
            lam = morozov.lambda_star
    with timer("regularization"):
        fld = regularize_field(raw, lam, cfg.mode, cfg.threads)
    report = {
        "schema": SCHEMA,
        "dims": list(pair.dims),
        "config": {"pe_axis": cfg.pe_axis, "tau": cfg.tau, "lambda": cfg.lam,
                   "delta": cfg.delta, "mode": cfg.mode, "bins": cfg.bins},
        "mask": {"source": mask_source, "voxels": int(mask.sum())},
        "lambda_star": lam,
        "sigma": None if noise is None else noise.sigma,
        "delta": morozov.delta if morozov else (None if noise is None else noise.delta),
        "residual": discrepancy(raw, fld),
        "iterations": morozov.iterations if morozov else 0,
        "status": morozov.status if morozov else "fixed_lambda",
        "noise": None if noise is None else noise.to_dict(),
        "morozov": None if morozov is None else morozov.to_dict(),
        "invalid_columns_voxels": int((~raw.validity).sum()),
    }
    return raw, fld, mask, noise, morozov, report


def cmd_correct(cfg: RunConfig) -> int:
    timer = _Timer()
    t0 = time.perf_counter()
    with timer("read"):
        pair = _load_pair(cfg)
        t1 = _read(cfg.t1, cfg.pe_axis) if cfg.t1 else None
    raw, fld, mask, noise, morozov, report = _estimate(cfg, pair, timer)
    with timer("unwarp"):
        res = apply_correction(pair, fld, cfg.threads, morozov, noise)
    report["command"] = "correct"
    report["diagnostics"] = res.diagnostics
    if t1 is not None:
        with timer("metrics"):
            unc = met.per_slice_report(pair.plus, pair.minus, mask, t1, cfg.bins, "uncorrected")
            cor = met.per_slice_report(res.corrected_plus, res.corrected_minus, mask, t1,
                                       cfg.bins, "corrected")
        report["metrics"] = [unc.to_dict(), cor.to_dict()]
    outputs = {
        "corrected_plus": _out_path(cfg, "corrected_plus.nii.gz"),
        "corrected_minus": _out_path(cfg, "corrected_minus.nii.gz"),
        "corrected_avg": _out_path(cfg, "corrected_avg.nii.gz"),
        "field": _out_path(cfg, "field.nii.gz"),
    }
    with timer("write"):
        write_volume(res.corrected_plus, outputs["corrected_plus"])
        write_volume(res.corrected_minus, outputs["corrected_minus"])
        write_volume(res.corrected_avg, outputs["corrected_avg"])
        write_volume(_field_volume(fld, pair.plus), outputs["field"])
    report["outputs"] = {k: v.name for k, v in outputs.items()}
    report["timing"] = dict(timer.stages, total=round(time.perf_counter() - t0, 6))
    _write_json(_out_path(cfg, "report.json"), report)
    log.info("lambda*=%.4g status=%s residual=%.4g", report["lambda_star"],
             report["status"], report["residual"])
    return EXIT_OK


def cmd_estimate_field(cfg: RunConfig) -> int:
    timer = _Timer()
    t0 = time.perf_counter()
    with timer("read"):
        pair = _load_pair(cfg)
        ref = _read(cfg.ref_field, cfg.pe_axis) if cfg.ref_field else None
    if ref is not None and ref.dims != pair.dims:
        raise ValueError(f"reference field dims {ref.dims} do not match inputs {pair.dims}")
    raw, fld, mask, noise, morozov, report = _estimate(cfg, pair, timer)
    report["command"] = "estimate-field"
    if ref is not None:
        report["pearson_r"] = met.pearson_r(fld.u, ref.data, mask)
    out = _out_path(cfg, "field.nii.gz")
    with timer("write"):
        write_volume(_field_volume(fld, pair.plus), out)
    report["outputs"] = {"field": out.name}
    report["timing"] = dict(timer.stages, total=round(time.perf_counter() - t0, 6))
    _write_json(_out_path(cfg, "report.json"), report)
    return EXIT_OK


def cmd_metrics(cfg: RunConfig, labels=None, slices=None) -> int:
    if not cfg.plus or len(cfg.plus) != len(cfg.minus):
        raise UsageError("metrics needs matching --plus/--minus lists")
    labels = list(labels or [])
    if not labels:
        labels = [f"method{i + 1}" for i in range(len(cfg.plus))]
    if len(labels) != len(cfg.plus):
        raise UsageError("one --label per --plus/--minus pair is required")
    pairs = [EpiPair(_read(p, cfg.pe_axis), _read(m, cfg.pe_axis))
             for p, m in zip(cfg.plus, cfg.minus)]
    t1 = _read(cfg.t1, cfg.pe_axis) if cfg.t1 else None
    first = pairs[0]
    avg = first.plus.with_data(0.5 * (first.plus.data + first.minus.data))
    mask, _ = _load_mask(cfg, first.plus, avg)
    reports = [met.per_slice_report(pr.plus, pr.minus, mask, t1, cfg.bins, lab)
               for pr, lab in zip(pairs, labels)]
    table = met.format_table(reports, slices)
    _out_path(cfg, "metrics.txt").write_text(table + "\n")
    _out_path(cfg, "metrics.json").write_text(met.reports_to_json(reports) + "\n")
    print(table)
    return EXIT_OK


def cmd_phantom(cfg: RunConfig, dims=(64, 64, 64), amplitude=3.0, noise=0.0,
                snr=None, blobs=5) -> int:
    spec = PhantomSpec(dims=tuple(dims), n_blobs=blobs, field_amplitude=amplitude,
                       noise_sigma=0.0, pe_axis=cfg.pe_axis, seed=cfg.seed)
    I0, u, pair = make_pair(spec)
    if snr:
        noise = float(I0.data[I0.data > 0.1 * I0.data.max()].mean()) / snr
    if noise:
        spec = PhantomSpec(**{**spec.to_dict(), "noise_sigma": float(noise)})
        I0, u, pair = make_pair(spec)
    write_volume(I0, _out_path(cfg, "I0.nii.gz"))
    write_volume(pair.plus, _out_path(cfg, "plus.nii.gz"))
    write_volume(pair.minus, _out_path(cfg, "minus.nii.gz"))
    write_volume(I0.with_data(u.u), _out_path(cfg, "field.nii.gz"))
    _write_json(_out_path(cfg, "spec.json"), {"schema": SCHEMA, **spec.to_dict()})
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _pe_axis(text):
    try:
        return AXES[str(text).lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"invalid PE axis {text!r} (x|y|z|0|1|2)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="otsdc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, pair=True):
        if pair:
            sp.add_argument("--plus", action="append", required=True, help="I+ NIfTI volume")
            sp.add_argument("--minus", action="append", required=True, help="I- NIfTI volume")
        sp.add_argument("--pe-axis", type=_pe_axis, default=0, help="x|y|z or 0|1|2 (default x)")
        sp.add_argument("--mask", help="brain mask NIfTI (nonzero = inside); auto if omitted")
        sp.add_argument("--out", default="otsdc", help="output prefix")
        sp.add_argument("--threads", type=int, default=0, help="0 = all cores")

    def pipeline(sp):
        sp.add_argument("--tau", type=float, default=DEFAULT_TAU)
        sp.add_argument("--lambda", dest="lam", type=float, help="fixed regularization strength")
        sp.add_argument("--delta", type=float, help="override the target discrepancy")
        sp.add_argument("--mode", choices=("slice2d", "full3d"), default="slice2d")
        sp.add_argument("--bins", type=int, default=met.DEFAULT_BINS)

    sp = sub.add_parser("correct", help="estimate the field and unwarp the pair")
    common(sp)
    pipeline(sp)
    sp.add_argument("--t1", help="structural reference for MI reporting")

    sp = sub.add_parser("estimate-field", help="estimate the displacement field only")
    common(sp)
    pipeline(sp)
    sp.add_argument("--ref-field", help="reference field; report Pearson r over the mask")

    sp = sub.add_parser("metrics", help="MI / NCC / RMSE table for one or more methods")
    common(sp)
    sp.add_argument("--t1", help="structural reference for MI")
    sp.add_argument("--label", action="append", help="method label (one per --plus/--minus)")
    sp.add_argument("--bins", type=int, default=met.DEFAULT_BINS)
    sp.add_argument("--slices", type=int, nargs="*", help="axial slices to tabulate")

    sp = sub.add_parser("phantom", help="write a synthetic reversed-PE phantom")
    common(sp, pair=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64))
    sp.add_argument("--amplitude", type=float, default=3.0)
    sp.add_argument("--blobs", type=int, default=5)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--noise", type=float, default=0.0, help="noise sigma (intensity units)")
    g.add_argument("--snr", type=float, help="noise as mean tissue intensity / SNR")
    return p


def _config(ns) -> RunConfig:
    return RunConfig(
        plus=getattr(ns, "plus", None) or [],
        minus=getattr(ns, "minus", None) or [],
        t1=getattr(ns, "t1", None),
        mask=getattr(ns, "mask", None),
        ref_field=getattr(ns, "ref_field", None),
        pe_axis=ns.pe_axis,
        tau=getattr(ns, "tau", DEFAULT_TAU),
        lam=getattr(ns, "lam", None),
        delta=getattr(ns, "delta", None),
        mode=getattr(ns, "mode", "slice2d"),
        bins=getattr(ns, "bins", met.DEFAULT_BINS),
        out=ns.out,
        threads=ns.threads,
        seed=getattr(ns, "seed", 0),
    ).validate()


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = _config(ns)
        if ns.command == "correct":
            return cmd_correct(cfg)
        if ns.command == "estimate-field":
            return cmd_estimate_field(cfg)
        if ns.command == "metrics":
            return cmd_metrics(cfg, ns.label, ns.slices)
        return cmd_phantom(cfg, ns.dims, ns.amplitude, ns.noise, ns.snr, ns.blobs)
    except UsageError as exc:
        print(f"otsdc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, NiftiError) as exc:
        print(f"otsdc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DegenerateInputError as exc:
        print(f"otsdc: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"otsdc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
