"""Experiment runner: config sweeps over streams, reports, score dumps.

Every sweep cell is an independent pipeline run identified by its full
hyper-parameter fingerprint; cells execute serially or in a process pool
and produce identical outputs either way. Flags accept comma lists for the
sweep axes; a JSON config file can mirror every flag, with command-line
values taking precedence.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyLog, ZsnttaError
from .features import (
    ClusterSpec,
    NOISY_LABEL,
    load_noise_bank,
    mix_streams,
    read_feature_file,
    synth_stream,
    synthetic_noise_bank,
)
from .pipeline import (
    METHODS,
    PSEUDO_SOURCES,
    PipelineConfig,
    run_stream,
    write_decision_log,
)
from .threshold import ThresholdPolicy

OUT_DIR_ENV = "ZSNTTA_OUT"

EXIT_OK = 0
EXIT_CELL_FAILURES = 1
EXIT_BAD_SPEC = 2


class SpecError(ZsnttaError):
    """Experiment specification is invalid."""


@dataclass
class ExperimentSpec:
    """One experiment: a data source plus a grid of pipeline settings."""

    id_features: str | None = None
    ood_features: str | None = None
    synthetic: str | None = None
    noise_bank: list[str] = field(default_factory=lambda: ["none"])
    method: list[str] = field(default_factory=lambda: ["adand"])
    pseudo_source: list[str] = field(default_factory=lambda: ["zs_clip"])
    threshold: list[str] = field(default_factory=lambda: ["adaptive"])
    noise_ratio: list[float] = field(default_factory=lambda: [0.5])
    seed: list[int] = field(default_factory=lambda: [0])
    m: list[int] = field(default_factory=lambda: [8])
    l: list[int] = field(default_factory=lambda: [128])
    nq: list[int] = field(default_factory=lambda: [512])
    n_init: list[int] = field(default_factory=lambda: [10])
    lr: float = 0.0005
    tau: float = 0.01
    out: str = ""
    dump_decisions: bool = False
    jobs: int = 1
    bank_size: int = 1000

    def validate(self) -> None:
        if self.synthetic is None and self.id_features is None:
            raise SpecError("need --synthetic or --id-features")
        if self.synthetic is not None and self.id_features is not None:
            raise SpecError("--synthetic and --id-features are mutually exclusive")
        for name in ("noise_bank", "method", "pseudo_source", "threshold",
                     "noise_ratio", "seed", "m", "l", "nq", "n_init"):
            if not getattr(self, name):
                raise SpecError(f"sweep axis {name} is empty")
        for meth in self.method:
            if meth not in METHODS:
                raise SpecError(f"unknown method {meth!r}")
        for src in self.pseudo_source:
            if src not in PSEUDO_SOURCES:
                raise SpecError(f"unknown pseudo source {src!r}")
        for thr in self.threshold:
            _parse_threshold(thr)
        for r in self.noise_ratio:
            if not 0.0 <= r <= 1.0:
                raise SpecError(f"noise ratio {r} outside [0, 1]")
        if not self.out:
            raise SpecError("no output directory (flag --out or $" + OUT_DIR_ENV + ")")
        if self.jobs < 1:
            raise SpecError("jobs must be >= 1")
        if self.synthetic is not None:
            _parse_synthetic(self.synthetic)


def _parse_threshold(token: str) -> ThresholdPolicy:
    if token == "adaptive":
        return ThresholdPolicy.adaptive()
    if token.startswith("fixed:"):
        try:
            return ThresholdPolicy.fixed(float(token[len("fixed:"):]))
        except ValueError as exc:
            raise SpecError(f"bad threshold {token!r}: {exc}") from exc
    raise SpecError(f"threshold must be 'adaptive' or 'fixed:<value>', got {token!r}")


def _parse_synthetic(token: str) -> dict:
    """Parse 'k=10,d=64,n_per_class=200,ood_clusters=10,concentration=8'."""
    fields = {}
    for part in token.split(","):
        if "=" not in part:
            raise SpecError(f"bad synthetic field {part!r}")
        key, val = part.split("=", 1)
        fields[key.strip()] = val.strip()
    try:
        return {
            "num_classes": int(fields["k"]),
            "dim": int(fields["d"]),
            "n_per_class": int(fields["n_per_class"]),
            "ood_clusters": int(fields["ood_clusters"]),
            "concentration": float(fields["concentration"]),
        }
    except KeyError as exc:
        raise SpecError(f"synthetic spec missing field {exc}") from exc
    except ValueError as exc:
        raise SpecError(f"bad synthetic spec {token!r}: {exc}") from exc


@dataclass(frozen=True)
class Cell:
    """One point of the sweep grid."""

    method: str
    pseudo_source: str
    threshold: str
    noise_ratio: float
    seed: int
    m: int
    l: int
    nq: int
    n_init: int
    noise_bank: str

    def name(self) -> str:
        bank = self.noise_bank.replace("=", "-").replace(os.sep, "-")
        thr = self.threshold.replace(":", "")
        return (
            f"method={self.method}_ratio={self.noise_ratio:g}_seed={self.seed}"
            f"_m={self.m}_l={self.l}_nq={self.nq}_n={self.n_init}"
            f"_thr={thr}_ps={self.pseudo_source}_bank={bank}"
        )

    def fingerprint(self, spec: ExperimentSpec) -> dict:
        return {
            "method": self.method,
            "pseudo_source": self.pseudo_source,
            "threshold": self.threshold,
            "noise_ratio": self.noise_ratio,
            "seed": self.seed,
            "m": self.m,
            "l": self.l,
            "nq": self.nq,
            "n_init": self.n_init,
            "noise_bank": self.noise_bank,
            "lr": spec.lr,
            "tau": spec.tau,
            "source": spec.synthetic or spec.id_features,
            "ood_source": spec.ood_features,
        }


def sweep_cells(spec: ExperimentSpec) -> list[Cell]:
    """Cartesian product of the sweep axes, in deterministic order."""
    return [
        Cell(*combo)
        for combo in itertools.product(
            spec.method,
            spec.pseudo_source,
            spec.threshold,
            spec.noise_ratio,
            spec.seed,
            spec.m,
            spec.l,
            spec.nq,
            spec.n_init,
            spec.noise_bank,
        )
    ]


def _prepare_stream(spec: ExperimentSpec, cell: Cell):
    if spec.synthetic is not None:
        cluster = ClusterSpec(seed=cell.seed, **_parse_synthetic(spec.synthetic))
        bank, id_records, ood_records = synth_stream(cluster)
    else:
        bank, id_records = read_feature_file(spec.id_features)
        if bank is None:
            raise SpecError(f"{spec.id_features} has no classifier block")
        ood_records = []
        if spec.ood_features is not None:
            _, ood_records = read_feature_file(spec.ood_features)
    records = mix_streams(id_records, ood_records, cell.noise_ratio, cell.seed)
    return bank, records


def _resolve_noise_bank(token: str, dim: int, seed: int, count: int):
    if token == "none":
        return None
    if token == "synthetic":
        return synthetic_noise_bank(dim, count, seed)
    if "=" in token:
        noise_type, path = token.split("=", 1)
        return load_noise_bank(path, noise_type)
    return load_noise_bank(token, "gaussian")


def run_cell(spec: ExperimentSpec, cell: Cell) -> dict:
    """Execute one sweep cell; returns its report row (never raises)."""
    try:
        bank, records = _prepare_stream(spec, cell)
        noise_bank = _resolve_noise_bank(cell.noise_bank, bank.dim, cell.seed, spec.bank_size)
        config = PipelineConfig(
            tau=spec.tau,
            inject_every=cell.m,
            train_queue_len=cell.l,
            score_queue_len=cell.nq,
            warmup_steps=cell.n_init,
            lr=spec.lr,
            method=cell.method,
            pseudo_source=cell.pseudo_source,
            threshold_policy=_parse_threshold(cell.threshold),
            noise_bank=noise_bank,
            seed=cell.seed,
        )
        decisions, report = run_stream(bank, records, config)

        row = dict(cell.fingerprint(spec))
        row.update(
            status="ok",
            n_id=report.n_id,
            n_noisy=report.n_noisy,
            acc_s=report.acc_s,
            acc_n=report.acc_n,
            acc_h=report.acc_h,
            auroc=report.auroc,
            fpr95=report.fpr95,
        )

        name = cell.name()
        report_path = os.path.join(spec.out, f"{name}.report.txt")
        with open(report_path, "w", encoding="utf-8") as fh:
            for key, val in cell.fingerprint(spec).items():
                fh.write(f"{key}: {val}\n")
            fh.write(report.as_text())
        if spec.dump_decisions:
            write_decision_log(decisions, os.path.join(spec.out, f"{name}.decisions.tsv"))
        return row
    except Exception as exc:  # per-cell failures recorded, run continues
        row = dict(cell.fingerprint(spec))
        row.update(status=f"error: {exc}", n_id=None, n_noisy=None, acc_s=None,
                   acc_n=None, acc_h=None, auroc=None, fpr95=None)
        return row


TABLE_COLUMNS = (
    "method", "pseudo_source", "threshold", "noise_ratio", "seed", "m", "l",
    "nq", "n_init", "noise_bank", "lr", "tau", "source", "ood_source",
    "status", "n_id", "n_noisy", "acc_s", "acc_n", "acc_h", "auroc", "fpr95",
)


def _cell_value(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_table(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(TABLE_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(_cell_value(row.get(c)) for c in TABLE_COLUMNS) + "\n")


def _run_cell_star(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], int]:
    """Run every sweep cell; returns (rows, number of failed cells)."""
    spec.validate()
    os.makedirs(spec.out, exist_ok=True)
    cells = sweep_cells(spec)
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(_run_cell_star, [(spec, c) for c in cells]))
    else:
        rows = [run_cell(spec, c) for c in cells]
    write_table(rows, os.path.join(spec.out, "experiment_table.tsv"))
    failed = sum(1 for r in rows if r["status"] != "ok")
    return rows, failed


def score_histogram(scores, clean_flags, bins: int):
    """Bin verdict scores over [0, 1], split by clean/noisy ground truth.

    Returns a list of (bin_lo, bin_hi, clean_count, noisy_count).
    """
    scores = np.asarray(scores, dtype=np.float64)
    clean_flags = np.asarray(clean_flags, dtype=bool)
    if scores.size == 0:
        raise EmptyLog("no decisions to histogram")
    edges = np.linspace(0.0, 1.0, bins + 1)
    clean_counts, _ = np.histogram(scores[clean_flags], bins=edges)
    noisy_counts, _ = np.histogram(scores[~clean_flags], bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(clean_counts[i]), int(noisy_counts[i]))
        for i in range(bins)
    ]


def histogram_from_decisions(decisions, bins: int):
    """Histogram rows from in-memory decisions (original samples only)."""
    originals = [d for d in decisions if not d.is_injected]
    if not originals:
        raise EmptyLog("no original-sample decisions to histogram")
    return score_histogram(
        [d.verdict_score for d in originals],
        [d.truth_label != NOISY_LABEL for d in originals],
        bins,
    )


def _read_decision_log(path):
    scores, clean_flags = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        idx = {name: i for i, name in enumerate(header)}
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            stage = int(parts[idx["stage"]])
            col = "detector_score" if stage == 2 else "mcm_score"
            scores.append(float(parts[idx[col]]))
            clean_flags.append(int(parts[idx["truth"]]) != NOISY_LABEL)
    return scores, clean_flags


def write_histogram(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_lo\tbin_hi\tclean\tnoisy\n")
        for lo, hi, clean, noisy in rows:
            fh.write(f"{lo:.17g}\t{hi:.17g}\t{clean}\t{noisy}\n")


_LIST_AXES = {
    "noise_bank": str,
    "method": str,
    "pseudo_source": str,
    "threshold": str,
    "noise_ratio": float,
    "seed": int,
    "m": int,
    "l": int,
    "nq": int,
    "n_init": int,
}
_SCALARS = {
    "id_features": str,
    "ood_features": str,
    "synthetic": str,
    "lr": float,
    "tau": float,
    "out": str,
    "jobs": int,
    "bank_size": int,
}


def _build_run_parser(sub):
    p = sub.add_parser("run", help="run a sweep of pipeline configurations")
    p.add_argument("--config", help="JSON file mirroring every flag; flags override it")
    p.add_argument("--id-features", help="feature file with the classifier and ID records")
    p.add_argument("--ood-features", help="feature file with noisy records")
    p.add_argument("--synthetic", help="synthetic stream, e.g. k=10,d=64,n_per_class=200,ood_clusters=10,concentration=8")
    p.add_argument("--noise-bank", help="comma list of none | synthetic | [type=]path")
    p.add_argument("--method", help="comma list of frozen,adand")
    p.add_argument("--pseudo-source", help="comma list of zs_clip,detector,oracle")
    p.add_argument("--threshold", help="comma list of adaptive or fixed:<value>")
    p.add_argument("--noise-ratio", help="comma list of ratios in [0,1]")
    p.add_argument("--seed", help="comma list of seeds")
    p.add_argument("--m", help="comma list: inject one noise sample per M stream samples")
    p.add_argument("--l", help="comma list: training queue capacity")
    p.add_argument("--nq", help="comma list: score window length")
    p.add_argument("--n-init", help="comma list: warm-up optimization steps")
    p.add_argument("--lr", help="detector learning rate")
    p.add_argument("--tau", help="softmax temperature")
    p.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV})")
    p.add_argument("--bank-size", help="synthetic noise bank size")
    p.add_argument("--jobs", help="parallel worker processes")
    p.add_argument("--dump-decisions", action="store_true", default=None,
                   help="write per-cell decision logs (large)")
    return p


def _spec_from_args(args) -> ExperimentSpec:
    file_cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(_LIST_AXES) - set(_SCALARS) - {"dump_decisions"}
        if unknown:
            raise SpecError(f"unknown config keys: {sorted(unknown)}")

    spec = ExperimentSpec()
    spec.out = os.environ.get(OUT_DIR_ENV, "")

    def pick(name):
        cli_val = getattr(args, name, None)
        return cli_val if cli_val is not None else file_cfg.get(name)

    for name, conv in _LIST_AXES.items():
        raw = pick(name)
        if raw is None:
            continue
        if isinstance(raw, str):
            raw = raw.split(",")
        try:
            setattr(spec, name, [conv(v) for v in raw])
        except ValueError as exc:
            raise SpecError(f"bad value for {name}: {exc}") from exc
    for name, conv in _SCALARS.items():
        raw = pick(name)
        if raw is None:
            continue
        try:
            setattr(spec, name, conv(raw))
        except ValueError as exc:
            raise SpecError(f"bad value for {name}: {exc}") from exc
    dump = pick("dump_decisions")
    if dump is not None:
        spec.dump_decisions = bool(dump)
    return spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="zsntta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _build_run_parser(sub)
    hist = sub.add_parser("histogram", help="bin a decision log for offline plotting")
    hist.add_argument("--log", required=True, help="decision log written by a run")
    hist.add_argument("--bins", type=int, default=20)
    hist.add_argument("--out", required=True, help="output table path")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            spec = _spec_from_args(args)
            rows, failed = run_experiment(spec)
            print(f"{len(rows)} cells, {failed} failed; table at "
                  f"{os.path.join(spec.out, 'experiment_table.tsv')}")
            return EXIT_CELL_FAILURES if failed else EXIT_OK
        if args.command == "histogram":
            scores, clean_flags = _read_decision_log(args.log)
            rows = score_histogram(scores, clean_flags, args.bins)
            write_histogram(rows, args.out)
            print(f"histogram with {args.bins} bins at {args.out}")
            return EXIT_OK
    except (SpecError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_SPEC
    except ZsnttaError as exc:
        traceback.print_exc()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CELL_FAILURES
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
