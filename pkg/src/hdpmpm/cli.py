"""Command-line interface.

Subcommands::

    hdpmpm simulate  SPEC.json --out data.csv [--truth truth.json] [--dictionary dict.json]
    hdpmpm mask      data.csv --out masked.csv (--mcar RATE --vars LIST | --mar MARSPEC.json)
    hdpmpm fit       data.csv dict.json [--config c.json] [--out draws.ndjson]
    hdpmpm summarize draws.ndjson [--profiles LIST] [--pair A,B] [--out-dir DIR]
    hdpmpm validate  [--replicates N] [--thin T]

Variable and profile numbers on the command line are 1-based.  Exit codes:
0 success, 1 usage error, 2 data or schema error, 3 numerical or saturation
error.  ``--seed`` overrides any seed given in a config file; the
``HDPMPM_WORKERS`` environment variable sets the thread count used when
``parallel_cells`` is on.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    dominant_profiles,
    membership_summary,
    posterior_functionals,
    summarize,
    trace,
)
from .errors import (
    DataError,
    InitializationError,
    NumericalError,
    ParameterError,
    PreconditionError,
    SaturationError,
    SchemaError,
)
from .io import (
    DataDictionary,
    RunManifest,
    VariableSpec,
    atomic_write_text,
    load_config,
    load_csv,
    load_draws,
    save_csv,
    save_draws,
)
from .lab import GenSpec, MarSpec, apply_mar, apply_mcar, generate_synthetic
from .rng import RandomStream
from .sampler import run_chain
from .validation import JointTestDims, validate_sampler

log = logging.getLogger("hdpmpm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_index_list(text: str, upper: int = None) -> list:
    """``"1,3,5-7"`` to 0-based ``[0, 2, 4, 5, 6]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise UsageError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if any(v < 1 for v in out):
        raise UsageError(f"indices are 1-based, got {text!r}")
    if upper is not None and any(v > upper for v in out):
        raise UsageError(f"index out of range 1..{upper} in {text!r}")
    return [v - 1 for v in out]


def _csv_string(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _infer_dictionary(path) -> DataDictionary:
    """Dictionary from a coded CSV alone: level count = largest code seen (at least 2)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    top = [2] * len(header)
    for r, row in enumerate(rows[1:], start=1):
        for j, cell in enumerate(row[:len(header)]):
            cell = cell.strip()
            if cell.isdigit():
                top[j] = max(top[j], int(cell))
    return DataDictionary(tuple(VariableSpec(n, d) for n, d in zip(header, top)))


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args):
    with open(args.spec, encoding="utf-8") as fh:
        spec = GenSpec.from_json(fh.read())
    seed = 0 if args.seed is None else args.seed
    ds, truth = generate_synthetic(spec, RandomStream(seed))
    save_csv(ds, args.out)
    truth_path = args.truth or f"{os.path.splitext(args.out)[0]}.truth.json"
    atomic_write_text(truth_path, json.dumps(truth.to_dict()) + "\n")
    if args.dictionary:
        DataDictionary.from_dataset(ds).save(args.dictionary)
    print(f"wrote {ds.n}x{ds.p} dataset to {args.out}; truth to {truth_path}")
    return EXIT_OK


def cmd_mask(args):
    dictionary = (DataDictionary.load(args.dictionary) if args.dictionary
                  else _infer_dictionary(args.data))
    ds = load_csv(args.data, dictionary)
    seed = 0 if args.seed is None else args.seed
    stream = RandomStream(seed)
    if (args.mcar is None) == (args.mar is None):
        raise UsageError("mask needs exactly one of --mcar or --mar")
    if args.mcar is not None:
        if args.vars is None:
            raise UsageError("--mcar needs --vars")
        result = apply_mcar(ds, parse_index_list(args.vars, ds.p), args.mcar, stream)
    else:
        with open(args.mar, encoding="utf-8") as fh:
            spec = MarSpec.from_json(fh.read())
        result = apply_mar(ds, spec, stream)
    save_csv(result.dataset, args.out)
    sidecar = args.sidecar or f"{os.path.splitext(args.out)[0]}.sidecar.json"
    atomic_write_text(sidecar, json.dumps(result.sidecar()) + "\n")
    for j, rate in sorted(result.realized_rates.items()):
        print(f"{ds.variable_names[j]}\tmissing {rate:.4f}")
    return EXIT_OK


def cmd_fit(args):
    dictionary = DataDictionary.load(args.dictionary)
    ds = load_csv(args.data, dictionary)
    hp, cfg = load_config(args.config) if args.config else load_config({})
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.parallel_cells:
        overrides["parallel_cells"] = True
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    step = max(1, cfg.iterations // 10)

    def progress(it, occupied):
        if not args.quiet and (it % step == 0 or it == cfg.iterations):
            print(f"sweep {it}/{cfg.iterations}  occupied {occupied}", file=sys.stderr)

    draws = run_chain(ds, hp, cfg, progress=progress)
    manifest_path = args.manifest or f"{os.path.splitext(args.out)[0]}.manifest.json"
    manifest = RunManifest.for_run(ds, hp, cfg, draws, draws_file=args.out)
    save_draws(draws, args.out, manifest)
    manifest.save(manifest_path)
    if draws.saturation_events:
        print(f"warning: K={draws.K} saturated on {len(draws.saturation_events)} sweeps",
              file=sys.stderr)
    print(f"wrote {len(draws)} draws to {args.out}; manifest {manifest_path}")
    return EXIT_OK


def _profile_rows(summary, profiles, names):
    header = ["variable"]
    for k in profiles:
        header += [f"profile{k + 1}_level{d + 1}" for d in range(summary.mean_phi.shape[2])]
    rows = [header, ["proportion"] + sum(
        [[f"{summary.mean_beta[k]:.6f}"] + [""] * (summary.mean_phi.shape[2] - 1)
         for k in profiles], [])]
    for j, name in enumerate(names):
        row = [name]
        for k in profiles:
            vals = summary.mean_phi[k, j]
            row += [f"{v:.6f}" if d < summary.levels[j] else "" for d, v in enumerate(vals)]
        rows.append(row)
    return rows


def cmd_summarize(args):
    draws = load_draws(args.draws)
    summary = summarize(draws)
    K = summary.K
    names = list(draws.variable_names) or [f"V{j + 1}" for j in range(summary.p)]
    dominant = dominant_profiles(summary, args.threshold)
    profiles = parse_index_list(args.profiles, K) if args.profiles else dominant
    if args.pair:
        pair = tuple(parse_index_list(args.pair, K))
        if len(pair) != 2:
            raise UsageError("--pair takes two profile numbers")
    else:
        pair = tuple(profiles[:2]) if len(profiles) >= 2 else None
    report = posterior_functionals(draws, profiles, pair)
    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731

    atomic_write_text(out("profiles.csv"), _csv_string(_profile_rows(summary, profiles, names)))
    sd_rows = _profile_rows(dataclasses.replace(summary, mean_phi=summary.sd_phi,
                                                mean_beta=summary.sd_beta), profiles, names)
    atomic_write_text(out("profiles_sd.csv"), _csv_string(sd_rows))

    head = ["variable"] + [f"cr_profile{k + 1}" for k in profiles]
    if pair is not None:
        head += [f"dr_profile{pair[0] + 1}_profile{pair[1] + 1}", "tie_rate"]
    rows = [head]
    for j, name in enumerate(names):
        row = [name] + [f"{report.cohesion[k][j]:.6f}" for k in profiles]
        if pair is not None:
            row += [f"{report.disagreement[j]:.6f}", f"{report.tie_rate[j]:.6f}"]
        rows.append(row)
    atomic_write_text(out("functionals.csv"), _csv_string(rows))

    doc = {"draw_count": summary.draw_count, "K": K,
           "mean_beta": summary.mean_beta.tolist(), "sd_beta": summary.sd_beta.tolist(),
           "dominant_profiles": [k + 1 for k in dominant], "threshold": args.threshold,
           "saturation_events": list(draws.saturation_events), "restarts": draws.restarts}
    if draws.has_pi:
        mem = membership_summary(summary, args.person_threshold, dominant)
        doc["membership"] = {
            "person_threshold": mem.threshold,
            "dominant_count_shares": {str(c): s for c, s in mem.histogram.items()},
            "modal_shares": {str(k + 1): s for k, s in mem.modal_shares.items()}}
    else:
        doc["membership"] = None
        print("note: draws stored without pi; membership summary skipped", file=sys.stderr)
    atomic_write_text(out("summary.json"), json.dumps(doc, indent=2) + "\n")

    cols = {"iteration": [d.iteration for d in draws.draws]}
    for k in range(min(K, args.trace_k)):
        cols[f"beta_{k + 1}"] = trace(draws, "beta", k)
    cols["gamma"] = trace(draws, "gamma")
    cols["alpha0"] = trace(draws, "alpha0")
    cols["occupied_count"] = trace(draws, "occupied_count")
    for j in range(summary.p):
        cols[f"marginal_{names[j]}_1"] = trace(draws, "marginal_prob", j, 0)
    keys = list(cols)
    rows = [keys] + [[repr(float(cols[c][s])) if c not in ("iteration", "occupied_count")
                      else str(int(cols[c][s])) for c in keys] for s in range(len(draws))]
    atomic_write_text(out("traces.csv"), _csv_string(rows))
    print(f"dominant profiles: {[k + 1 for k in dominant]}; reports in {args.out_dir}")
    return EXIT_OK


def cmd_validate(args):
    seed = 0 if args.seed is None else args.seed
    report = validate_sampler(JointTestDims(), args.replicates, RandomStream(seed), thin=args.thin,
                              concentrations_first=args.concentrations_first)
    text = str(report) + (f"\n\nreplicates {report.n_replicates}; "
                          f"{report.fraction_within(3.0):.1%} of {len(report.results)} "
                          f"statistics with |z| < 3; max |z| {report.max_abs_z:.2f}\n")
    if args.out:
        atomic_write_text(args.out, text)
    print(text, end="")
    if args.strict and report.fraction_within(3.0) < 0.95:
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser():
    p = _Parser(prog="hdpmpm", description="HDP mixture of products of multinomials")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a synthetic dataset from a GenSpec JSON")
    s.add_argument("spec")
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.add_argument("--dictionary", help="also write a data dictionary here")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("mask", help="apply MCAR or MAR missingness to a CSV")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--dictionary")
    s.add_argument("--mcar", type=float, metavar="RATE")
    s.add_argument("--vars", help="1-based variable list for --mcar, e.g. 12-23")
    s.add_argument("--mar", metavar="MARSPEC")
    s.add_argument("--sidecar")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("fit", help="run the Gibbs sampler")
    s.add_argument("data")
    s.add_argument("dictionary")
    s.add_argument("--config")
    s.add_argument("--out", default="draws.ndjson")
    s.add_argument("--manifest")
    s.add_argument("--seed", type=int)
    s.add_argument("--parallel-cells", action="store_true")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("summarize", help="profile, functional, membership and trace reports")
    s.add_argument("draws")
    s.add_argument("--profiles", help="1-based profile list (default: dominant profiles)")
    s.add_argument("--pair", help="two 1-based profiles for the disagreement score")
    s.add_argument("--threshold", type=float, default=0.1)
    s.add_argument("--person-threshold", type=float, default=0.1)
    s.add_argument("--trace-k", type=int, default=10, help="number of beta traces")
    s.add_argument("--out-dir", default="reports")
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("validate", help="joint-distribution test of the sampler")
    s.add_argument("--replicates", type=int, default=10000)
    s.add_argument("--thin", type=int, default=25)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--strict", action="store_true", help="exit 3 if fewer than 95%% pass")
    s.add_argument("--concentrations-first", action="store_true",
                   help="run Step 5 before Step 4 in each sweep")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, ParameterError, PreconditionError, InitializationError,
            OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SaturationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
