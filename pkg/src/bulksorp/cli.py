"""Command line entry point: ``bulksorp {run,check-model,exponents,verify}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TextIO

import numpy as np

from .config import Config, ConfigError, load_config
from .disc import write_snapshot
from .errors import DomainError, UsageError
from .exponents import ExponentQuery, standard_reports
from .model import (check_quasi_positivity, check_sorption_structure, check_triangular,
                    growth_exponent)
from .stepper import NORM_COLUMNS, Integrator, RunResult

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_BLOWUP, EXIT_PROPERTY = 0, 1, 2, 3, 4

CSV_HEADER = ",".join(("t", "species") + NORM_COLUMNS + ("total_mass",))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def write_csv(out: TextIO, result: RunResult, names) -> None:
    """One row per (sample time, species); floats with 17 significant digits."""
    out.write(CSV_HEADER + "\n")
    for t, norms, masses in zip(result.times, result.norms, result.masses):
        for name, row, mass in zip(names, norms, masses):
            vals = ",".join(f"{v:.17g}" for v in (*row, mass))
            out.write(f"{t:.17g},{name},{vals}\n")


def _snapshot_states(result: RunResult, every: float):
    """Output samples at which a new multiple of ``every`` has been reached, plus the final state."""
    picked, last = [], -1
    for s in result.snapshots:
        k = int(np.floor(s.t / every + 1e-9))
        if k > last:
            picked.append(s)
            last = k
    if picked[-1] is not result.snapshots[-1]:
        picked.append(result.snapshots[-1])
    return picked


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    t_end = cfg.t_end if args.t_end is None else args.t_end
    result = Integrator(cfg.problem(), cfg.stepper).run(cfg.initial_state(), t_end)
    csv_path = args.csv or cfg.csv
    if csv_path and csv_path != "-":
        with open(csv_path, "w", newline="") as fh:
            write_csv(fh, result, cfg.species.names)
    else:
        write_csv(sys.stdout, result, cfg.species.names)
    snap_dir = args.snapshot_dir or cfg.snapshot_dir
    if snap_dir:
        Path(snap_dir).mkdir(parents=True, exist_ok=True)
        every = cfg.snapshot_every or cfg.stepper.output_every
        for k, state in enumerate(_snapshot_states(result, every)):
            write_snapshot(Path(snap_dir) / f"snapshot_{k:05d}.txt", cfg.grid, state, cfg.species.names)
    msg = f"reason={result.reason} t={result.final_state.t:.17g} steps={result.n_steps} rejected={result.n_rejected}"
    if result.blowup is not None:
        t_est = result.blowup.t_est
        msg += f" trigger_time={result.blowup.trigger_time:.17g} T_est={'none' if t_est is None else f'{t_est:.17g}'}"
    print(msg, file=sys.stderr)
    return EXIT_OK if result.reason == "reached_T" else EXIT_BLOWUP


def model_reports(cfg: Config, n_samples: int) -> list:
    n = cfg.species.n_species
    reports = []
    for label, net, tri in (("bulk", cfg.bulk_reactions, cfg.triangular_bulk),
                            ("surface", cfg.surface_reactions, cfg.triangular_surface)):
        rep = check_quasi_positivity(net, n, n_samples=n_samples)
        rep.property = f"quasi_positivity[{label}]"
        reports.append(rep)
        if tri is not None:
            rep = check_triangular(net, tri, n_samples=n_samples)
            rep.property = f"triangular[{label}]"
            reports.append(rep)
    reports.append(check_sorption_structure(cfg.sorption, n_samples=n_samples))
    return reports


def cmd_check_model(args) -> int:
    cfg = load_config(args.config)
    for rep in model_reports(cfg, args.samples):
        print(rep.format())
    for label, net in (("bulk", cfg.bulk_reactions), ("surface", cfg.surface_reactions)):
        gamma, m = growth_exponent(net)
        print(f"growth[{label}] gamma={gamma} M={m:.17g}")
    return EXIT_OK


def cmd_exponents(args) -> int:
    query = ExponentQuery(args.d, args.p, args.komega, args.ksigma, args.gamma_omega, args.gamma_sigma,
                          args.mu_omega, args.mu_sigma)
    for rep in standard_reports(query):
        print(rep.render_kv() if args.format == "kv" else rep.render_text())
    return EXIT_OK


def cmd_verify(args) -> int:
    from .harness import suite

    checks = suite()
    if args.only:
        ids = [pid for pid, _ in checks]
        wanted = []
        for sel in args.only:
            match = [pid for pid in ids if pid == sel or pid.startswith(sel + "_")]
            if not match:
                raise UsageError(f"no property matches {sel!r}; known ids: {', '.join(ids)}")
            wanted.extend(m for m in match if m not in wanted)
        checks = [(pid, f) for pid, f in checks if pid in wanted]
    failed = False
    for _, thunk in checks:
        rep = thunk()
        print(rep.format(), flush=True)
        if args.verbose:
            print(f"  runtime={rep.runtime:.3f}s fingerprint={rep.fingerprint[:16]} {rep.detail}", flush=True)
        failed = failed or rep.verdict == "fail"
    return EXIT_PROPERTY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bulksorp", description="Bulk-surface reaction-diffusion-sorption simulator.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="integrate a configuration and write CSV norms")
    p.add_argument("config", help="configuration file or builtin:NAME")
    p.add_argument("--csv", help="CSV output path ('-' for stdout); overrides [output] csv")
    p.add_argument("--snapshot-dir", help="directory for field snapshots; overrides [output] snapshot_dir")
    p.add_argument("--t-end", type=float, help="override [stepper] t_end")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-model", help="sample-based structure checks of a configuration")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=4096)
    p.set_defaults(func=cmd_check_model)

    p = sub.add_parser("exponents", help="exact admissibility of integrability exponents")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", required=True, help="integrability exponent (decimal or fraction)")
    p.add_argument("--komega", type=int, default=1)
    p.add_argument("--ksigma", type=int, default=1)
    p.add_argument("--gamma-omega")
    p.add_argument("--gamma-sigma")
    p.add_argument("--mu-omega")
    p.add_argument("--mu-sigma")
    p.add_argument("--format", choices=("text", "kv"), default="text")
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("verify", help="run the property harness")
    p.add_argument("--only", action="append", help="property id or id prefix (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UsageError, DomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
