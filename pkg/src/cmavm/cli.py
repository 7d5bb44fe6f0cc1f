"""Command-line entry point: ``cmavm run | compare | nulls | cutoff | ir2tf``.

On failure the process exits with status 1 and prints a JSON object
``{"error": <type>, "message": ..., "frequency_hz": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .acoustics import bessel_null_frequencies
from .geometry import SPEED_OF_SOUND, RingSpec, aliasing_cutoff
from .io import (SCENARIOS, ConfigError, ExperimentConfig, config_from_dict, ir_to_transfer_function,
                 load_config, load_impulse_responses, read_tf_table, write_tf_table)


def _parse_freqs(text: str, cfg: ExperimentConfig):
    from .experiment import null_subset, resolve_layout

    if text == "nulls":
        return null_subset(resolve_layout(cfg), cfg.grid())
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.array([float(v) for v in text.split(",")])


def cmd_run(args) -> int:
    from .experiment import run_experiment, write_run

    if args.config:
        cfg = load_config(args.config)
        if args.scenario and args.scenario != cfg.scenario:
            raise ConfigError("scenario", f"command line says {args.scenario!r}, config says {cfg.scenario!r}")
    else:
        if not args.scenario:
            raise ConfigError("scenario", "give a scenario name or --config")
        cfg = config_from_dict({"scenario": args.scenario})
    changes = {}
    if args.seed is not None:
        changes["ainn"] = dataclasses.replace(cfg.ainn, rng_seed=args.seed)
    if args.strict:
        changes["delta"] = 0.0
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.max_epochs is not None:
        changes["ainn"] = dataclasses.replace(changes.get("ainn", cfg.ainn), max_epochs=args.max_epochs)
    if args.out:
        changes["output_dir"] = args.out
    cfg = dataclasses.replace(cfg, **changes)
    freqs = _parse_freqs(args.freqs, cfg) if args.freqs else None
    tf = read_tf_table(args.tf_table) if args.tf_table else None
    result = run_experiment(cfg, freqs, tf)
    out = write_run(result, cfg.output_dir, save_models=args.save_models)
    print(f"{cfg.scenario}: {len(result.bins)} frequency bin(s) written to {out}")
    return 0


def cmd_compare(args) -> int:
    from .experiment import compare

    cmp = compare(args.run_a, args.run_b)
    print(cmp.table())
    return 0


def cmd_nulls(args) -> int:
    for n, f in bessel_null_frequencies(args.radius, args.c, args.f_max, args.n_max):
        print(f"J{n}\t{f:.3f}")
    return 0


def cmd_cutoff(args) -> int:
    print(f"{aliasing_cutoff(RingSpec(args.radius, args.count), args.c):.3f}")
    return 0


def cmd_ir2tf(args) -> int:
    irs = load_impulse_responses(args.irs)
    freqs = [float(v) for v in args.freqs.split(",")]
    write_tf_table(ir_to_transfer_function(irs, freqs), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmavm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write metrics.csv, beampattern.csv, manifest.json")
    r.add_argument("scenario", nargs="?", choices=SCENARIOS)
    r.add_argument("--config", help="JSON experiment config")
    r.add_argument("--freqs", help="frequency subset: 'nulls', START:STOP:STEP or a comma list (Hz)")
    r.add_argument("--seed", type=int, help="AINN seed override")
    r.add_argument("--out", help="output directory")
    r.add_argument("--strict", action="store_true", help="no regularisation (delta = 0)")
    r.add_argument("--workers", type=int, help="parallel frequency workers")
    r.add_argument("--max-epochs", type=int, help="AINN epoch cap override")
    r.add_argument("--tf-table", help="measured transfer functions (CSV) instead of synthetic plane waves")
    r.add_argument("--save-models", action="store_true", help="also write trained AINN models")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="per-frequency DI/WNG deltas and null detection for two runs")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.set_defaults(func=cmd_compare)

    n = sub.add_parser("nulls", help="Bessel-zero null frequencies of a ring")
    n.add_argument("--radius", type=float, default=0.12)
    n.add_argument("--c", type=float, default=SPEED_OF_SOUND)
    n.add_argument("--f-max", type=float, default=4000.0)
    n.add_argument("--n-max", type=int, default=10)
    n.set_defaults(func=cmd_nulls)

    a = sub.add_parser("cutoff", help="spatial-aliasing cutoff of a uniform ring")
    a.add_argument("--radius", type=float, default=0.12)
    a.add_argument("--count", type=int, default=10)
    a.add_argument("--c", type=float, default=SPEED_OF_SOUND)
    a.set_defaults(func=cmd_cutoff)

    t = sub.add_parser("ir2tf", help="impulse responses (.npz) to a transfer-function table (CSV)")
    t.add_argument("irs")
    t.add_argument("--freqs", required=True, help="comma list of frequencies (Hz)")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_ir2tf)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        cause = getattr(e, "cause", e)
        err = {"error": type(cause).__name__, "message": str(e)}
        if getattr(e, "frequency", None) is not None:
            err["frequency_hz"] = e.frequency
        if isinstance(e, ConfigError):
            err["key"] = e.key
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
