"""Command-line front end: ``smmsim {verify,simulate,sweep,resources,opcount}``.

Random operands come from numpy's PCG64 generator seeded with the 64-bit
``--seed``; matrices are drawn with ``Generator.integers`` uniformly over
the full declared input range, A before B, one trial after another.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from .fxp import ConfigurationError, DatapathOverflowError, random_matrix
from .gemm import run_gemm
from .metrics import mce_measured, resource_report, sweep_csv, utilization, utilization_sweep
from .mxu import Mxu, MxuConfig, MxuError
from .reference import FORMS, matmul_naive, op_count

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class RunConfig:
    arch: str = "smm"
    r: int = 1
    leaf: str = "2x2"
    width: int = 8
    signed: bool = True
    q_add_pipeline: bool = False
    freq_mhz: float | None = None
    seed: int = 0
    trials: int = 10

    def __post_init__(self):
        self.arch = str(self.arch).lower()
        if self.arch not in ("mm", "smm"):
            raise ConfigurationError(f"arch must be 'mm' or 'smm', got {self.arch!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.trials < 0:
            raise ConfigurationError("trials must be >= 0")
        self.leaf_dims  # validates

    @property
    def leaf_dims(self) -> tuple[int, int]:
        try:
            x, y = (int(v) for v in str(self.leaf).lower().split("x"))
        except ValueError:
            raise ConfigurationError(f"leaf must look like 'XxY', got {self.leaf!r}") from None
        return x, y

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def mxu_config(self) -> MxuConfig:
        x, y = self.leaf_dims
        return MxuConfig(self.arch.upper(), self.r, x, y, self.width, self.q_add_pipeline,
                         self.signed)

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


_FLAG_KEYS = ("arch", "r", "leaf", "width", "signed", "q_add_pipeline", "freq_mhz", "seed",
              "trials")


def parse_n_range(text: str) -> list[int]:
    """``start:stop:step`` with ``stop`` inclusive; an empty range is allowed."""
    try:
        start, stop, step = (int(v) for v in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"n-range must be 'start:stop:step', got {text!r}") from None
    if step <= 0 or start < 1:
        raise ConfigurationError(f"n-range needs start >= 1 and step > 0, got {text!r}")
    return list(range(start, stop + 1, step))


def parse_size(text: str) -> tuple[int, int, int]:
    try:
        m, k, n = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"size must be 'MxKxN', got {text!r}") from None
    return m, k, n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run settings; flags override it")
    common.add_argument("--arch", choices=("mm", "smm"))
    common.add_argument("--r", type=int)
    common.add_argument("--leaf", help="leaf array dims XxY")
    common.add_argument("--width", type=int, help="input bitwidth")
    common.add_argument("--signed", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--q-add-pipeline", dest="q_add_pipeline",
                        action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--freq-mhz", dest="freq_mhz", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--trace", help="write a per-cycle port trace CSV here")

    p = argparse.ArgumentParser(prog="smmsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="random GEMMs vs the naive oracle")
    v.add_argument("--inject-fault", dest="inject_fault", choices=("q_bank",),
                   help=argparse.SUPPRESS)
    s = sub.add_parser("simulate", parents=[common], help="one GEMM, print the cycle report")
    s.add_argument("--size", help="MxKxN (default: the minimum full-rate size)")
    sw = sub.add_parser("sweep", parents=[common], help="measured MCE over n x n sizes (CSV)")
    sw.add_argument("--n-range", dest="n_range", default="8:96:8")
    sw.add_argument("--fill-fraction", dest="fill_fraction", type=float, default=0.005)
    sw.add_argument("--jobs", type=int, default=1)
    sub.add_parser("resources", parents=[common], help="analytical resource report (JSON)")
    o = sub.add_parser("opcount", help="operation counts for an n x n product")
    o.add_argument("n", type=int)
    o.add_argument("--form", choices=FORMS, default="conventional")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise ConfigurationError("config file must hold a JSON object")
    merged = RunConfig.from_dict(base).to_dict()
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return RunConfig.from_dict(merged)


def _trace_writer(path):
    fh = open(path, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["cycle", "unit", "port", "value"])
    return fh, (lambda cycle, unit, port, value: w.writerow([cycle, unit, port, value]))


def cmd_verify(rc: RunConfig, out, fault=None, trace=None) -> int:
    cfg = rc.mxu_config()
    rng = rc.rng()
    h, w = cfg.tile_m, cfg.tile_k
    passed = 0
    for t in range(rc.trials):
        m = int(rng.integers(1, 2 * h, endpoint=True))
        k = int(rng.integers(1, 2 * w, endpoint=True))
        n = int(rng.integers(1, 2 * cfg.tile_n, endpoint=True))
        a = random_matrix(rng, m, k, cfg.input_width, cfg.signed)
        b = random_matrix(rng, k, n, cfg.input_width, cfg.signed)
        try:
            c, _ = run_gemm(a, b, cfg, Mxu(cfg, fault=fault, trace=trace))
        except (DatapathOverflowError, MxuError) as exc:
            print(f"FAIL trial {t} ({m}x{k}x{n}): {exc}", file=out)
            continue
        ref = matmul_naive(a, b)
        diff = np.argwhere(c.values != ref.values)
        if diff.size:
            i, j = (int(v) for v in diff[0])
            print(f"FAIL trial {t} ({m}x{k}x{n}): first mismatch at C[{i}][{j}] = "
                  f"{int(c.values[i, j])}, expected {int(ref.values[i, j])} "
                  f"({len(diff)} elements differ)", file=out)
            continue
        passed += 1
    ok = passed == rc.trials
    print(f"{'PASS' if ok else 'FAIL'} {cfg.name}: {passed}/{rc.trials} exact", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(rc: RunConfig, size, out, trace=None) -> int:
    cfg = rc.mxu_config()
    m, k, n = size if size else (cfg.tile_m, cfg.tile_k, cfg.tile_n)
    rng = rc.rng()
    a = random_matrix(rng, m, k, cfg.input_width, cfg.signed)
    b = random_matrix(rng, k, n, cfg.input_width, cfg.signed)
    c, report = run_gemm(a, b, cfg, Mxu(cfg, trace=trace))
    exact = c.same_values(matmul_naive(a, b))
    doc = {"config": cfg.name, "size": [m, k, n], "exact": exact, **report.to_dict(),
           "mce": round(mce_measured(report, cfg), 4),
           "utilization": round(utilization(report, cfg), 4)}
    print(json.dumps(doc, indent=2), file=out)
    return EXIT_OK if exact else EXIT_FAIL


def cmd_sweep(rc: RunConfig, n_values, out, fill_fraction=0.005, jobs=1) -> int:
    points = utilization_sweep(rc.mxu_config(), n_values, rc.seed, fill_fraction, jobs)
    out.write(sweep_csv(points))
    return EXIT_OK


def cmd_resources(rc: RunConfig, out) -> int:
    print(resource_report(rc.mxu_config(), rc.freq_mhz).to_json(), file=out)
    return EXIT_OK


def cmd_opcount(n: int, form: str, out) -> int:
    ops = op_count(n, form)
    print("form,n,mults,adds,total", file=out)
    print(f"{form},{n},{ops.mults},{ops.adds},{ops.total}", file=out)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    trace_fh = None
    try:
        if args.command == "opcount":
            return cmd_opcount(args.n, args.form, out)
        rc = resolve_config(args)
        rc.mxu_config()
        trace = None
        if getattr(args, "trace", None):
            trace_fh, trace = _trace_writer(args.trace)
        if args.command == "verify":
            return cmd_verify(rc, out, fault=args.inject_fault, trace=trace)
        if args.command == "simulate":
            return cmd_simulate(rc, parse_size(args.size) if args.size else None, out, trace)
        if args.command == "sweep":
            return cmd_sweep(rc, parse_n_range(args.n_range), out, args.fill_fraction, args.jobs)
        if args.command == "resources":
            return cmd_resources(rc, out)
    except (ConfigurationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"smmsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if trace_fh is not None:
            trace_fh.close()
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
