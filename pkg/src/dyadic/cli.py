"""Command-line front end.

Values are resolved with precedence command line > config file > defaults.
The config file is flat ``key = value`` text whose keys are the long flag
names without leading dashes; ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .experiments import ExperimentPlan, run
from .integrator import AUTO, EXPLICIT, INTEGRATING_FACTOR, StepperConfig
from .io import write_outputs
from .model import ModelParams, constants

SUBCOMMANDS = ("simulate", "blowup", "regularity", "attractor", "verify", "constants")
PLAN_KIND = {
    "simulate": "simulate",
    "blowup": "blowup_study",
    "regularity": "regularity_study",
    "attractor": "attractor_probe",
    "verify": "verify_suite",
}


class UsageError(ConfigError):
    pass


def _opt_float(s):
    return None if s in (None, "", "none", "None") else float(s)


def _modes_list(s):
    if isinstance(s, (tuple, list)):
        return tuple(int(x) for x in s)
    s = str(s).strip()
    return tuple(int(x) for x in s.split(",") if x.strip()) if s else ()


# name -> (type, default, help); defaults can be refined per subcommand below
FLAGS = {
    "lambda": (float, 2.0, "grid ratio, > 1"),
    "nu": (float, 1.0, "viscosity"),
    "alpha": (float, 0.5, "dissipation degree"),
    "gamma": (_opt_float, None, "regularity index (none: min(1/3, 1-3 alpha)/4 if alpha < 1/3, else 0)"),
    "modes": (int, 32, "Galerkin truncation N"),
    "modes-list": (_modes_list, (), "comma-separated truncations for refinement"),
    "t-end": (float, 1.0, "final time"),
    "g1": (float, 1.0, "forcing amplitude on the first mode"),
    "init": (str, None, "initial-data file, one amplitude per line"),
    "rel-tol": (float, 1e-8, "relative tolerance"),
    "abs-tol": (float, 1e-12, "absolute tolerance"),
    "dt-init": (float, 1e-6, "first trial step"),
    "max-steps": (int, 1_000_000, "accepted-step budget"),
    "mode": (str, AUTO, f"stepper: {AUTO}, {EXPLICIT} or {INTEGRATING_FACTOR}"),
    "sample-every": (_opt_float, None, "sampling interval (none: every accepted step)"),
    "stop-norm": (_opt_float, None, "stop when ||u||_gamma reaches this value"),
    "tail-tol": (float, 1e-6, "tail share that ends the faithful window"),
    "tail-width": (int, 5, "number of top modes in the tail share"),
    "tail-gamma": (_opt_float, None, "norm index of the tail share (none: 1/3+gamma for blowup, gamma otherwise)"),
    "n-vectors": (int, 10_000, "random vectors per check (verify)"),
    "workers": (int, 1, "process-pool size for refinement runs"),
    "seed": (int, 0, "random seed"),
    "out": (str, None, "output directory"),
}

SUB_DEFAULTS = {
    "blowup": {"alpha": 0.25, "modes-list": (40, 80, 160)},
    "regularity": {"t-end": 100.0, "rel-tol": 1e-10, "abs-tol": 1e-14},
    "attractor": {"t-end": 10.0, "modes": 20},
    "verify": {"modes": 64},
    "constants": {"alpha": 0.25, "gamma": 0.1},
}


def defaults_for(sub: str) -> dict:
    d = {k: v[1] for k, v in FLAGS.items()}
    d.update(SUB_DEFAULTS.get(sub, {}))
    if d["out"] is None:
        d["out"] = f"runs/{sub}"
    return d


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    overrides: dict = field(default_factory=dict)
    config_path: str | None = None
    output_dir: str = ""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyadic", description="Dyadic model simulator and verification laboratory.")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for sub in SUBCOMMANDS:
        sp = subs.add_parser(sub, help=f"{sub} run")
        d = defaults_for(sub)
        for name, (_typ, _, text) in FLAGS.items():
            shown = ",".join(map(str, d[name])) if isinstance(d[name], tuple) else d[name]
            sp.add_argument(f"--{name}", default=argparse.SUPPRESS, metavar="X",
                            help=f"{text} (default: {shown})")
        sp.add_argument("--config", default=argparse.SUPPRESS, metavar="PATH",
                        help="key = value file; command-line flags win over it (default: none)")
    return parser


def read_config_file(path) -> dict:
    vals = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for k, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{k}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in FLAGS:
            raise UsageError(f"{path}:{k}: unknown key {key!r}")
        vals[key] = val
    return vals


def _convert(name, raw):
    typ = FLAGS[name][0]
    try:
        return typ(raw) if raw is not None else None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--{name}: cannot parse {raw!r}") from exc


def parse(args: list[str]) -> CliConfig:
    """Resolve ``args`` into a CliConfig, raising UsageError on any problem."""
    ns = vars(build_parser().parse_args(args))
    sub = ns.pop("subcommand")
    config_path = ns.pop("config", None)
    cli = {k.replace("_", "-"): v for k, v in ns.items()}
    merged = defaults_for(sub)
    if config_path is not None:
        merged.update({k: _convert(k, v) for k, v in read_config_file(config_path).items()})
    merged.update({k: _convert(k, v) for k, v in cli.items()})
    cfg = CliConfig(sub, merged, config_path, merged["out"])
    if sub != "constants":
        build_plan(cfg)  # range checks
    else:
        _params(cfg)
    return cfg


def render(cfg: CliConfig) -> list[str]:
    """Argument list that parses back to ``cfg``."""
    out = [cfg.subcommand]
    for k, v in cfg.overrides.items():
        if v is None:
            continue
        if isinstance(v, tuple):
            if not v:
                continue
            v = ",".join(map(str, v))
        out += [f"--{k}", repr(v) if isinstance(v, float) else str(v)]
    if cfg.config_path is not None:
        out += ["--config", cfg.config_path]
    return out


def _params(cfg: CliConfig) -> ModelParams:
    o = cfg.overrides
    try:
        return ModelParams(lam=o["lambda"], nu=o["nu"], alpha=o["alpha"], force=(o["g1"],), n_modes=o["modes"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def read_init(path) -> tuple[float, ...]:
    vals = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read initial data {path}: {exc}") from exc
    for k, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            x = float(line)
        except ValueError as exc:
            raise UsageError(f"{path}:{k}: not a number: {line!r}") from exc
        if not math.isfinite(x):
            raise UsageError(f"{path}:{k}: non-finite amplitude")
        vals.append(x)
    return tuple(vals)


def build_plan(cfg: CliConfig) -> ExperimentPlan:
    o = cfg.overrides
    params = _params(cfg)
    try:
        stepper = StepperConfig(
            rel_tol=o["rel-tol"], abs_tol=o["abs-tol"], dt_init=o["dt-init"],
            max_steps=o["max-steps"], mode=o["mode"],
        )
        return ExperimentPlan(
            kind=PLAN_KIND[cfg.subcommand],
            params=params,
            gamma=o["gamma"],
            n_list=o["modes-list"],
            t_end=o["t-end"],
            stepper=stepper,
            seed=o["seed"],
            output_dir=cfg.output_dir,
            init=read_init(o["init"]) if o["init"] else None,
            sample_every=o["sample-every"],
            tail_tol=o["tail-tol"],
            tail_width=o["tail-width"],
            tail_gamma=o["tail-gamma"],
            stop_norm=o["stop-norm"],
            n_vectors=o["n-vectors"],
            workers=o["workers"],
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def constants_table(cfg: CliConfig) -> str:
    p = _params(cfg)
    gamma = cfg.overrides["gamma"] or 0.0
    cs = constants(p, gamma, strict=False).as_dict()
    width = max(map(len, cs))
    return "\n".join(f"{k:<{width}}  {v!r}" for k, v in cs.items())


def execute(cfg: CliConfig) -> int:
    """Run the configured experiment; 0 ok, 1 invariant failure, 2 usage error."""
    if cfg.subcommand == "constants":
        print(constants_table(cfg))
        return 0
    try:
        plan = build_plan(cfg)
        artifact = run(plan)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        out = write_outputs(artifact, cfg.output_dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in artifact.failures:
        print(f"FAIL: {line}", file=sys.stderr)
    print(f"wrote {out} ({artifact.wall_time:.2f} s)")
    return 0 if artifact.ok else 1


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
