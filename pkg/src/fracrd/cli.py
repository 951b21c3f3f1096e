"""Command-line interface: ``restore``, ``synth``, ``eval`` and ``sweep``.

Settings resolve as command-line flag, then config file key, then built-in
default. The config file is INI-style with sections ``[restoration]``,
``[scene]``, ``[degradation]``, ``[eval]`` and ``[io]``; keys are the
option names below with underscores (``noise_sigma``), and unknown
sections or keys are rejected.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass
from typing import Any, Callable

from . import __version__
from .contconv import box_kernel, tent_kernel
from .diffusion import ConductanceSpec
from .field import DEFAULT_THRESHOLDS, compute_metrics, threshold_label
from .fractional import InstabilityError
from .io import FormatError, read_depth, write_depth
from .pipeline import AdaptiveAlpha, InitBuilder, RestorationConfig, run_restoration
from .synth import DegradationSpec, SceneSpec, degrade, generate_scene, run_benchmark

DEFAULT_SWEEP_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class CliError(Exception):
    pass


def _alpha(text: str):
    text = text.strip()
    if text == "adaptive":
        return "adaptive"
    parts = [p for p in text.split(",") if p.strip()]
    vals = [float(p) for p in parts]
    return vals[0] if len(vals) == 1 else vals


def _kappa(text: str):
    text = text.strip()
    return "auto" if text == "auto" else float(text)


def _opt_int(text: str):
    text = text.strip()
    return None if text in ("", "none") else int(text)


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {v}")
    return v


@dataclass(frozen=True)
class Option:
    section: str
    key: str
    type: Callable[[str], Any]
    default: Any
    help: str
    choices: tuple | None = None

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")


_RESTORATION = [
    Option("restoration", "iterations", int, 6, "number of refinement iterations"),
    Option("restoration", "alpha", _alpha, 0.5,
           "fractional order in (0,1], a comma list (one per iteration), or 'adaptive'"),
    Option("restoration", "lambda", float, 0.01, "reaction (fidelity) weight"),
    Option("restoration", "tau", float, 0.25, "step scale in (0,1]"),
    Option("restoration", "tau_policy", str, "fixed",
           "'stable' caps tau at the explicit L1 stability limit", ("fixed", "stable")),
    Option("restoration", "conductance", str, "rational", "diffusivity g",
           ("exp", "rational", "const")),
    Option("restoration", "kappa", _kappa, 30.0, "contrast parameter in mm, or 'auto'"),
    Option("restoration", "init", str, "identity", "initial-state builder",
           ("identity", "median", "gaussian", "bilateral")),
    Option("restoration", "init_radius", int, 1, "median builder radius (px)"),
    Option("restoration", "init_sigma", float, 1.0, "gaussian/bilateral spatial sigma (px)"),
    Option("restoration", "init_sigma_r", float, 30.0, "bilateral range sigma (mm)"),
    Option("restoration", "smoothing", str, "none",
           "continuous-convolution post-filter on the diffusion term", ("none", "box", "tent")),
    Option("restoration", "history_window", _opt_int, None, "keep only this many past differences"),
    Option("restoration", "nan_policy", str, "error", "reaction to non-finite updates",
           ("error", "clamp")),
    Option("restoration", "alpha_base", float, 0.5, "adaptive rule: base order"),
    Option("restoration", "alpha_gain", float, 0.5, "adaptive rule: tanh gain"),
    Option("restoration", "alpha_range_fraction", float, 0.01,
           "adaptive rule: scale as a fraction of the initial dynamic range"),
]

_SCENE = [
    Option("scene", "kind", str, "plane", "scene family",
           ("plane", "step", "slope", "spheres", "stairs")),
    Option("scene", "width", int, 128, "width (px)"),
    Option("scene", "height", int, 128, "height (px)"),
    Option("scene", "depth_min", float, 1000.0, "nearest depth (mm); planes sit here"),
    Option("scene", "depth_max", float, 2000.0, "farthest depth (mm)"),
    Option("scene", "seed", _u64, 0, "seed for scene geometry and sensor noise"),
]

_DEGRADATION = [
    Option("degradation", "noise_sigma", float, 10.0, "noise standard deviation (mm)"),
    Option("degradation", "attenuation", float, 1.0, "signal attenuation in (0,1]"),
    Option("degradation", "blur_sigma", float, 0.0, "blur sigma (px)"),
    Option("degradation", "bias", float, 0.0, "depth bias (mm)"),
    Option("degradation", "seed", _u64, 0, "seed for scene geometry and sensor noise"),
]

_THRESHOLDS = Option("eval", "thresholds", _floats, list(DEFAULT_THRESHOLDS),
                     "comma-separated ratio thresholds")
_ALPHAS = Option("sweep", "alphas", _floats, list(DEFAULT_SWEEP_ALPHAS),
                 "comma-separated fixed orders to sweep")

_IO_KEYS = {"input", "output", "gt", "raw", "pred", "out"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add(group, opt: Option) -> None:
    default = opt.default
    if isinstance(default, list):
        default = ",".join(f"{v:g}" for v in default)
    group.add_argument(
        opt.flag,
        dest=opt.key,
        type=str,
        default=None,
        metavar=opt.key.upper() if opt.choices is None else "{" + "|".join(opt.choices) + "}",
        help=f"{opt.help} (default: {default})",
    )


def _all_options():
    return _RESTORATION + _SCENE + _DEGRADATION + [_THRESHOLDS, _ALPHAS]


def _add_all(parser, options) -> None:
    # one flag per key: --seed feeds both [scene] seed and [degradation] seed
    seen = set()
    for o in options:
        if o.key not in seen:
            seen.add(o.key)
            _add(parser, o)


def _known_keys() -> dict[str, set[str]]:
    known: dict[str, set[str]] = {"io": set(_IO_KEYS)}
    for o in _all_options():
        known.setdefault(o.section, set()).add(o.key)
    return known


def load_config_file(path: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as f:
            cp.read_file(f)
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise CliError(f"malformed config file {path}: {str(exc).splitlines()[0]}") from exc
    known = _known_keys()
    out: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in known:
            raise CliError(f"{path}: unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in known[section]:
                raise CliError(f"{path}: unknown key '{key}' in [{section}]")
            out.setdefault(section, {})[key] = value
    return out


class Settings:
    """Resolved option values: flag > config file > default."""

    def __init__(self, args: argparse.Namespace, file_cfg: dict[str, dict[str, str]]):
        self._args = args
        self._file = file_cfg

    def raw(self, opt: Option):
        flag_val = getattr(self._args, opt.key, None)
        if flag_val is not None:
            return flag_val, "--" + opt.key.replace("_", "-")
        file_val = self._file.get(opt.section, {}).get(opt.key)
        if file_val is not None:
            return file_val, f"[{opt.section}] {opt.key}"
        return None, None

    def get(self, opt: Option):
        text, source = self.raw(opt)
        if text is None:
            return opt.default
        if opt.choices is not None and text not in opt.choices:
            raise CliError(f"{source}: invalid choice {text!r} (choose from {', '.join(opt.choices)})")
        try:
            return opt.type(text)
        except ValueError as exc:
            raise CliError(f"{source}: invalid value {text!r}: {exc}") from exc

    def io(self, key: str):
        val = getattr(self._args, key, None)
        if val is None:
            val = self._file.get("io", {}).get(key)
        return val


def _opt(options, key) -> Option:
    return next(o for o in options if o.key == key)


def restoration_config(s: Settings) -> RestorationConfig:
    g = {o.key: s.get(o) for o in _RESTORATION}
    kappa = g["kappa"]
    conductance = ConductanceSpec(
        variant=g["conductance"],
        kappa=30.0 if kappa == "auto" else kappa,
        auto_kappa=kappa == "auto",
    )
    alpha = g["alpha"]
    if alpha == "adaptive":
        alpha = AdaptiveAlpha(base=g["alpha_base"], gain=g["alpha_gain"],
                              range_fraction=g["alpha_range_fraction"])
    kernel = {"none": None, "box": box_kernel(1, normalize=True), "tent": tent_kernel()}[g["smoothing"]]
    return RestorationConfig(
        iterations=g["iterations"],
        alpha_schedule=alpha,
        lam=g["lambda"],
        tau=g["tau"],
        conductance=conductance,
        init_builder=InitBuilder(kind=g["init"], radius=g["init_radius"],
                                 sigma=g["init_sigma"], sigma_r=g["init_sigma_r"]),
        smoothing_kernel=kernel,
        history_window=g["history_window"],
        nan_policy="clamp_and_stop" if g["nan_policy"] == "clamp" else "error",
        tau_policy=g["tau_policy"],
    )


def scene_spec(s: Settings) -> SceneSpec:
    g = {o.key: s.get(o) for o in _SCENE}
    return SceneSpec(kind=g["kind"], width=g["width"], height=g["height"],
                     depth_min=g["depth_min"], depth_max=g["depth_max"], seed=g["seed"])


def degradation_spec(s: Settings) -> DegradationSpec:
    g = {o.key: s.get(o) for o in _DEGRADATION}
    return DegradationSpec(noise_sigma=g["noise_sigma"], attenuation=g["attenuation"],
                           blur_sigma=g["blur_sigma"], bias=g["bias"], seed=g["seed"])


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    text = ",".join(header) + "\n" + "".join(",".join(_fmt(v) for v in r) + "\n" for r in rows)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="ascii", newline="\n") as f:
            f.write(text)


def _metric_columns(thresholds) -> list[str]:
    return ["mae", "rmse"] + [f"rho_{threshold_label(t)}" for t in thresholds]


def _metric_values(m, thresholds) -> list[float]:
    return [m.mae, m.rmse] + [m.rho[float(t)] for t in thresholds]


def cmd_restore(s: Settings) -> int:
    inp, outp = s.io("input"), s.io("output")
    if not inp or not outp:
        raise CliError("restore needs an input and an output path")
    cfg = restoration_config(s)
    field, fmt, depth_range = read_depth(inp)
    restored, trace = run_restoration(field, cfg)
    write_depth(outp, restored, fmt, depth_range)
    last = trace.records[-1].max_update if trace.records else 0.0
    note = " (stopped early: non-finite update)" if trace.stopped_early else ""
    print(f"iterations={len(trace)} final_max_update={last:.6g}{note}")
    return 0


def cmd_synth(s: Settings) -> int:
    gt_path, raw_path = s.io("gt"), s.io("raw")
    if not gt_path or not raw_path:
        raise CliError("synth needs ground-truth and degraded output paths")
    scene, deg = scene_spec(s), degradation_spec(s)
    gt = generate_scene(scene)
    raw = degrade(gt, deg)
    write_depth(gt_path, gt)
    write_depth(raw_path, raw)
    return 0


def cmd_eval(s: Settings) -> int:
    pred_path, gt_path = s.io("pred"), s.io("gt")
    if not pred_path or not gt_path:
        raise CliError("eval needs prediction and ground-truth paths")
    thresholds = s.get(_THRESHOLDS)
    pred, _, _ = read_depth(pred_path)
    gt, _, _ = read_depth(gt_path)
    if pred.shape != gt.shape:
        raise CliError(
            f"dimension mismatch: prediction {pred.width}x{pred.height}, ground truth {gt.width}x{gt.height}"
        )
    m = compute_metrics(pred, gt, thresholds)
    header, row = _metric_columns(thresholds), _metric_values(m, thresholds)
    _write_csv(None, header, [row])
    out = s.io("out")
    if out:
        _write_csv(out, header, [row])
    return 0


def cmd_sweep(s: Settings) -> int:
    alphas = s.get(_ALPHAS)
    if not alphas:
        raise CliError("alpha list is empty")
    bad = [a for a in alphas if not 0.0 < a <= 1.0]
    if bad:
        raise CliError(f"alpha values must lie in (0, 1], got {', '.join(f'{a:g}' for a in bad)}")
    thresholds = s.get(_THRESHOLDS)
    base = restoration_config(s)
    adaptive = AdaptiveAlpha(base=s.get(_opt(_RESTORATION, "alpha_base")),
                             gain=s.get(_opt(_RESTORATION, "alpha_gain")),
                             range_fraction=s.get(_opt(_RESTORATION, "alpha_range_fraction")))
    configs = [base.with_alpha(a) for a in alphas] + [base.with_alpha(adaptive)]
    rows = run_benchmark([scene_spec(s)], [degradation_spec(s)], configs, thresholds)
    cols = _metric_columns(thresholds)
    header = ["alpha"] + cols + ["raw_mae", "raw_rmse", "iterations_run"]
    table = [[r["alpha"]] + [r[c] for c in cols] + [r["raw_mae"], r["raw_rmse"], r["iterations_run"]]
             for r in rows]
    _write_csv(s.io("out"), header, table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracrd", description="Fractional reaction-diffusion depth restoration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="INI config file; flags override its keys")

    p = sub.add_parser("restore", help="restore a depth file")
    p.add_argument("input", nargs="?", help="input depth file (.pfm or 16-bit .pgm)")
    p.add_argument("output", nargs="?", help="output path, written in the input's format")
    common(p)
    _add_all(p, _RESTORATION)

    p = sub.add_parser("synth", help="generate a ground-truth scene and a degraded copy")
    p.add_argument("gt", nargs="?", help="ground-truth output path (.pfm or .pgm)")
    p.add_argument("raw", nargs="?", help="degraded output path (.pfm or .pgm)")
    common(p)
    _add_all(p, _SCENE + _DEGRADATION)

    p = sub.add_parser("eval", help="compare a prediction against ground truth")
    p.add_argument("pred", nargs="?", help="predicted depth file")
    p.add_argument("gt", nargs="?", help="ground-truth depth file")
    p.add_argument("--out", help="also write the CSV here")
    common(p)
    _add(p, _THRESHOLDS)

    p = sub.add_parser("sweep", help="metrics over fixed orders plus the adaptive schedule")
    p.add_argument("out", nargs="?", help="output CSV path ('-' for stdout)")
    common(p)
    _add(p, _ALPHAS)
    _add_all(p, [o for o in _RESTORATION if o.key != "alpha"] + _SCENE + _DEGRADATION + [_THRESHOLDS])
    return parser


COMMANDS = {"restore": cmd_restore, "synth": cmd_synth, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("missing subcommand (restore, synth, eval or sweep)")
        file_cfg = load_config_file(args.config) if args.config else {}
        return COMMANDS[args.command](Settings(args, file_cfg))
    except InstabilityError as exc:
        print(f"fracrd: error: {exc}", file=sys.stderr)
        return 3
    except (CliError, FormatError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if isinstance(exc, OSError) and exc.filename:
            msg = f"{exc.filename}: {exc.strerror}"
        print(f"fracrd: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
