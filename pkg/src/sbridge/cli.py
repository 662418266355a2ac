"""Command-line interface.

Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines whose
keys are the subcommand's long option names (dashes or underscores).
Explicit flags override the file.  Each command that writes an output also
writes ``<output>.config`` holding the fully resolved settings and their
sha256 hash.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import io
from .datasets import DATASETS, Dataset2D, gen_dataset
from .errors import NumericalError, SBError, ValidationError
from .gaussian_sb import build_gaussian_drift
from .measures import GaussianMeasure
from .reference import build_reference
from .sfsb import TrainConfig, load_model, save_model, train
from .sim_eval import simulate, wasserstein1, wasserstein2
from .static_ot import sample_pairs, sinkhorn_eot
from .tfsb import build_tfsb

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_reference(p):
    g = p.add_argument_group("reference process")
    g.add_argument("--ref", choices=["ve", "vp", "subvp"], default="ve")
    g.add_argument("--sigma", type=float, default=1.0, help="VE diffusion scale")
    g.add_argument("--beta-min", type=float, default=0.1, help="VP / sub-VP schedule start")
    g.add_argument("--beta-max", type=float, default=20.0, help="VP / sub-VP schedule end")
    g.add_argument("--horizon-eps", type=float, default=1e-3)


def _reference(args):
    kind = {"ve": "VE", "vp": "VP", "subvp": "SubVP"}[args.ref]
    return build_reference(kind, beta_min=args.beta_min, beta_max=args.beta_max, sigma=args.sigma,
                           horizon_eps=args.horizon_eps)


def _add_sampler(p):
    p.add_argument("--steps", type=int, default=100, help="Euler-Maruyama steps N")
    p.add_argument("--eps", type=float, default=1e-3, help="time truncation")


def build_parser():
    parser = _Parser(prog="sbridge", description="Schrodinger bridge drift estimation and sampling")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write a benchmark point cloud")
    p.add_argument("--dataset", required=True, help=f"one of {', '.join(DATASETS)}")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean", type=_floats, default=None, help="gaussian dataset mean")
    p.add_argument("--cov", type=_floats, default=None, help="gaussian dataset covariance, row-major")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data, outputs=("out",))

    p = sub.add_parser("pair", help="pair two point clouds through the static bridge")
    p.add_argument("--x0", required=True, help="source CSV (or pair CSV with --paired)")
    p.add_argument("--x1", default=None, help="target CSV")
    p.add_argument("--paired", action="store_true", help="--x0 already holds pairs; validate and copy")
    p.add_argument("--n-pairs", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plan-out", default=None, help="also write the dense plan")
    p.add_argument("--out", required=True)
    _add_reference(p)
    p.set_defaults(func=cmd_pair, outputs=("out", "plan_out"))

    p = sub.add_parser("sample", help="simulate the bridge SDE")
    p.add_argument("--source", choices=["tfsb", "sfsb", "gauss"], required=True)
    p.add_argument("--pairs", default=None, help="pair CSV (tfsb)")
    p.add_argument("--model", default=None, help="model file (sfsb)")
    p.add_argument("--mu0", type=_floats, default=None)
    p.add_argument("--cov0", type=_floats, default=None)
    p.add_argument("--mu1", type=_floats, default=None)
    p.add_argument("--cov1", type=_floats, default=None)
    p.add_argument("--x0", default=None, help="start points CSV")
    p.add_argument("--n", type=int, default=None, help="number of particles (default: all start points)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="trajectory CSV")
    p.add_argument("--endpoints", default=None, help="endpoint CSV")
    _add_sampler(p)
    _add_reference(p)
    p.set_defaults(func=cmd_sample, outputs=("out", "endpoints"))

    p = sub.add_parser("train", help="fit the neural drift")
    p.add_argument("--pairs", required=True)
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--times-per-pair", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eps-t", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--hidden", type=_ints, default=[128, 128])
    p.add_argument("--activation", choices=["silu", "relu", "tanh"], default="silu")
    p.add_argument("--time-embed-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_reference(p)
    p.set_defaults(func=cmd_train, outputs=("out",))

    p = sub.add_parser("eval", help="Wasserstein distance between two point clouds")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=["w2", "w1"], default="w2")
    p.add_argument("--mode", choices=["exact", "subsample"], default="subsample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="metric JSON file (default: stdout only)")
    p.set_defaults(func=cmd_eval, outputs=("out",))

    p = sub.add_parser("plot", help="SVG of start points, end points and sample paths")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--max-paths", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot, outputs=("out",))

    for action in sub.choices.values():
        action.add_argument("--config", default=None, help="flat key=value settings file")
    return parser


# -- config handling ---------------------------------------------------------

_INTERNAL = {"func", "outputs", "command", "config", "help"}


def _read_config(path):
    entries = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            entries[key.replace("-", "_")] = value
    return entries


def _prescan(argv):
    """Command name and ``--config`` path, found before full parsing."""
    command = config = None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            config = next(it, None)
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, config


def _apply_config(parser, argv):
    """Parse ``argv`` with config-file values as defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = _prescan(argv)
    choices = parser._subparsers._group_actions[0].choices
    if config is None or command not in choices:
        return parser.parse_args(argv)
    sub = choices[command]
    actions = {a.dest: a for a in sub._actions if a.dest not in _INTERNAL}
    entries = _read_config(config)
    unknown = sorted(set(entries) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    defaults = {}
    for key, raw in entries.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        if action.choices is not None and raw not in action.choices:
            raise UsageError(f"config key {key}: {raw!r} is not one of {list(action.choices)}")
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key}: {exc}") from None
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolved_config(args):
    items = {k: v for k, v in sorted(vars(args).items()) if k not in _INTERNAL}
    lines = [f"command={args.command}"] + [f"{k}={_fmt(v)}" for k, v in items.items()]
    text = "\n".join(lines) + "\n"
    return text, hashlib.sha256(text.encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return ",".join(repr(x) for x in v)
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def _write_config(args, config_hash, text):
    for dest in args.outputs:
        path = getattr(args, dest, None)
        if path:
            with open(f"{path}.config", "w") as fh:
                fh.write(text)
                fh.write(f"config_hash={config_hash}\n")


def _emit(record):
    print(json.dumps(record, sort_keys=True))


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args, config_hash):
    params = {}
    if args.mean is not None:
        params["mean"] = args.mean
    if args.cov is not None:
        params["cov"] = args.cov
    x = gen_dataset(Dataset2D(args.dataset, args.n, args.seed, params))
    io.write_points(args.out, x)


def cmd_pair(args, config_hash):
    if args.paired:
        x0, x1 = io.read_pairs(args.x0)
        io.write_pairs(args.out, x0, x1)
        return
    if args.x1 is None:
        raise UsageError("pair needs --x1 unless --paired is given")
    ref = _reference(args)
    x0 = io.read_points(args.x0)
    x1 = io.read_points(args.x1)
    coupling = sinkhorn_eot(x0, x1, ref, max_iters=args.max_iters, tol=args.tol)
    p0, p1 = sample_pairs(coupling, args.n_pairs, args.seed)
    io.write_pairs(args.out, p0, p1)
    if args.plan_out:
        io.write_plan(args.plan_out, coupling.plan, coupling.epsilon)
    _emit({"metric": "sinkhorn_residual", "value": coupling.residual, "stderr": 0.0,
           "iterations": coupling.iterations, "epsilon": coupling.epsilon, "config_hash": config_hash})


def _gaussian(mean, cov, name):
    if mean is None or cov is None:
        raise UsageError(f"gauss source needs --mu{name} and --cov{name}")
    return GaussianMeasure.from_flat(mean, cov)


def cmd_sample(args, config_hash):
    if not (args.out or args.endpoints):
        raise UsageError("sample needs --out and/or --endpoints")
    if args.steps < 2:
        raise UsageError(f"--steps must be at least 2, got {args.steps}")
    ref = _reference(args)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(2**31,)))
    if args.source == "gauss":
        mu0 = _gaussian(args.mu0, args.cov0, "0")
        drift = build_gaussian_drift(mu0, _gaussian(args.mu1, args.cov1, "1"), ref)
        if args.x0:
            x0 = io.read_points(args.x0)
        else:
            if args.n is None:
                raise UsageError("gauss source needs --n or --x0")
            x0 = mu0.sample(args.n, rng)
    else:
        if args.x0 is None:
            raise UsageError(f"{args.source} source needs --x0 start points")
        x0 = io.read_points(args.x0)
        if args.source == "tfsb":
            if not args.pairs:
                raise UsageError("tfsb source needs --pairs")
            drift = build_tfsb(io.read_pairs(args.pairs), ref)
        else:
            if not args.model:
                raise UsageError("sfsb source needs --model")
            drift = load_model(args.model)
    if args.n is not None and args.x0:
        if not 1 <= args.n <= len(x0):
            raise UsageError(f"--n must lie in [1, {len(x0)}]")
        x0 = x0[:args.n]
    traj = simulate(drift, ref, x0, args.steps, args.eps, args.seed, record=bool(args.out))
    if args.out:
        io.write_trajectory(args.out, traj)
    if args.endpoints:
        io.write_points(args.endpoints, traj.endpoints)


def cmd_train(args, config_hash):
    ref = _reference(args)
    pairs = io.read_pairs(args.pairs)
    cfg = TrainConfig(iters=args.iters, batch_size=args.batch_size, times_per_pair=args.times_per_pair,
                      lr=args.lr, epsilon_t=args.eps_t, seed=args.seed, optimizer=args.optimizer,
                      hidden=tuple(args.hidden), activation=args.activation,
                      time_embed_dim=args.time_embed_dim)
    result = train(pairs, ref, cfg)
    save_model(result.net, args.out)
    _emit({"metric": "smoothed_loss", "value": result.smoothed_loss, "stderr": 0.0,
           "config_hash": config_hash})


def cmd_eval(args, config_hash):
    a = io.read_points(args.a)
    b = io.read_points(args.b)
    fn = wasserstein2 if args.metric == "w2" else wasserstein1
    est = fn(a, b, args.mode, seed=args.seed)
    record = {"metric": args.metric, "value": est.value, "stderr": est.stderr, "config_hash": config_hash}
    _emit(record)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def cmd_plot(args, config_hash):
    traj = io.read_trajectory(args.trajectory)
    with open(args.out, "w") as fh:
        fh.write(render_svg(traj, args.max_paths, args.seed))


def render_svg(traj, max_paths=200, seed=0, size=600, margin=20):
    """Standalone SVG: black start points, blue end points, red sample paths."""
    if not 0 <= max_paths <= 200:
        raise ValidationError("max_paths must lie in [0, 200]")
    states = traj.states[:, :, :2]
    lo = states.reshape(-1, 2).min(axis=0)
    hi = states.reshape(-1, 2).max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    scale = (size - 2 * margin) / span

    def xy(p):
        return margin + (p[..., 0] - lo[0]) * scale, size - margin - (p[..., 1] - lo[1]) * scale

    rng = np.random.default_rng(seed)
    k = states.shape[0]
    picks = np.sort(rng.choice(k, min(max_paths, k), replace=False))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for i in picks:
        px, py = xy(states[i])
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        out.append(f'<polyline points="{pts}" fill="none" stroke="red" stroke-opacity="0.4" stroke-width="0.6"/>')
    for pts, colour in ((states[:, 0], "black"), (states[:, -1], "royalblue")):
        px, py = xy(pts)
        out.append(f'<g fill="{colour}" fill-opacity="0.5">')
        out.extend(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="1"/>' for a, b in zip(px, py))
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _fail(exc, code):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        # a bare --help prints usage and exits 0 through SystemExit
        args = _apply_config(parser, argv)
        text, config_hash = resolved_config(args)
        args.func(args, config_hash)
        _write_config(args, config_hash, text)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except (SBError, ValueError, OSError) as exc:
        return _fail(exc, EXIT_USAGE)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
