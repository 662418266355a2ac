"""CSV interchange: point clouds, pairs, plans, trajectories."""

from __future__ import annotations

import re
import warnings

import numpy as np

from .errors import FormatError
from .sim_eval import TrajectoryBatch

_FMT = "%.17g"


def _columns(prefix, d):
    return [f"{prefix}_{i + 1}" for i in range(d)]


def _write(path, header, data):
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=_FMT)


def _read(path):
    with open(path) as fh:
        first = fh.readline().strip()
        try:
            with warnings.catch_warnings():
                # an empty body is reported below as a FormatError
                warnings.simplefilter("ignore", UserWarning)
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: non-numeric data ({exc})") from None
    header = first.split(",") if first else []
    if data.size and data.shape[1] != len(header):
        raise FormatError(f"{path}: header has {len(header)} columns, rows have {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: contains non-finite values")
    return header, data


def _dim_from(header, prefix, path):
    pat = re.compile(rf"{prefix}_(\d+)$")
    idx = [int(m.group(1)) for h in header if (m := pat.match(h))]
    if not idx or idx != list(range(1, len(idx) + 1)):
        raise FormatError(f"{path}: expected columns {prefix}_1..{prefix}_d, got {header}")
    return len(idx)


def write_points(path, x):
    x = np.atleast_2d(x)
    _write(path, _columns("x", x.shape[1]), x)


def read_points(path):
    header, data = _read(path)
    d = _dim_from(header, "x", path)
    if len(header) != d:
        raise FormatError(f"{path}: unexpected extra columns {header[d:]}")
    if data.shape[0] == 0:
        raise FormatError(f"{path}: no data rows")
    return data


def write_pairs(path, x0, x1):
    d = x0.shape[1]
    _write(path, _columns("x0", d) + _columns("x1", d), np.hstack([x0, x1]))


def read_pairs(path):
    header, data = _read(path)
    if len(header) % 2:
        raise FormatError(f"{path}: pair file needs an even number of columns")
    d = len(header) // 2
    if header != _columns("x0", d) + _columns("x1", d):
        raise FormatError(f"{path}: expected columns x0_1..x0_d,x1_1..x1_d, got {header}")
    if data.shape[0] == 0:
        raise FormatError(f"{path}: no data rows")
    return data[:, :d], data[:, d:]


def write_plan(path, plan, epsilon):
    with open(path, "w") as fh:
        fh.write(f"# epsilon={epsilon!r}\n")
        np.savetxt(fh, plan, delimiter=",", fmt=_FMT)


def read_plan(path):
    with open(path) as fh:
        first = fh.readline().strip()
        m = re.fullmatch(r"# epsilon=(\S+)", first)
        if not m:
            raise FormatError(f"{path}: plan must start with '# epsilon=<value>'")
        try:
            plan = np.loadtxt(fh, delimiter=",", ndmin=2)
            eps = float(m.group(1))
        except ValueError as exc:
            raise FormatError(f"{path}: non-numeric plan ({exc})") from None
    return plan, eps


def write_trajectory(path, batch: TrajectoryBatch):
    k, steps, d = batch.states.shape
    particle = np.repeat(np.arange(k), steps)
    step = np.tile(np.arange(steps), k)
    t = np.tile(batch.times, k)
    data = np.column_stack([particle, step, t, batch.states.reshape(k * steps, d)])
    fmt = ["%d", "%d"] + [_FMT] * (1 + d)
    np.savetxt(path, data, delimiter=",", header=",".join(["particle", "step", "t"] + _columns("x", d)),
               comments="", fmt=fmt)


def read_trajectory(path, drift_kind="unknown", seed=0):
    header, data = _read(path)
    if header[:3] != ["particle", "step", "t"]:
        raise FormatError(f"{path}: expected columns particle,step,t,x_1..x_d")
    d = _dim_from(header[3:], "x", path)
    particles = data[:, 0].astype(int)
    steps = data[:, 1].astype(int)
    k, n = particles.max() + 1, steps.max() + 1
    if data.shape[0] != k * n:
        raise FormatError(f"{path}: expected {k} particles x {n} steps rows, got {data.shape[0]}")
    order = np.lexsort((steps, particles))
    data = data[order]
    states = data[:, 3:3 + d].reshape(k, n, d)
    times = data[:n, 2]
    return TrajectoryBatch(times, states, drift_kind, seed)
