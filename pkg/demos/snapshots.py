"""Leave-one-out prediction on snapshots of a slow Ornstein-Uhlenbeck flow.

Three population snapshots are taken one time unit apart.  The middle one
is held out and predicted from its neighbours, once with Sinkhorn pairs
and once with independent pairs as a baseline.

    python3 demos/snapshots.py
"""

import argparse

import numpy as np

from sbridge import LeaveOneOutConfig, build_reference, leave_one_out


def ou_snapshots(n, theta, noise, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    mu = np.array([4.0, 0.0])
    out = [x.copy()]
    dt = 0.01
    for _ in range(2):
        for _ in range(100):
            x = x - theta * (x - mu) * dt + noise * np.sqrt(dt) * rng.normal(size=x.shape)
        out.append(x.copy())
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--theta", type=float, default=0.3)
    ap.add_argument("--noise", type=float, default=0.3)
    ap.add_argument("--sigma", type=float, default=0.3, help="reference diffusion per unit gap")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    snaps = ou_snapshots(args.n, args.theta, args.noise, args.seed)
    ref = build_reference("VE", sigma=args.sigma)
    for pairing in ("sinkhorn", "independent"):
        scores = leave_one_out(snaps, LeaveOneOutConfig(ref=ref, pairing=pairing, steps=50, seed=args.seed))
        print(f"{pairing:12s} held-out W1 {scores[1].value:.3f}")


if __name__ == "__main__":
    main()
