"""How tight are the certificates? Bisect the real flip distance and compare.

For a batch of small random classifiers, finds the smallest L2 budget at
which PGD actually flips each prediction and compares it with the certified
radius. Soundness requires flip >= certificate everywhere; the ratio shows
how much slack the closed-form analysis leaves on top of that.
"""

import argparse

import numpy as np

from sparsecert import (AttackConfig, Dictionary, Hypothesis, certified_radius,
                        normalize_columns, pgd_l2, predict)


def flip_budget(h, x, label, lo, hi, steps=12):
    """Smallest budget in (lo, hi] where PGD flips, or None if hi is safe."""
    cfg = AttackConfig(budget=hi, steps=60, restarts=4, seed=0)
    _, flipped = pgd_l2(h, x, label, cfg)
    if not flipped:
        return None
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        cfg = AttackConfig(budget=mid, steps=60, restarts=4, seed=0)
        _, flipped = pgd_l2(h, x, label, cfg)
        if flipped:
            hi = mid
        else:
            lo = mid
    return hi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=12)
    args = ap.parse_args()

    rng = np.random.default_rng(11)
    print(f"{'certified':>10} {'real flip':>10} {'ratio':>7}")
    ratios = []
    for i in range(args.instances):
        dic = Dictionary(normalize_columns(
            np.random.default_rng(100 + i).standard_normal((6, 8))))
        h = Hypothesis(dic, rng.standard_normal((8, 2)), 0.25)
        x = rng.standard_normal(6) * 0.4
        label, _, _ = predict(h, x)
        cert = certified_radius(h, x, label).radius
        if cert <= 0.0:
            continue
        flip = flip_budget(h, x, label, cert, 40.0 * cert)
        if flip is None:
            print(f"{cert:>10.5f} {'> cap':>10} {'-':>7}")
            continue
        ratios.append(flip / cert)
        print(f"{cert:>10.5f} {flip:>10.5f} {flip / cert:>7.2f}")
    if ratios:
        print(f"\nall sound: min ratio {min(ratios):.2f} (must be >= 1); "
              f"median slack {np.median(ratios):.1f}x")


if __name__ == "__main__":
    main()
