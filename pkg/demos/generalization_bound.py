"""Explore the generalization-gap calculator.

Evaluates the high-probability bound on the gap between empirical and
population loss for an encoder-then-linear classifier, and shows how it
moves with sample count and with the input perturbation level. Instant.
"""

from dataclasses import replace

from sparsecert import BoundInputs, generalization_bound

BASE = BoundInputs(loss_bound=1.0, loss_lipschitz=1.0, weight_norm_bound=1.0,
                   input_dim=100, num_atoms=120, num_samples=10_000,
                   lam=0.2, coherence_bound=0.5, sparsity=20,
                   perturbation=0.1, confidence=0.05, min_gap=0.5)


def main():
    rep = generalization_bound(BASE)
    print("base setting:")
    print(f"  encoder constant K = {rep.k_lambda:.4f}")
    print(f"  minimal sample size m_min = {rep.m_min:.1f} "
          f"(applicable: {rep.applicable})")
    print(f"  gap bound = {rep.gap_bound:.4f}")

    print("\nmore data tightens the bound:")
    for m in (1_000, 10_000, 100_000, 1_000_000):
        rep = generalization_bound(replace(BASE, num_samples=m))
        print(f"  m = {m:>9,}: gap <= {rep.gap_bound:.4f}")

    print("\nlarger perturbations loosen it:")
    for nu in (0.0, 0.05, 0.1, 0.2):
        rep = generalization_bound(replace(BASE, perturbation=nu))
        tag = "" if rep.applicable else "  (below minimal sample size)"
        print(f"  nu = {nu:.2f}: gap <= {rep.gap_bound:.4f}{tag}")

    # The gap condition is strict: once the measured encoder gap no longer
    # exceeds twice the perturbation, no sample size makes the bound apply.
    rep = generalization_bound(replace(BASE, perturbation=0.25))
    print(f"\nnu = 0.25 with min_gap = {BASE.min_gap}: "
          f"m_min = {rep.m_min} (never applicable)")


if __name__ == "__main__":
    main()
