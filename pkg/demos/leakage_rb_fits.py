"""Leakage randomized benchmarking on an injected error.

Every Clifford is followed by a small error channel that moves a fraction
``leak`` of each qubit state to |2> and lets |2> relax back at rate
``seep``. Fitting the computational-subspace population and the ground-state
population then recovers the injected leakage rate.
"""
import argparse
import math

import numpy as np

from leakopt.clifford import CliffordSet, build_clifford_table
from leakopt.quantum import QuantumChannel
from leakopt.rb import DEFAULT_LENGTHS, full_leakage_rb


def leaky_error(leak: float, seep: float) -> QuantumChannel:
    keep = np.diag([math.sqrt(1 - leak), math.sqrt(1 - leak), math.sqrt(1 - seep)]).astype(complex)
    ops = [keep]
    for src, dst, p in ((0, 2, leak), (1, 2, leak), (2, 0, seep)):
        k = np.zeros((3, 3), complex)
        k[dst, src] = math.sqrt(p)
        ops.append(k)
    return QuantumChannel.from_kraus(ops)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--leak", type=float, default=0.003)
    parser.add_argument("--seep", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cliffords = CliffordSet.ideal(3, build_clifford_table(), error=leaky_error(args.leak, args.seep))
    result, data = full_leakage_rb(cliffords, DEFAULT_LENGTHS, n_sequences=20, shots=1000, seed=args.seed)

    p0, err = data.mean("p0")
    chi1, _ = data.mean("chi1")
    print(" m    p0       +-       p(qubit)")
    for m, a, e, c in zip(data.lengths, p0, err, chi1):
        print(f"{m:>3}  {a:.4f}  {e:.4f}  {c:.4f}")
    print()
    print(f"injected leakage per Clifford {args.leak:.2e}")
    print(f"fitted   L1                   {result.l1:.2e} +- {result.stderr['L1']:.1e}")
    print(f"lambda1 {result.lambda1:.5f}, lambda2 {result.lambda2:.5f}, average fidelity {result.f_avg:.5f}")
    for name, fit in (("single", result.single), ("double", result.double)):
        if fit.flags:
            print(f"{name} fit flags: {', '.join(fit.flags)}")


if __name__ == "__main__":
    main()
