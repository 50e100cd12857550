#!/usr/bin/env python3
"""Cross-validate the lattice step size s over a grid of ensembles.

Every route (Smith form, residue count, prime rank, binary gcd, box
density) must land on the same s; a disagreement prints loudly and the
script exits nonzero.
"""

import itertools
import sys
from fractions import Fraction

from central_approx import make_ensemble
from central_approx.factor_graph import step_size_methods
from central_approx.types_core import Alphabet

BINARY = Alphabet((0.0, 1.0))
TERNARY = Alphabet((0.0, 1.0, 2.0))


def configs():
    for l, r in itertools.product((2, 3, 4, 5), (2, 4, 6)):
        yield make_ensemble(l, r, BINARY, "parity"), f"({l},{r}) parity"
    for l in (2, 3):
        yield make_ensemble(l, 2, BINARY, "uniform"), f"({l},2) binary uniform"
        yield make_ensemble(l, 2, TERNARY, "uniform"), f"({l},2) ternary uniform"
    yield make_ensemble(2, 3, TERNARY, "all-equal"), "(2,3) ternary all-equal"
    yield make_ensemble(3, 3, TERNARY, "all-equal"), "(3,3) ternary all-equal"


def main() -> int:
    bad = 0
    for ens, label in configs():
        box = (3 * ens.l - 1) // 2 if ens.l % 2 else None
        methods = step_size_methods(ens, density_box_L=box)
        s = methods["snf"]
        agree = all(
            v == (Fraction(1, s) if name == "box_density" else s)
            for name, v in methods.items()
        )
        detail = "  ".join(f"{k}={v}" for k, v in methods.items())
        print(f"{'ok ' if agree else 'BAD'} {label:<28} s={s:<4} {detail}")
        bad += not agree
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
