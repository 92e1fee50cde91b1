"""FX workflow success probability as one service's reliability varies.

Runs the two-stage check on an FX configuration and writes CSV rows of
(reliability, success probability) for the first Market Watch service, with
the remaining parameters at a fixed profile.  Plotting is left to the reader.
"""

import argparse
import csv
import sys
from fractions import Fraction

from epmc.generators import FX_PROFILE, GeneratorSpec, generate
from epmc.model import parse_model
from epmc.oracle import base_parameters
from epmc.patterns import SBS_KINDS, load_repository
from epmc.pipeline import epmc_check, eval_formula_set
from epmc.properties import parse_property


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pattern", default="SEQ", choices=SBS_KINDS)
    ap.add_argument("--services", type=int, default=2)
    ap.add_argument("--var", default="p1_1", help="parameter to sweep (default: first Market Watch service)")
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--reliability", default="0.9", help="value of every other service reliability")
    args = ap.parse_args()

    g = generate(GeneratorSpec("fx", args.pattern, args.services))
    src = parse_model(g.annotated)
    fs = epmc_check(src, load_repository(g.repository), [parse_property(g.properties[0])])
    names = sorted(base_parameters(fs))
    var = args.var
    # equal branch weights for PROB-style patterns, the fixed reliability for every service
    base = {n: Fraction(1, args.services) if n.startswith("x") else Fraction(args.reliability) for n in names}
    base.update({n: Fraction(1) for n in names if n.startswith(("c", "t"))})
    base.update({k: Fraction(str(v)) for k, v in FX_PROFILE.items()})
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow([var, "success_probability"])
    for i in range(args.steps + 1):
        x = Fraction(1, 2) + Fraction(i, 2 * args.steps)
        value = next(iter(eval_formula_set(fs, {**base, var: x}).values()))
        w.writerow([f"{float(x):.4f}", f"{value:.12g}"])


if __name__ == "__main__":
    main()
