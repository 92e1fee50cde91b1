"""Two-stage vs monolithic checking over the FX and multi-tier families.

Writes one CSV row per configuration: model sizes, checking times, formula-set
sizes (operation counts) and, with --samples, the largest numeric
disagreement.  Monolithic cells that exceed the timeout are marked T; cells
that exhaust the memory limit are marked M.
"""

import argparse
import csv
import sys

from epmc.benchmarks import BENCH_FIELDS, compare
from epmc.generators import GeneratorSpec
from epmc.patterns import SBS_KINDS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--services", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--patterns", nargs="+", default=list(SBS_KINDS))
    ap.add_argument("--deployments", nargs="+", default=["D1", "D2", "D3", "D4", "D5"])
    ap.add_argument("--timeout", type=float, default=300.0)
    ap.add_argument("--samples", type=int, default=0)
    args = ap.parse_args()

    specs = [GeneratorSpec("running-example")]
    specs += [GeneratorSpec("fx", k, n) for n in args.services for k in args.patterns]
    specs += [GeneratorSpec("multitier", deployment=d) for d in args.deployments]
    w = csv.DictWriter(sys.stdout, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for spec in specs:
        w.writerow(compare(spec, args.timeout, args.samples).row())
        sys.stdout.flush()


if __name__ == "__main__":
    main()
