"""Run one ablation sweep at the default desk budget and print the table.

    python3 scripts/run_ablation.py components --cache .cache/sweeps
    python3 scripts/run_ablation.py alpha --values 0.85,0.9,0.95 --seeds 1
"""

import argparse
import sys

from vpp.eval_harness import Format, SweepParam, SweepSpec, parse_value, render, run_sweep
from vpp.eval_harness.sweep import COMPONENTS


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("param", choices=[p.value for p in SweepParam])
    ap.add_argument("--values", help="comma-separated; components defaults to all four settings")
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--n-train", type=int, default=1000)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--cache", default=".cache/sweeps")
    ap.add_argument("--csv", action="store_true", help="print CSV instead of markdown")
    a = ap.parse_args()

    param = SweepParam(a.param)
    if a.values:
        values = tuple(parse_value(param, v) for v in a.values.split(","))
    elif param is SweepParam.COMPONENTS:
        values = COMPONENTS
    else:
        ap.error(f"--values is required for {a.param}")
    spec = SweepSpec(param, values, tuple(int(s) for s in a.seeds.split(",")), a.epochs, a.n_train, a.n_test)
    table = run_sweep(spec, cache_dir=a.cache, log=lambda m: print(m, file=sys.stderr, flush=True))
    print(render(table, Format.CSV if a.csv else Format.MARKDOWN))
    return 0


if __name__ == "__main__":
    sys.exit(main())
