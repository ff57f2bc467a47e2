"""Run CLI commands over built-in scenarios and bundle each run into report.json.

    python3 scripts/run_builtins.py                       # 1D built-ins, all commands
    python3 scripts/run_builtins.py --scenarios pendulum --commands critical barrier
"""

import argparse
import sys
import time
from pathlib import Path

from weakkam.cli import COMMANDS, export_report, run_scenario
from weakkam.scenarios import builtin

ONE_D = ["pendulum", "double-well", "app1-cubic", "app2-paper"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenarios", nargs="+", default=ONE_D)
    ap.add_argument("--commands", nargs="+", default=[c for c in COMMANDS if c != "example42"])
    ap.add_argument("--out", default="runs")
    args = ap.parse_args(argv)

    table = []
    for key in args.scenarios:
        sc = builtin(key)
        for cmd in args.commands:
            t0 = time.perf_counter()
            try:
                code = run_scenario(sc, cmd, Path(args.out))
            except Exception as exc:  # keep going; one failure should not hide the rest
                print(f"{key} {cmd}: error: {exc}", file=sys.stderr)
                code = 1
            table.append((key, cmd, code, time.perf_counter() - t0))
        export_report(Path(args.out) / sc.name)

    print()
    print(f"{'scenario':<14}{'command':<11}{'exit':>5}{'seconds':>10}")
    for key, cmd, code, dt in table:
        print(f"{key:<14}{cmd:<11}{code:>5}{dt:>10.1f}")
    return max(code for *_, code, _ in table) if table else 0


if __name__ == "__main__":
    sys.exit(main())
