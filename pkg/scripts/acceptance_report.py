"""Run the acceptance criteria and save their one-line verdicts.

    python3 scripts/acceptance_report.py [--out acceptance.txt]

The exit status is 1 when any criterion fails.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import sys
from pathlib import Path

TESTS = Path(__file__).resolve().parent.parent / "tests"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="acceptance.txt")
    args = ap.parse_args()
    sys.path.insert(0, str(TESTS))
    import test_acceptance as acc

    failed = 0
    for name in sorted(n for n in vars(acc) if n.startswith("test_criterion_")):
        buf = io.StringIO()
        try:
            with contextlib.redirect_stdout(buf):
                getattr(acc, name)()
        except AssertionError:
            failed += 1
        sys.stdout.write(buf.getvalue())
        sys.stdout.flush()
    Path(args.out).write_text("\n".join(acc.ACCEPTANCE_LINES) + "\n")
    print(f"{len(acc.ACCEPTANCE_LINES) - failed} passed, {failed} failed; lines saved to {args.out}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
