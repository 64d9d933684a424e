"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python3 scripts/acceptance_summary.py [--fast]

``--fast`` skips the tests marked slow.
"""
import argparse
import re
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--fast", action="store_true", help="skip slow criteria")
    args = p.parse_args(argv)
    cmd = [sys.executable, "-m", "pytest", "tests/test_acceptance.py", "-s", "-q", "-p", "no:cacheprovider"]
    if args.fast:
        cmd += ["-m", "not slow"]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    lines = sorted((m.group(0) for m in re.finditer(r"^C\d+ (PASS|FAIL): .*$", proc.stdout, re.M)),
                   key=lambda s: int(s.split()[0][1:]))
    print("\n".join(lines))
    print(proc.stdout.strip().splitlines()[-1])
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
