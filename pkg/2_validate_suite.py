import os
import sys
import argparse
import logging

from file_utils import write_report_json
from my_config import MY_CONFIG
from oracle_utils import RgoSamplerError
from validate_utils import SUITES, validate

logging.basicConfig(level=MY_CONFIG.LOG_LEVEL)

def main():
    parser = argparse.ArgumentParser(description="Run an acceptance suite and write its report.")
    parser.add_argument("--suite", type=str, choices=sorted(SUITES) + ["all"], help="Suite to run", required=True)
    parser.add_argument("--seed", type=int, help="Base seed", default=MY_CONFIG.DEFAULT_SEED)
    parser.add_argument("--scale", type=float, help="Multiplier on draw/chain counts", default=1.0)
    parser.add_argument("--timing", action="store_true", help="Include wall time in the report JSON")

    args = parser.parse_args()

    print(f"⚙️  Running suite '{args.suite}' with seed {args.seed}, scale {args.scale}")
    try:
        report = validate(args.suite, seed=args.seed, scale=args.scale)
    except RgoSamplerError as e:
        print(e)
        sys.exit(2)

    report_file = os.path.join(MY_CONFIG.REPORTS_DIR, f"validate_{args.suite}_{args.seed}.json")
    write_report_json(report.to_dict(include_timing=args.timing), report_file)

    failed = [t.name for t in report.tests if not t.passed]
    retried = [t.name for t in report.tests if t.retried]
    if retried:
        print(f"⚙️  Retried with a new seed: {', '.join(retried)}")
    if failed:
        print(f"❌ {len(failed)} of {len(report.tests)} checks failed: {', '.join(failed)}")
        sys.exit(1)
    print(f"✅ All {len(report.tests)} checks passed")

if __name__ == "__main__":
    main()
