import os
import sys
import argparse
import logging

from my_config import MY_CONFIG
from oracle_utils import RgoSamplerError
from validate_utils import RunConfig, run

logging.basicConfig(level=MY_CONFIG.LOG_LEVEL)

def main():
    parser = argparse.ArgumentParser(description="Run one sampler on one model problem and write samples + report.")
    parser.add_argument("--config", type=str, help="Path to a run config JSON", required=True)
    parser.add_argument("--workers", type=int, help="Worker threads for the chains", default=MY_CONFIG.NUM_WORKERS)
    parser.add_argument("--timing", action="store_true", help="Include wall time in the report JSON")

    args = parser.parse_args()

    try:
        config = RunConfig.from_json(args.config)
    except RgoSamplerError as e:
        print(e)
        sys.exit(2)
    except (OSError, ValueError) as e:
        print(f"❌ cannot read config '{args.config}': {e}")
        sys.exit(2)

    name = os.path.splitext(os.path.basename(args.config))[0]
    if config.samples_path is None:
        config.samples_path = os.path.join(MY_CONFIG.SAMPLES_DIR, f"{name}.csv")
    if config.report_path is None:
        config.report_path = os.path.join(MY_CONFIG.REPORTS_DIR, f"{name}.json")

    try:
        report = run(config, workers=args.workers, include_timing=args.timing)
    except RgoSamplerError as e:
        print(f"❌ run failed: {e}")
        sys.exit(1)

    for key, value in report.rates().items():
        print(f"   {key}: {value:.4g}")
    for test in report.tests:
        print(f"{'✅' if test.passed else '❌'} {test.name}")
    print(f"✅ Done. Samples in '{config.samples_path}', report in '{config.report_path}'")

if __name__ == "__main__":
    main()
