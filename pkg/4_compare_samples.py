import sys
import argparse
import json
import logging

from my_config import MY_CONFIG
from oracle_utils import RgoSamplerError
from validate_utils import two_sample_test

logging.basicConfig(level=MY_CONFIG.LOG_LEVEL)

def main():
    parser = argparse.ArgumentParser(description="Two-sample test between two sample CSV files.")
    parser.add_argument("a", type=str, help="First samples CSV")
    parser.add_argument("b", type=str, help="Second samples CSV")
    parser.add_argument("--alpha", type=float, help="Rejection level", default=MY_CONFIG.ALPHA)

    args = parser.parse_args()

    print(f"⚙️  Comparing '{args.a}' and '{args.b}'")
    try:
        result = two_sample_test(args.a, args.b)
    except RgoSamplerError as e:
        print(e)
        sys.exit(2)

    print(json.dumps(result.to_dict(), indent=2))
    if result.p_value <= args.alpha:
        print(f"❌ Samples differ: p = {result.p_value:.3g} <= {args.alpha}")
        sys.exit(1)
    print(f"✅ No detectable difference: p = {result.p_value:.3g}")

if __name__ == "__main__":
    main()
