import os
import sys
import argparse
import logging

from my_config import MY_CONFIG
from oracle_utils import RgoSamplerError
from validate_utils import bench

logging.basicConfig(level=MY_CONFIG.LOG_LEVEL)

def main():
    parser = argparse.ArgumentParser(description="Sweep one parameter and report query tallies with log-log slopes.")
    parser.add_argument("--sweep", type=str, choices=["kappa", "dim", "eps"], help="Parameter to sweep", required=True)
    parser.add_argument("--seed", type=int, help="Seed", default=MY_CONFIG.DEFAULT_SEED)

    args = parser.parse_args()

    print(f"⚙️  Sweeping {args.sweep} with seed {args.seed}")
    try:
        df = bench(args.sweep, seed=args.seed)
    except RgoSamplerError as e:
        print(f"❌ sweep failed: {e}")
        sys.exit(1)

    print(df.to_string(index=False))
    for column, slope in df.attrs["slopes"].items():
        print(f"   log-log slope of {column}: {slope:.3f}")

    os.makedirs(MY_CONFIG.REPORTS_DIR, exist_ok=True)
    out_file = os.path.join(MY_CONFIG.REPORTS_DIR, f"bench_{args.sweep}.csv")
    df.to_csv(out_file, index=False)
    print(f"✅ Saved sweep table to '{out_file}'")

if __name__ == "__main__":
    main()
