import os
import glob
import json
from typing import Any, Dict

import numpy as np
import pandas as pd
from humanfriendly import format_size

from oracle_utils import DomainError


## Writes samples as CSV, one row per sample and columns x0..x{d-1}
def write_samples_csv (samples, csv_file):
    """
    Saves samples to a CSV file.

    Floats are written with Python's shortest round-trip repr, so reading the file
    back with read_samples_csv gives the same doubles.

    Args:
        samples: array of shape (n, d), or (n,) for 1D
        csv_file (str): output path; its directory is created if needed

    Returns:
        the number of bytes written
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    columns = [f"x{j}" for j in range(samples.shape[1])]
    os.makedirs(os.path.dirname(csv_file) or ".", exist_ok=True)
    pd.DataFrame(samples, columns=columns).to_csv(csv_file, index=False, lineterminator="\n")
    size = os.path.getsize(csv_file)
    print(f"✅ Saved {samples.shape[0]} samples to '{csv_file}' ({format_size(size)})")
    return size


def read_samples_csv (csv_file) -> np.ndarray:
    if not os.path.exists(csv_file):
        raise DomainError(f"❌ sample file '{csv_file}' does not exist")
    df = pd.read_csv(csv_file, float_precision="round_trip")
    return df.to_numpy(dtype=float)


def write_report_json (report: Dict[str, Any], json_file):
    os.makedirs(os.path.dirname(json_file) or ".", exist_ok=True)
    with open(json_file, "w") as f:
        f.write(json.dumps(report, indent=2, sort_keys=True))
        f.write("\n")
    size = os.path.getsize(json_file)
    print(f"✅ Saved report to '{json_file}' ({format_size(size)})")
    return size


def read_report_json (json_file) -> Dict[str, Any]:
    with open(json_file) as f:
        return json.load(f)


## Reads every samples CSV in a folder into one array, files in name order
def read_sample_files (sample_dir) -> np.ndarray:
    csv_files = sorted(glob.glob(f'{sample_dir}/*.csv'))
    if not csv_files:
        raise DomainError(f"❌ no CSV files in '{sample_dir}'")
    return np.concatenate([read_samples_csv(f) for f in csv_files], axis=0)
## --- end: read_sample_files ------
