"""On-disk layout for fitted models.

A fit directory holds `manifest.json` (dims, config, seed and the array
name -> shape table), one `<name>.bin` of row-major float64 per array, and
`elbo.csv` with the recorded (step, value) trace.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

MANIFEST_FILE = "manifest.json"
ELBO_FILE = "elbo.csv"
FORMAT_TAG = "textideal-fit-v1"


def save_fit_dir(outdir, arrays, manifest=None, elbo_trace=None):
    """Write arrays plus manifest/trace; `manifest` supplies extra fields."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = dict(manifest or {})
    doc["format"] = FORMAT_TAG
    doc["arrays"] = {name: list(arr.shape) for name, arr in arrays.items()}
    for name, arr in arrays.items():
        np.ascontiguousarray(arr, dtype=np.float64).tofile(outdir / f"{name}.bin")
    with open(outdir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if elbo_trace is not None:
        with open(outdir / ELBO_FILE, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "elbo"])
            for step, value in elbo_trace:
                writer.writerow([step, repr(float(value))])


def load_fit_dir(indir):
    """Return (arrays, manifest, elbo_trace) from a fit directory."""
    indir = Path(indir)
    with open(indir / MANIFEST_FILE, encoding="utf-8") as fh:
        manifest = json.load(fh)
    arrays = {}
    for name, shape in manifest.get("arrays", {}).items():
        data = np.fromfile(indir / f"{name}.bin", dtype=np.float64)
        arrays[name] = data.reshape(shape)
    trace = []
    elbo_path = indir / ELBO_FILE
    if elbo_path.exists():
        with open(elbo_path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0] == "step":
                    continue
                trace.append((int(row[0]), float(row[1])))
    return arrays, manifest, trace
