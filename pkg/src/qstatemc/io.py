"""JSONL sample files and CSV tables.

A sample file starts with one header record (``{"header": {...}}``) holding
the run configuration and sampler metadata, followed by one record per point:
``{"p": [...], "w": weight, "logL": log-likelihood or null}``.  Markov chain
output adds ``"chain"`` so that errors can account for autocorrelation.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .densities import Dataset, log_likelihood
from .samplers.weighted import WeightedSample


def _clean(obj):
    """Make numpy scalars and non-finite floats JSON friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_sample(path, sample: WeightedSample, header: dict, data: Dataset | None = None):
    with_chain = sample.meta.get("method") == "mcmc" and sample.chain is not None
    log_l = log_likelihood(sample.points, data) if data is not None else None
    head = dict(header)
    head["meta"] = _clean(sample.meta)
    head["count"] = len(sample)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": _clean(head)}, sort_keys=True) + "\n")
        for j in range(len(sample)):
            rec = {
                "p": sample.points[j].tolist(),
                "w": float(sample.weights[j]),
                "logL": None if log_l is None else _clean(float(log_l[j])),
            }
            if with_chain:
                rec["chain"] = int(sample.chain[j])
            fh.write(json.dumps(rec) + "\n")


def read_sample(path) -> tuple[WeightedSample, dict]:
    """Return the sample and its header."""
    header = None
    points, weights, chains = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
                continue
            points.append(rec["p"])
            weights.append(rec.get("w", 1.0))
            chains.append(rec.get("chain", 0))
    if header is None:
        raise ValueError(f"{path}: missing header record")
    if len(points) != header.get("count", len(points)):
        raise ValueError(f"{path}: header declares {header['count']} points, found {len(points)}")
    meta = dict(header.get("meta", {}))
    sample = WeightedSample(np.array(points, dtype=float), np.array(weights), np.array(chains), meta)
    return sample, header


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["NA" if v is None or (isinstance(v, float) and math.isnan(v)) else
                             (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for v in row])
