"""Samples file: CSV with an embedded JSON schema line.

Layout::

    #bentcable-samples {"format": 1, "names": [...], "layout": [...], ...}
    chain,iter,deviance,<param names...>
    0,0,123.4,...

Floats are written with ``repr`` so reading back reproduces every draw
bit for bit, and the file content depends only on the draws and metadata.
"""

import csv
import json
import math

import numpy as np

from .exceptions import IngestionError
from .sampler import PosteriorSamples

__all__ = ["write_samples", "read_samples", "SCHEMA_PREFIX", "FORMAT_VERSION"]

SCHEMA_PREFIX = "#bentcable-samples "
FORMAT_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def write_samples(path, samples):
    """Write pooled draws and deviance traces.

    Parameters
    ----------
    path : str
    samples : PosteriorSamples
    """
    schema = {
        "format": FORMAT_VERSION,
        "names": list(samples.names),
        "layout": [[n, s] for n, s in samples.layout],
        "n_chains": samples.n_chains,
        "n_kept": samples.n_kept,
        "meta": _jsonable(samples.meta),
        "acceptance": _jsonable(samples.acceptance),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SCHEMA_PREFIX + json.dumps(schema, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iter", "deviance"] + list(samples.names))
        for c in range(samples.n_chains):
            for i in range(samples.n_kept):
                w.writerow([c, i, repr(float(samples.deviance[c, i]))]
                           + [repr(float(v)) for v in samples.draws[c, i]])


def read_samples(path):
    """Inverse of :func:`write_samples`; any inconsistency is an IngestionError."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            first = fh.readline()
            if not first.startswith(SCHEMA_PREFIX):
                raise IngestionError(f"{path}:1: missing samples schema line")
            try:
                schema = json.loads(first[len(SCHEMA_PREFIX):])
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:1: bad schema JSON ({exc.msg})") from None
            if schema.get("format") != FORMAT_VERSION:
                raise IngestionError(f"{path}:1: unsupported format {schema.get('format')!r}")
            names = schema["names"]
            C, N = int(schema["n_chains"]), int(schema["n_kept"])
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["chain", "iter", "deviance"] + names:
                raise IngestionError(f"{path}:2: column header does not match schema")
            draws = np.empty((C, N, len(names)))
            dev = np.empty((C, N))
            count = 0
            for lineno, row in enumerate(reader, 3):
                if len(row) != len(names) + 3:
                    raise IngestionError(f"{path}:{lineno}: expected {len(names) + 3} fields")
                try:
                    c, i = int(row[0]), int(row[1])
                    vals = [float(v) for v in row[2:]]
                except ValueError:
                    raise IngestionError(f"{path}:{lineno}: non-numeric field") from None
                if not (0 <= c < C and 0 <= i < N) or (c, i) != divmod(count, N):
                    raise IngestionError(f"{path}:{lineno}: unexpected draw index ({c}, {i})")
                dev[c, i] = vals[0]
                draws[c, i] = vals[1:]
                count += 1
            if count != C * N:
                raise IngestionError(f"{path}: expected {C * N} draws, found {count}")
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror}") from None
    except (KeyError, TypeError) as exc:
        raise IngestionError(f"{path}:1: incomplete schema ({exc})") from None
    layout = [(n, s) for n, s in schema["layout"]]
    return PosteriorSamples(names=names, layout=layout, draws=draws, deviance=dev,
                            meta=schema.get("meta", {}), acceptance=schema.get("acceptance", []))
