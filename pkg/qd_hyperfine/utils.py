import hashlib
import json
import logging
import sys

import numpy as np

logger = logging.getLogger("qd_hyperfine")


class QdHyperfineException(Exception):
    pass


class StageAdapter(logging.LoggerAdapter):
    """Prefix every record with the pipeline stage name.
    """
    def process(self, msg, kwargs):
        return "[{}] {}".format(self.extra["stage"], msg), kwargs


def stage_logger(stage):
    return StageAdapter(logger, {"stage": stage})


def configure_logging(verbosity=0):
    level = {-1: logging.WARNING, 0: logging.INFO}.get(verbosity, logging.DEBUG)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(
        "%(asctime)s %(levelname)-7s %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(level)
    logger.propagate = False


def _new_key(entry, key):
    new_key = entry
    for sub_key in key.split('__'):
        if isinstance(new_key, dict):
            new_key = new_key[sub_key]
        else:
            new_key = getattr(new_key, sub_key)
    return new_key


def index_by(iterable, key):
    """Return a dictionary from the given iterable.

    `key' may be nested like that: 'isotopes__0' or point to an attribute of
    an attrs record.
    >>> l = [{"name": "In", "spin": 4.5}, {"name": "Ga", "spin": 1.5}]
    >>> index_by(l, "name")
    {'In': {'name': 'In', 'spin': 4.5}, 'Ga': {'name': 'Ga', 'spin': 1.5}}
    """
    indexed = {}
    for entry in iterable:
        indexed[_new_key(entry, key)] = entry
    return indexed


def dumps(c):
    return json.dumps(c, indent=4, sort_keys=True, ensure_ascii=False)


def to_jsonable(obj):
    """Convert numpy scalars/arrays and tuples into plain JSON values.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def hash_obj(obj):
    """Stable sha256 of a JSON-serializable object.
    """
    payload = json.dumps(to_jsonable(obj), sort_keys=True,
                         separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def hash_file(path):
    h = hashlib.sha256()
    with open(str(path), 'rb') as fin:
        for chunk in iter(lambda: fin.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def hash_arrays(*arrays):
    h = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def fixed_order_sum(values, axis=0):
    """Pairwise summation along `axis' in a fixed order.

    numpy's reductions already use pairwise summation on contiguous data;
    forcing a contiguous copy keeps the result independent of how the input
    was sliced.
    """
    return np.ascontiguousarray(values).sum(axis=axis)
