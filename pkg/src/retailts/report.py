"""JSON / CSV serialization of run results and saved models."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any

import numpy as np

from .copulas import JointModel
from .ensemble import BlendModel, StackModel
from .errors import InputError
from .forecasters import ArimaModel, GbtModel, LassoModel
from .vine import CVineSpec

MODEL_FORMAT_VERSION = 1

CSV_HEADER_COMMENT = (
    "# retailts report; rows under 'columns' are emitted as-is, "
    "otherwise nested keys are joined with '.' and list items indexed as key.N"
)


def _plain(obj: Any) -> Any:
    """numpy scalars/arrays to builtins; non-finite floats to strings so JSON stays strict."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return obj


def flatten(results: dict, prefix: str = "") -> list[tuple[str, Any]]:
    rows = []
    for k in sorted(results):
        v = results[k]
        key = f"{prefix}.{k}" if prefix else str(k)
        if isinstance(v, dict):
            rows += flatten(v, key)
        elif isinstance(v, (list, tuple)):
            for i, item in enumerate(v):
                if isinstance(item, dict):
                    rows += flatten(item, f"{key}.{i}")
                else:
                    rows.append((f"{key}.{i}", item))
        else:
            rows.append((key, v))
    return rows


def emit_report(results: dict, fmt: str = "json") -> bytes:
    """Serialize run results with sorted keys.

    CSV: when ``results`` has ``columns`` and ``rows`` those form the table;
    otherwise the nested structure is flattened to ``key,value`` lines.
    """
    results = _plain(results)
    if fmt == "json":
        return (json.dumps(results, sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(CSV_HEADER_COMMENT + "\n")
        w = csv.writer(buf, lineterminator="\n")
        if "columns" in results and "rows" in results:
            w.writerow(results["columns"])
            for row in results["rows"]:
                w.writerow([_cell(v) for v in row])
        else:
            w.writerow(["key", "value"])
            for k, v in flatten(results):
                w.writerow([k, _cell(v)])
        return buf.getvalue().encode("utf-8")
    raise InputError(f"unknown report format {fmt!r}")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def parse_report(data: bytes, fmt: str = "json"):
    text = data.decode("utf-8")
    if fmt == "json":
        return json.loads(text)
    if fmt == "csv":
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        rows = list(csv.reader(lines))
        return {"columns": rows[0], "rows": rows[1:]}
    raise InputError(f"unknown report format {fmt!r}")


def model_document(model) -> dict:
    return {"format": "retailts-model", "version": MODEL_FORMAT_VERSION, "model": _plain(model.to_dict())}


_LOADERS = {
    "arima": ArimaModel.from_dict,
    "lasso": LassoModel.from_dict,
    "gbt": GbtModel.from_dict,
    "blend": BlendModel.from_dict,
    "stack": StackModel.from_dict,
}


def load_model(doc: dict):
    if doc.get("format") != "retailts-model":
        raise InputError("not a retailts model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise InputError(f"unsupported model document version {doc.get('version')}")
    body = doc["model"]
    if body.get("type") == "cvine":
        return CVineSpec.from_dict(body)
    if "copula" in body:
        return JointModel.from_dict(body)
    kind = body.get("kind")
    if kind not in _LOADERS:
        raise InputError(f"unknown model kind {kind!r}")
    return _LOADERS[kind](body)
