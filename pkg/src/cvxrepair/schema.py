"""Problem files and reports.

Problem files are JSON objects with a ``kind`` field:

``simproj``
    ``sets`` (list of set entries), optional ``alpha``, ``p``, ``x0``.
``convex-system``
    ``constraints``: list of ``{"function": {...}, "b": float, "witness": [...]}``
    with functions from the catalog; optional ``p`` and ``bounds``
    (``u``, ``l``, ``C``; ``u`` may be the string ``"estimate"``).
``linear-system``
    ``A`` (m x n) and ``b``.

A batch file is ``{"problems": [...]}`` or a bare list. Reports are JSON
with every float written in ``%.16e`` form, so values survive a round trip
and identical runs give identical bytes.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .convexsets import set_from_dict
from .errors import InvalidInputError
from .functions import function_from_dict

SCHEMA = "cvxrepair-report"
SCHEMA_VERSION = 1
KINDS = ("simproj", "convex-system", "linear-system")


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from None


def split_batch(doc) -> tuple[list, bool]:
    """Return ``(problems, is_batch)``."""
    if isinstance(doc, list):
        return doc, True
    if isinstance(doc, dict) and "problems" in doc:
        if not isinstance(doc["problems"], list):
            raise InvalidInputError("'problems' must be a list")
        return doc["problems"], True
    return [doc], False


def check_problem(d) -> str:
    if not isinstance(d, dict):
        raise InvalidInputError(f"problem entry must be an object, got {type(d).__name__}")
    kind = d.get("kind")
    if kind not in KINDS:
        raise InvalidInputError(f"problem kind must be one of {KINDS}, got {kind!r}")
    return kind


def parse_simproj(d, p=None, alpha=None):
    from .simproj import SimProjProblem

    sets = d.get("sets")
    if not isinstance(sets, list) or len(sets) < 2:
        raise InvalidInputError("simproj problem needs a list of at least two sets")
    sets = [set_from_dict(s) for s in sets]
    p = d.get("p", 2.0) if p is None else p
    alpha = d.get("alpha") if alpha is None else alpha
    return SimProjProblem.build(sets, alpha, p)


def parse_convex_system(d, p=None):
    from .cvxfeas import ConvexSystem

    cons = d.get("constraints")
    if not isinstance(cons, list) or not cons:
        raise InvalidInputError("convex-system problem needs a nonempty 'constraints' list")
    funcs, rhs, wit = [], [], []
    for i, c in enumerate(cons):
        if not isinstance(c, dict) or "function" not in c or "b" not in c:
            raise InvalidInputError(f"constraint {i} needs 'function' and 'b'")
        funcs.append(function_from_dict(c["function"]))
        rhs.append(c["b"])
        wit.append(c.get("witness"))
    p = d.get("p", 2.0) if p is None else p
    return ConvexSystem(tuple(funcs), rhs, p, tuple(wit))


def parse_linear(d):
    from .linexact import LinearSystem

    return LinearSystem.from_dict(d)


def _float(x):
    x = float(x)
    if math.isfinite(x):
        return f"{x:.16e}"
    # JSON has no infinities; keep them readable
    return json.dumps("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def dumps(obj, indent=0) -> str:
    """JSON with floats at 17 significant digits and sorted keys."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
               for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def envelope(command, body) -> dict:
    return {"schema": SCHEMA, "version": SCHEMA_VERSION, "command": command, **body}


def check_report(doc) -> None:
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise InvalidInputError("not a cvxrepair report")
    if doc.get("version") != SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported report version {doc.get('version')!r}")
