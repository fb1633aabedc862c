"""Parameter files (JSON) and sample files (CSV).

Floats are written with ``repr`` precision, so a save/load cycle is exact.
Malformed content raises :class:`FormatError`; filesystem problems surface
as ``OSError``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from binfam.core import WeightedSample
from binfam.expquad import ExpQuParams
from binfam.gausscopula import GauCParams
from binfam.linquad import LinQuParams
from binfam.logcond import LogCoParams
from binfam.poisson import PoiParams
from binfam.product import ProductParams

SCHEMA_VERSION = "1"
FAMILIES = ("product", "linquad", "expquad", "logcond", "gaussian_copula", "poisson")

_COMMON = {"version", "family", "d", "report"}
_PAYLOAD = {
    "product": ({"mean"}, set()),
    "linquad": ({"A", "a0"}, set()),
    "expquad": ({"A"}, {"order"}),
    "logcond": ({"B", "independent", "predictors"}, {"order"}),
    "gaussian_copula": ({"mu", "sigma"}, {"repair_shift", "association"}),
    "poisson": ({"sets", "lambda"}, set()),
}


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class ParamFile:
    params: Any
    report: dict
    order: Optional[np.ndarray] = None  # chain order for expquad proxies

    @property
    def family(self) -> str:
        return self.params.family

    @property
    def d(self) -> int:
        return self.params.d


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def to_document(pf: ParamFile) -> dict:
    p = pf.params
    doc: dict[str, Any] = {"version": SCHEMA_VERSION, "family": p.family, "d": p.d}
    if p.family == "product":
        doc["mean"] = _floats(p.mean)
    elif p.family == "linquad":
        doc["A"] = _floats(p.A)
        doc["a0"] = float(p.a0)
    elif p.family == "expquad":
        doc["A"] = _floats(p.A)
        if pf.order is not None:
            doc["order"] = [int(i) for i in pf.order]
    elif p.family == "logcond":
        rows, cols = np.nonzero(p.B)
        doc["B"] = [[int(i), int(j), float(p.B[i, j])] for i, j in zip(rows, cols)]
        doc["independent"] = sorted(p.independent)
        doc["predictors"] = {str(i): list(L) for i, L in sorted(p.predictors.items())}
        doc["order"] = [int(i) for i in p.order]
    elif p.family == "gaussian_copula":
        doc["mu"] = _floats(p.mu)
        doc["sigma"] = _floats(p.Sigma)
        doc["repair_shift"] = float(p.repair_shift)
        doc["association"] = [list(a) for a in sorted(p.association)]
    elif p.family == "poisson":
        doc["sets"] = [list(S) for S in p.sets]
        doc["lambda"] = _floats(p.lam)
    else:
        raise FormatError(f"unknown family {p.family!r}")
    doc["report"] = pf.report
    return doc


def dumps(pf: ParamFile) -> str:
    try:
        return json.dumps(to_document(pf), indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise FormatError(f"cannot serialise parameters: {exc}") from exc


def save(pf: ParamFile, path) -> None:
    Path(path).write_text(dumps(pf), encoding="utf-8", newline="\n")


def _matrix(v, d, name):
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (d, d):
        raise FormatError(f"{name} must be a {d}x{d} matrix")
    return a


def _vector(v, d, name):
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (d,):
        raise FormatError(f"{name} must have length {d}")
    return a


def _reject_constant(name):
    raise FormatError(f"non-finite number {name} in parameter file")


def from_document(doc: dict) -> ParamFile:
    if not isinstance(doc, dict):
        raise FormatError("parameter file must hold a JSON object")
    if doc.get("version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported version {doc.get('version')!r}; expected {SCHEMA_VERSION!r}")
    fam = doc.get("family")
    if fam not in _PAYLOAD:
        raise FormatError(f"unknown family {fam!r}")
    required, optional = _PAYLOAD[fam]
    keys = set(doc)
    missing = (required | {"d"}) - keys
    if missing:
        raise FormatError(f"missing fields: {sorted(missing)}")
    extra = keys - required - optional - _COMMON
    if extra:
        raise FormatError(f"unknown fields: {sorted(extra)}")
    d = doc["d"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise FormatError("d must be a positive integer")
    report = doc.get("report", {})
    if not isinstance(report, dict):
        raise FormatError("report must be an object")
    order = None
    try:
        if fam == "product":
            params = ProductParams(_vector(doc["mean"], d, "mean"))
        elif fam == "linquad":
            params = LinQuParams(_matrix(doc["A"], d, "A"), float(doc["a0"]))
        elif fam == "expquad":
            params = ExpQuParams(_matrix(doc["A"], d, "A"))
            if "order" in doc:
                order = np.asarray(doc["order"], dtype=np.int64)
                if sorted(order.tolist()) != list(range(d)):
                    raise FormatError("order must be a permutation of 0..d-1")
        elif fam == "logcond":
            B = np.zeros((d, d))
            for entry in doc["B"]:
                i, j, v = entry
                if not (isinstance(i, int) and isinstance(j, int) and 0 <= j <= i < d):
                    raise FormatError(f"bad B triplet {entry}")
                B[i, j] = float(v)
            preds = {int(k): tuple(v) for k, v in doc["predictors"].items()}
            params = LogCoParams(B, frozenset(doc["independent"]), preds, doc.get("order"))
        elif fam == "gaussian_copula":
            params = GauCParams(
                _vector(doc["mu"], d, "mu"),
                _matrix(doc["sigma"], d, "sigma"),
                frozenset(tuple(a) for a in doc.get("association", [])),
                float(doc.get("repair_shift", 0.0)),
            )
        else:
            sets = doc["sets"]
            if len(sets) != d:
                raise FormatError(f"sets must have {d} entries")
            params = PoiParams(tuple(tuple(s) for s in sets), np.asarray(doc["lambda"], dtype=np.float64))
    except FormatError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise FormatError(f"invalid {fam} parameters: {exc}") from exc
    if params.d != d:
        raise FormatError(f"payload dimension {params.d} does not match d={d}")
    return ParamFile(params, report, order)


def loads(text: str) -> ParamFile:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON: {exc}") from exc
    return from_document(doc)


def load(path) -> ParamFile:
    return loads(Path(path).read_text(encoding="utf-8"))


# --- CSV --------------------------------------------------------------------


@dataclass(frozen=True)
class SampleFile:
    sample: WeightedSample
    logpi: Optional[np.ndarray]
    columns: tuple


def _is_binary_cell(c: str) -> bool:
    return c.strip() in ("0", "1")


def parse_samples(text: str) -> SampleFile:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError("sample file is empty")
    header = None
    if not all(_is_binary_cell(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise FormatError("sample file has a header but no rows")
        if len(set(header)) != len(header):
            raise FormatError("duplicate column names")
    width = len(header) if header else len(rows[0])
    for k, r in enumerate(rows):
        if len(r) != width:
            raise FormatError(f"row {k + 1} has {len(r)} cells, expected {width}")
    if header is None:
        names = [f"x{i + 1}" for i in range(width)]
    else:
        names = header
    special = {"weight", "logpi"}
    data_cols = [i for i, nm in enumerate(names) if nm not in special]
    if not data_cols:
        raise FormatError("no binary columns")
    X = np.empty((len(rows), len(data_cols)), dtype=np.uint8)
    for k, r in enumerate(rows):
        for c, i in enumerate(data_cols):
            cell = r[i].strip()
            if cell not in ("0", "1"):
                raise FormatError(f"row {k + 1}, column {names[i]!r}: {cell!r} is not 0 or 1")
            X[k, c] = cell == "1"

    def numeric(name):
        if name not in names:
            return None
        i = names.index(name)
        try:
            v = np.array([float(r[i]) for r in rows])
        except ValueError as exc:
            raise FormatError(f"column {name!r}: {exc}") from exc
        if not np.isfinite(v).all():
            raise FormatError(f"column {name!r} has non-finite values")
        return v

    w = numeric("weight")
    logpi = numeric("logpi")
    try:
        sample = WeightedSample(X, w)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return SampleFile(sample, logpi, tuple(names[i] for i in data_cols))


def read_samples(path) -> SampleFile:
    return parse_samples(Path(path).read_text(encoding="utf-8"))


def format_rows(rows, extra: Optional[dict] = None, names=None) -> str:
    """CSV text with a header; ``extra`` maps column names to float arrays."""
    rows = np.asarray(rows)
    d = rows.shape[1]
    names = list(names) if names is not None else [f"x{i + 1}" for i in range(d)]
    extra = extra or {}
    out = io.StringIO()
    out.write(",".join(names + list(extra)) + "\n")
    cols = [np.asarray(v, dtype=np.float64) for v in extra.values()]
    for k in range(rows.shape[0]):
        cells = ["1" if v else "0" for v in rows[k]]
        cells += [_fmt(c[k]) for c in cols]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return repr(float(x))


def format_values(name: str, values) -> str:
    return name + "\n" + "".join(_fmt(v) + "\n" for v in np.asarray(values, dtype=np.float64))
