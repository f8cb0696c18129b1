"""JSON and CSV formats for jets, models and numeric tables."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .envelope import ExtensionConfig, ExtensionModel
from .jet import JetDataset, JetError, Tolerances, compute_slack, load_dataset
from .modulus import ModulusModel

JET_VERSION = 1
MODEL_VERSION = 1
MODEL_FORMAT = "jetconvex-model"


class FormatError(ValueError):
    pass


def fmt(v: float) -> str:
    """17 significant digits, '.' separator, empty for NaN."""
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def _check_finite(obj, where):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise FormatError("non-finite number in %s" % where)
    if isinstance(obj, list):
        for v in obj:
            _check_finite(v, where)


def jet_to_doc(ds: JetDataset) -> dict:
    return {
        "version": JET_VERSION,
        "dim": ds.dim,
        "points": [{"x": list(p.x), "f": p.f, "g": list(p.g)} for p in ds.points],
    }


def jet_from_doc(doc) -> JetDataset:
    if not isinstance(doc, dict):
        raise FormatError("jet file must be a JSON object")
    if doc.get("version") != JET_VERSION:
        raise FormatError("unsupported or missing jet file version: %r" % doc.get("version"))
    try:
        dim = int(doc["dim"])
        points = doc["points"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("malformed jet file: %s" % exc) from None
    if not isinstance(points, list):
        raise FormatError("'points' must be a list")
    for p in points:
        if not isinstance(p, dict) or not {"x", "f", "g"} <= set(p):
            raise FormatError("each point needs 'x', 'f' and 'g'")
        if not isinstance(p["x"], list) or not isinstance(p["g"], list):
            raise FormatError("'x' and 'g' must be arrays")
    return load_dataset(points, dim)


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh, parse_constant=lambda c: float(c))
    except json.JSONDecodeError as exc:
        raise FormatError("%s: invalid JSON (%s)" % (path, exc)) from None


def write_json(path, doc):
    text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def load_jet(path) -> JetDataset:
    return jet_from_doc(read_json(path))


def save_jet(path, ds: JetDataset):
    write_json(path, jet_to_doc(ds))


def model_to_doc(model: ExtensionModel, tol: Tolerances) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dataset": jet_to_doc(model.dataset),
        "tolerances": {"eps_c": tol.eps_c, "eps_p": tol.eps_p, "eps_g": tol.eps_g},
        "modulus": model.modulus.to_dict(),
        "candidates": model.candidates.tolist(),
        "g_values": model.g_values.tolist(),
        "box": model.box.tolist(),
        "box_covered": model.box_covered,
        "config": model.config.to_dict(),
    }


def model_from_doc(doc) -> tuple[ExtensionModel, Tolerances]:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError("unsupported model file version: %r" % doc.get("version"))
    try:
        ds = jet_from_doc(doc["dataset"])
        tol = Tolerances(**doc["tolerances"])
        mod = ModulusModel.from_dict(doc["modulus"])
        cands = np.array(doc["candidates"], dtype=float).reshape(-1, ds.dim)
        gv = np.array(doc["g_values"], dtype=float)
        box = np.array(doc["box"], dtype=float).reshape(ds.dim, 2)
        cfg = ExtensionConfig.from_dict(doc["config"])
        covered = bool(doc["box_covered"])
    except (KeyError, TypeError, ValueError, JetError) as exc:
        raise FormatError("malformed model file: %s" % exc) from None
    if len(gv) != len(cands):
        raise FormatError("g_values and candidates differ in length")
    cands.setflags(write=False)
    gv.setflags(write=False)
    model = ExtensionModel(ds, compute_slack(ds), mod, cands, gv, box, cfg, covered)
    return model, tol


def save_model(path, model: ExtensionModel, tol: Tolerances):
    write_json(path, model_to_doc(model, tol))


def load_model(path) -> tuple[ExtensionModel, Tolerances]:
    return model_from_doc(read_json(path))


def read_queries(path_or_file, dim: int) -> np.ndarray:
    """Rows of ``dim`` numbers; a non-numeric first row is taken as a header."""
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file, encoding="utf-8") as fh:
            text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    out = []
    for k, row in enumerate(rows):
        try:
            vals = [float(c) for c in row]
        except ValueError:
            if k == 0:
                continue
            raise FormatError("query row %d is not numeric" % (k + 1)) from None
        if len(vals) != dim:
            raise FormatError("query row %d has %d columns, expected %d" % (k + 1, len(vals), dim))
        out.append(vals)
    return np.array(out, dtype=float).reshape(-1, dim)


def write_csv(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
