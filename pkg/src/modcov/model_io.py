"""Versioned JSON serialization for fitted scoring models.

Coefficients are written as shortest-round-trip decimal floats, so a
serialize/parse cycle reproduces them bit for bit. The major format version
is checked on load; an unknown major version is refused rather than parsed
best-effort.
"""

import datetime
import hashlib
import json

import numpy as np

from .data import BasisSpec
from .errors import ModelMismatchError, ValidationError
from .scoring import InteractionModel

FORMAT_VERSION = "1.0"


def _basis_to_dict(spec):
    if spec.kind != "identity":
        raise ValidationError("only identity bases are serializable")
    return {
        "kind": spec.kind,
        "center": bool(spec.center),
        "scale": bool(spec.scale),
        "centers": [float(c) for c in spec.centers],
        "scales": [float(s) for s in spec.scales],
        "columns": list(spec.columns),
        "q": int(spec.q),
    }


def _basis_from_dict(d):
    return BasisSpec(center=d["center"], scale=d["scale"], transform=None,
                     centers=np.array(d["centers"], dtype=float),
                     scales=np.array(d["scales"], dtype=float),
                     columns=tuple(d["columns"]), q=int(d["q"]))


def _jsonable(obj):
    if isinstance(obj, BasisSpec):
        return _basis_to_dict(obj)
    if isinstance(obj, np.ndarray):
        return [float(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def model_to_document(model, input_digest=None):
    from . import __version__

    return {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "method": model.method,
        "link": model.link,
        "coefficients": {"names": list(model.basis.columns),
                         "values": [float(c) for c in model.coef]},
        "basis": _basis_to_dict(model.basis),
        "penalty": _jsonable(model.penalty),
        "augmentation": _jsonable(model.augmentation),
        "training": _jsonable(model.training),
        "orientation": model.orientation,
        "provenance": {
            "input_sha256": input_digest,
            "tool_version": __version__,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    }


def document_to_model(doc):
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelMismatchError("not a model document")
    major = str(doc["format_version"]).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise ModelMismatchError(
            f"unsupported model format version {doc['format_version']!r} "
            f"(this build reads {FORMAT_VERSION.split('.')[0]}.x)")
    basis = _basis_from_dict(doc["basis"])
    coef = np.array(doc["coefficients"]["values"], dtype=float)
    return InteractionModel(family=doc["family"], coef=coef, basis=basis,
                            method=doc["method"], link=doc.get("link"),
                            penalty=doc.get("penalty") or {},
                            augmentation=doc.get("augmentation"),
                            training=doc.get("training") or {})


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_model(model, path, input_path=None):
    digest = file_digest(input_path) if input_path else None
    doc = model_to_document(model, input_digest=digest)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return doc


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelMismatchError(f"model file is not valid JSON: {exc}") from None
    return document_to_model(doc)
