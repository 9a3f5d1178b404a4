"""CSV and structured-text (TOML, flat dotted keys) serialization."""

import json
import math
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError

__all__ = [
    "write_csv",
    "read_csv",
    "read_toml",
    "parse_toml",
    "flatten",
    "unflatten",
    "dump_flat_toml",
    "save_lti",
    "load_lti",
    "save_bilinear",
    "load_bilinear",
]


def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows, comment=None):
    """Comma-separated, header row, 17 significant digits, LF endings.

    ``comment`` becomes a leading ``# ...`` line.
    """
    rows = np.atleast_2d(np.asarray(rows, float))
    lines = [f"# {comment}"] if comment else []
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_csv(path):
    """Return ``(header, data)`` from a file written by :func:`write_csv`."""
    text = [line for line in Path(path).read_text().splitlines() if not line.startswith("#")]
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line], dtype=float)
    return header, data


def read_toml(path):
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def parse_toml(text):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from exc


def flatten(tree, prefix=""):
    """Nested dict -> ``{"a.b.c": value}``."""
    flat = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, path + "."))
        else:
            flat[path] = value
    return flat


def unflatten(flat):
    tree = {}
    for path, value in flat.items():
        node = tree
        *parents, leaf = path.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return tree


def _toml_value(value):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ConfigError("non-finite values cannot be written to TOML")
        return repr(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    raise ConfigError(f"cannot serialize {type(value).__name__} to TOML")


def dump_flat_toml(flat):
    """Serialize ``{"a.b": value}`` as one ``a.b = value`` line per key."""
    return "".join(f"{key} = {_toml_value(flat[key])}\n" for key in flat)


def save_lti(path, A, B, C, **meta):
    flat = {k: v for k, v in meta.items()}
    flat.update(A=np.asarray(A, float), B=np.atleast_2d(np.asarray(B, float).T).T, C=np.atleast_2d(C))
    Path(path).write_text(dump_flat_toml(flat), newline="\n")


def _matrix(doc, key, path):
    if key not in doc:
        raise ConfigError(f"{path}: missing matrix {key!r}")
    try:
        return np.array(doc[key], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: matrix {key!r} is ragged") from exc


def load_lti(path):
    """Load an LTI model from dense row-major matrices ``A``, ``B``, ``C``."""
    from .models import LTVModel

    doc = read_toml(path)
    A, B, C = (_matrix(doc, k, path) for k in "ABC")
    return LTVModel.from_matrices(A, B, C, name=doc.get("name", Path(path).stem))


def save_bilinear(path, model, **meta):
    flat = dict(meta)
    flat.update(
        name=model.name,
        nilpotency_index=model.nilpotency_index(),
        A=model.Ahat,
        N=model.Nhat,
        B=model.Bhat[:, None],
        C=model.Chat[None, :],
    )
    Path(path).write_text(dump_flat_toml(flat), newline="\n")


def load_bilinear(path):
    from .models import BilinearModel

    doc = read_toml(path)
    return BilinearModel(
        Ahat=_matrix(doc, "A", path),
        Nhat=_matrix(doc, "N", path),
        Bhat=_matrix(doc, "B", path).ravel(),
        Chat=_matrix(doc, "C", path).ravel(),
        name=doc.get("name", Path(path).stem),
    )
