"""Text problem files.

A problem file is a line-oriented manifest::

    eimpc-problem 1
    name Sys1
    horizon 10
    tau 1.0
    matrix A 2 2 <base64 of little-endian float64, row major>
    ...

Required matrices are ``A B Ax bx Au bu Af bf Q R P``; ``K`` is optional.
Vectors are written with a single column.
"""

import base64
import hashlib

import numpy as np

from .errors import FormatError
from .geometry import Polytope
from .systems import DiscreteLti, LtiProblemSpec

PROBLEM_MAGIC = "eimpc-problem"
PROBLEM_VERSION = 1
_REQUIRED = ("A", "B", "Ax", "bx", "Au", "bu", "Af", "bf", "Q", "R", "P")


def _blob(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def problem_to_text(spec):
    mats = {
        "A": spec.model.A, "B": spec.model.B,
        "Ax": spec.X.A, "bx": spec.X.b, "Au": spec.U.A, "bu": spec.U.b,
        "Af": spec.Xf.A, "bf": spec.Xf.b, "Q": spec.Q, "R": spec.R, "P": spec.P,
    }
    if spec.K is not None:
        mats["K"] = spec.K
    lines = [f"{PROBLEM_MAGIC} {PROBLEM_VERSION}",
             f"name {spec.name or 'custom'}",
             f"horizon {spec.N}",
             f"tau {spec.model.tau!r}"]
    for key, M in mats.items():
        M = np.asarray(M, dtype=float)
        rows, cols = (M.shape[0], 1) if M.ndim == 1 else M.shape
        lines.append(f"matrix {key} {rows} {cols} {_blob(M)}")
    return "\n".join(lines) + "\n"


def problem_hash(spec):
    """SHA-256 of the canonical problem text."""
    return hashlib.sha256(problem_to_text(spec).encode("ascii")).hexdigest()


def save_problem(spec, path):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(problem_to_text(spec))


def problem_from_text(text):
    """Parse a problem manifest.

    Raises
    ------
    FormatError
        With the byte offset of the offending line.
    """
    offset = 0
    header = {}
    mats = {}
    for lineno, line in enumerate(text.split("\n")):
        start = offset
        offset += len(line) + 1
        if not line.strip():
            continue
        parts = line.split()
        if lineno == 0:
            if parts[:1] != [PROBLEM_MAGIC]:
                raise FormatError("not a problem file", start)
            if len(parts) != 2 or parts[1] != str(PROBLEM_VERSION):
                raise FormatError(f"unsupported problem version {parts[1:]}", start)
            continue
        key = parts[0]
        try:
            if key == "name":
                header["name"] = " ".join(parts[1:])
            elif key == "horizon":
                header["N"] = int(parts[1])
            elif key == "tau":
                header["tau"] = float(parts[1])
            elif key == "matrix":
                name, rows, cols, blob = parts[1], int(parts[2]), int(parts[3]), parts[4]
                raw = base64.b64decode(blob, validate=True)
                if len(raw) != 8 * rows * cols:
                    raise FormatError(f"matrix {name}: {len(raw)} bytes for shape ({rows}, {cols})",
                                      start)
                mats[name] = np.frombuffer(raw, dtype="<f8").astype(float).reshape(rows, cols)
            else:
                raise FormatError(f"unknown field {key!r}", start)
        except (IndexError, ValueError) as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"bad line {lineno + 1}: {e}", start) from None
    if not text.startswith(PROBLEM_MAGIC):
        raise FormatError("not a problem file", 0)
    missing = [k for k in _REQUIRED if k not in mats] + [k for k in ("N",) if k not in header]
    if missing:
        raise FormatError(f"missing fields {missing}", len(text))
    vec = lambda k: mats[k].reshape(-1)
    try:
        model = DiscreteLti(mats["A"], mats["B"], header.get("tau", 1.0))
        return LtiProblemSpec(model, Polytope(mats["Ax"], vec("bx")), Polytope(mats["Au"], vec("bu")),
                              Polytope(mats["Af"], vec("bf")), mats["Q"], mats["R"], mats["P"],
                              header["N"], name=header.get("name", ""), K=mats.get("K"))
    except ValueError as e:
        raise FormatError(f"inconsistent problem data: {e}", 0) from None


def load_problem(path):
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as e:
        raise FormatError("problem file is not ASCII", e.start) from None
    return problem_from_text(text)
