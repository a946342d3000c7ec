"""Problem config files (JSON) and CSV matrix payloads.

Layout::

    {
      "name": "example", "n": 2,
      "box": {"lower": -1, "upper": [1, 2]},
      "beta": 1.5, "C": 3.0, "R": 2.9,
      "objective": {"kind": "quadratic-form", "matrix": [[1, 0], [0, 1]], "l1": 0.1},
      "constraints": [
        {"kind": "linear", "a": [-1, -1], "offset": 1, "equality": false},
        {"kind": "l2-ball", "bound": 0.5},
        {"kind": "l1", "weight": 1.0, "bound": 2.0}
      ]
    }

Objective kinds: ``linear`` (``a``, ``offset``), ``quadratic-form``
(``matrix``, ``linear``, ``constant``, ``smoothness``) and ``least-squares``
(``matrix``, ``target``); an optional ``l1`` weight adds ``w ||x||_1``.
Constraint kinds: ``linear``, ``quadratic-form`` (value ``x'Px + q'x + r``),
``l2-ball`` (``||x||^2 - bound``) and ``l1`` (``weight ||x||_1 - bound``).
Any matrix or vector may be given inline or as ``{"csv": "file.csv"}``,
resolved against the config file's directory.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .problem import (
    BoxSet,
    LeastSquares,
    Linear,
    ProblemSpec,
    QuadraticForm,
    SeparableTerm,
    SquaredNorm,
)


class ConfigError(ValueError):
    """Malformed or unreadable problem/run config."""


# ---------------------------------------------------------------------------
# CSV payloads


def write_matrix_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="", encoding="ascii") as fh:
        for row in A:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix {path}: {exc}") from None


def _payload(value, base: Path, vector: bool = False):
    if isinstance(value, dict):
        if "csv" not in value:
            raise ConfigError("matrix payload must be a list or {'csv': path}")
        arr = read_matrix_csv(base / value["csv"])
        return arr.reshape(-1) if vector else arr
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"bad numeric payload {value!r}") from None
    return arr


# ---------------------------------------------------------------------------
# loading


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing '{key}'")
    return d[key]


def _objective(d: dict, n: int, base: Path):
    kind = _require(d, "kind", "objective")
    if kind == "linear":
        f = Linear(_payload(_require(d, "a", "objective"), base, True), d.get("offset", 0.0))
    elif kind == "quadratic-form":
        q = d.get("linear")
        f = QuadraticForm(
            _payload(_require(d, "matrix", "objective"), base),
            None if q is None else _payload(q, base, True),
            d.get("constant", 0.0),
            d.get("smoothness"),
        )
    elif kind == "least-squares":
        f = LeastSquares(_payload(_require(d, "matrix", "objective"), base),
                         _payload(_require(d, "target", "objective"), base, True))
    else:
        raise ConfigError(f"unknown objective kind {kind!r}")
    w = d.get("l1", 0.0)
    ft = SeparableTerm.l1(_payload(w, base, True) if isinstance(w, (list, dict)) else float(w)) if w else SeparableTerm.zero()
    return f, ft


def _constraint(d: dict, n: int, base: Path, k: int):
    where = f"constraint {k}"
    kind = _require(d, "kind", where)
    zero = SeparableTerm.zero()
    if kind == "linear":
        return Linear(_payload(_require(d, "a", where), base, True), d.get("offset", 0.0)), zero
    if kind == "quadratic-form":
        q = d.get("linear")
        return QuadraticForm(
            _payload(_require(d, "matrix", where), base),
            None if q is None else _payload(q, base, True),
            d.get("constant", 0.0),
            d.get("smoothness"),
        ), zero
    if kind == "l2-ball":
        return SquaredNorm(-float(_require(d, "bound", where))), zero
    if kind == "l1":
        w = d.get("weight", 1.0)
        w = _payload(w, base, True) if isinstance(w, (list, dict)) else float(w)
        return Linear(np.zeros(n), -float(_require(d, "bound", where))), SeparableTerm.l1(w)
    raise ConfigError(f"{where}: unknown kind {kind!r}")


def problem_from_dict(d: dict, base_dir: str | os.PathLike = ".") -> ProblemSpec:
    base = Path(base_dir)
    try:
        n = int(_require(d, "n", "problem"))
        box = d.get("box", {})
        lo = np.broadcast_to(_payload(box.get("lower", -np.inf), base, True), (n,))
        hi = np.broadcast_to(_payload(box.get("upper", np.inf), base, True), (n,))
        f, ft = _objective(_require(d, "objective", "problem"), n, base)
        cons = d.get("constraints", [])
        g, gt, eq = [], [], []
        for k, c in enumerate(cons):
            gk, tk = _constraint(c, n, base, k)
            g.append(gk)
            gt.append(tk)
            eq.append(bool(c.get("equality", False)))
        spec = ProblemSpec(
            f=f, g=g, g_tilde=gt, f_tilde=ft, box=BoxSet(np.array(lo), np.array(hi)),
            beta=float(_require(d, "beta", "problem")),
            C=d.get("C"), R=d.get("R"), equality_mask=eq,
            name=d.get("name", "custom"), descriptor=d.get("descriptor"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise ConfigError(f"invalid problem config: {exc}") from None
    return spec


def load_problem(path: str | os.PathLike) -> ProblemSpec:
    p = Path(path)
    try:
        d = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return problem_from_dict(d, p.parent)


# ---------------------------------------------------------------------------
# export


def _vec_out(v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return float(v)
    return v.tolist()


def _bound_out(v):
    v = np.asarray(v, dtype=float)
    if np.all(v == v[0]):
        v = v[0]
    if v.ndim == 0:
        return float(v) if np.isfinite(v) else ("inf" if v > 0 else "-inf")
    return [float(x) if np.isfinite(x) else ("inf" if x > 0 else "-inf") for x in v]


def _oracle_out(f, matrices: dict, label: str) -> dict:
    if isinstance(f, Linear):
        return {"kind": "linear", "a": f.a.tolist(), "offset": f.offset}
    if isinstance(f, QuadraticForm):
        matrices[label] = f.P
        return {"kind": "quadratic-form", "matrix": label, "linear": f.q.tolist(),
                "constant": f.r, "smoothness": f.smoothness}
    if isinstance(f, LeastSquares):
        matrices[label] = f.A
        return {"kind": "least-squares", "matrix": label, "target": f.b.tolist()}
    raise ConfigError(f"{type(f).__name__} cannot be exported")


def problem_to_dict(spec: ProblemSpec, csv_dir: str | os.PathLike | None = None, prefix: str = "") -> dict:
    """Config dict for ``spec``; with ``csv_dir`` matrices go to CSV files there."""
    matrices: dict[str, np.ndarray] = {}
    obj = _oracle_out(spec.f, matrices, "objective")
    if spec.f_tilde.kind == "l1" and not spec.f_tilde.is_zero:
        obj["l1"] = _vec_out(spec.f_tilde.weight)
    elif spec.f_tilde.kind == "custom":
        raise ConfigError("custom separable terms cannot be exported")
    cons = []
    for k, (gk, tk) in enumerate(zip(spec.g, spec.g_tilde)):
        if tk.kind == "l1" and not tk.is_zero:
            if not (isinstance(gk, Linear) and not np.any(gk.a)):
                raise ConfigError(f"constraint {k}: l1 rows need a constant smooth part")
            c = {"kind": "l1", "weight": _vec_out(tk.weight), "bound": -gk.offset}
        elif tk.kind == "custom":
            raise ConfigError("custom separable terms cannot be exported")
        elif isinstance(gk, SquaredNorm):
            c = {"kind": "l2-ball", "bound": -gk.offset}
        else:
            c = _oracle_out(gk, matrices, f"constraint{k}")
        if spec.equality_mask[k]:
            c["equality"] = True
        cons.append(c)
    d = {
        "name": spec.name,
        "n": spec.n,
        "box": {"lower": _bound_out(spec.box.lower), "upper": _bound_out(spec.box.upper)},
        "beta": spec.beta,
        "C": spec.C,
        "R": spec.R,
        "objective": obj,
        "constraints": cons,
    }
    if spec.descriptor is not None:
        d["descriptor"] = spec.descriptor

    for label, M in matrices.items():
        if csv_dir is None:
            payload = M.tolist()
        else:
            fname = f"{prefix}{label}.csv"
            write_matrix_csv(Path(csv_dir) / fname, M)
            payload = {"csv": fname}
        target = obj if label == "objective" else cons[int(label[len("constraint"):])]
        target["matrix"] = payload
    return d


def save_problem(spec: ProblemSpec, path: str | os.PathLike, csv: bool = True) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    prefix = p.stem + "."
    d = problem_to_dict(spec, p.parent if csv else None, prefix)
    p.write_text(json.dumps(d, indent=1) + "\n")
