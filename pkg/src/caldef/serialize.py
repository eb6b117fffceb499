"""Text formats: model descriptors, field snapshots, trace tables, run configs.

Numbers are written with repr(), which round-trips doubles exactly, so
snapshots are bit-stable. Config files are JSON with strict key checking:
unknown keys are errors, not warnings.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .engine import DeformationTrace, ObstructionClass
from .exterior import Form, FormTuple
from .fields import FourierField
from .models import CalibrationModel

MODEL_MAGIC = "caldef-model v1"
FIELD_MAGIC = "caldef-field v1"


# -- model descriptors -----------------------------------------------------------


def dump_model(model: CalibrationModel) -> str:
    lines = [MODEL_MAGIC,
             f"kind {model.kind}",
             f"dim {model.dim}",
             f"orientation {model.orientation}",
             "params " + json.dumps(model.params, sort_keys=True),
             f"signature {' '.join(str(p) for p in model.signature)}"]
    for i, part in enumerate(model.Phi0.parts):
        lines.append(f"part {i} degree {part.degree}")
        for ix, c in part.items():
            ixs = ",".join(str(j) for j in ix) if ix else "-"
            lines.append(f"  {ixs} {c.real!r} {c.imag!r}")
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> dict:
    """Parse a model descriptor back into {kind, dim, params, parts} data."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ValueError("not a caldef model descriptor")
    out: dict[str, Any] = {"parts": []}
    cur = None
    for ln in lines[1:]:
        if ln.startswith("  "):
            ixs, re_s, im_s = ln.split()
            ix = () if ixs == "-" else tuple(int(x) for x in ixs.split(","))
            cur["coeffs"][ix] = complex(float(re_s), float(im_s))
            continue
        key, _, rest = ln.partition(" ")
        if key == "kind":
            out["kind"] = rest.strip()
        elif key == "dim":
            out["dim"] = int(rest)
        elif key == "orientation":
            out["orientation"] = int(rest)
        elif key == "params":
            out["params"] = json.loads(rest)
        elif key == "signature":
            out["signature"] = tuple(int(x) for x in rest.split())
        elif key == "part":
            idx_s, _, deg_s = rest.partition(" degree ")
            cur = {"index": int(idx_s), "degree": int(deg_s), "coeffs": {}}
            out["parts"].append(cur)
        else:
            raise ValueError(f"unknown descriptor line {ln!r}")
    return out


# -- field snapshots -------------------------------------------------------------


def _component_items(kind: str, payload):
    if kind == "form":
        for ix, c in payload.items():
            yield ",".join(str(j) for j in ix) or "-", c
    elif kind == "tuple":
        for pi, part in enumerate(payload.parts):
            for ix, c in part.items():
                yield f"{pi}:" + (",".join(str(j) for j in ix) or "-"), c
    else:
        arr = np.asarray(payload)
        for idx in np.ndindex(arr.shape):
            c = complex(arr[idx])
            if c != 0:
                yield ",".join(str(j) for j in idx), c


def dump_field(f: FourierField) -> str:
    lines = [FIELD_MAGIC, f"dim {f.dim}", f"kind {f.kind}", f"cap {f.cap}"]
    if f.kind == "form":
        lines.append(f"degree {f.meta.get('degree', 0)}")
    elif f.kind == "tuple":
        lines.append("signature " + " ".join(str(p) for p in f.meta.get("signature", ())))
    for k in f.sorted_modes():
        ks = ",".join(str(x) for x in k)
        for comp, c in sorted(_component_items(f.kind, f.modes[k]), key=lambda t: t[0]):
            lines.append(f"M {ks} {comp} {c.real!r} {c.imag!r}")
    return "\n".join(lines) + "\n"


def load_field(text: str) -> FourierField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != FIELD_MAGIC:
        raise ValueError("not a caldef field snapshot")
    head = {}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("M "):
            _, ks, comp, re_s, im_s = ln.split()
            rows.append((ks, comp, float(re_s), float(im_s)))
        else:
            key, _, rest = ln.partition(" ")
            head[key] = rest
    dim = int(head["dim"])
    kind = head["kind"]
    cap = int(head.get("cap", 64))
    meta = {}
    if kind == "form":
        meta["degree"] = int(head.get("degree", 0))
    elif kind == "tuple":
        meta["signature"] = tuple(int(x) for x in head.get("signature", "").split())
    f = FourierField(dim, kind, None, cap, meta)
    staged: dict = {}
    for ks, comp, re_v, im_v in rows:
        k = tuple(int(x) for x in ks.split(","))
        staged.setdefault(k, []).append((comp, complex(re_v, im_v)))
    for k, items in staged.items():
        f.modes[k] = _payload_from_items(dim, kind, meta, items)
    return f


def _payload_from_items(dim: int, kind: str, meta: dict, items: list):
    if kind == "form":
        coeffs = {(() if comp == "-" else tuple(int(x) for x in comp.split(","))): c
                  for comp, c in items}
        return Form(dim, meta["degree"], coeffs)
    if kind == "tuple":
        sig = meta["signature"]
        per = [dict() for _ in sig]
        for comp, c in items:
            pi_s, _, ixs = comp.partition(":")
            ix = () if ixs == "-" else tuple(int(x) for x in ixs.split(","))
            per[int(pi_s)][ix] = c
        return FormTuple(Form(dim, p, coeffs) for p, coeffs in zip(sig, per))
    shape = {"endo": (dim, dim), "vector": (dim,), "two_tangent": (dim, dim, dim)}[kind]
    arr = np.zeros(shape, dtype=complex)
    for comp, c in items:
        arr[tuple(int(x) for x in comp.split(","))] = c
    return arr


# -- traces ----------------------------------------------------------------------


def dump_trace_machine(trace: DeformationTrace) -> str:
    lines = ["# order\tcoeff_norm\tob_norm\tharmonic_residue\tsupport_radius"]
    for r in trace.records:
        lines.append(f"{r.order}\t{r.coeff_norm!r}\t{r.ob_norm!r}\t"
                     f"{r.harmonic_residue!r}\t{r.support_radius}")
    lines.append(f"# completed\t{trace.completed}")
    lines.append(f"# radius_estimate\t{trace.radius_estimate!r}")
    if trace.obstruction is not None:
        ob = trace.obstruction
        lines.append(f"# obstructed_order\t{ob.order}")
        lines.append(f"# obstruction_norm\t{ob.norm!r}")
    return "\n".join(lines) + "\n"


def dump_trace_human(trace: DeformationTrace, evals: list | None = None) -> str:
    lines = ["order  ||a_k||_s/k!   ||Ob_k||_{s-1}  harm.residue  radius"]
    for r in trace.records:
        lines.append(f"{r.order:>5d}  {r.coeff_norm:13.6e}  {r.ob_norm:14.6e}  "
                     f"{r.harmonic_residue:12.3e}  {r.support_radius:>6d}")
    lines.append(f"completed: {trace.completed}   radius estimate: {trace.radius_estimate:.6g}")
    if trace.obstruction is not None:
        ob = trace.obstruction
        lines.append(f"OBSTRUCTED at order {ob.order}: |class| = {ob.norm:.6e}, "
                     f"blocked modes: {sorted(ob.blocked_modes)}")
    if evals:
        lines.append("")
        lines.append("t        ||d Phi_t||_{s-1}")
        for t, res, warn in evals:
            note = "   (beyond radius estimate)" if warn else ""
            lines.append(f"{t:<8g} {res:.6e}{note}")
    return "\n".join(lines) + "\n"


def dump_obstruction(ob: ObstructionClass) -> str:
    rep = ob.representative
    lines = [f"order {ob.order}", f"norm {ob.norm!r}"]
    if rep is not None and rep.norm() > 0:
        lines.append("harmonic_representative")
        for comp, c in _component_items("tuple", rep):
            lines.append(f"  {comp} {c.real!r} {c.imag!r}")
    for mode in sorted(ob.blocked_modes):
        lines.append(f"blocked {','.join(str(x) for x in mode)} {ob.blocked_modes[mode]!r}")
    return "\n".join(lines) + "\n"


# -- run configuration -----------------------------------------------------------

CONFIG_SCHEMA = {
    "command": str,
    "model": {"kind": str, "params": dict},
    "seed": int,
    "trials": int,
    "orders": int,
    "sobolev_s": (int, float),
    "support_cap": int,
    "tolerances": {"closure_tol": (int, float), "harmonic_tol": (int, float),
                   "ellipticity_tol": (int, float)},
    "t_eval": list,
    "gauge_fix": bool,
    "a1": {"type": str, "kvec": list, "seed": int,
           "mode_amplitude": (int, float), "constant_amplitude": (int, float),
           "entries": list},
    "out": str,
}


def validate_config(cfg: dict, schema: dict = CONFIG_SCHEMA, path: str = "") -> None:
    """Reject unknown keys and wrong value shapes anywhere in the document."""
    for key, val in cfg.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ValueError(f"unknown config key {where!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise ValueError(f"config key {where!r} must be a mapping")
            validate_config(val, spec, where)
        elif not isinstance(val, spec):
            raise ValueError(f"config key {where!r} has wrong type")


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    validate_config(cfg)
    return cfg
