"""Command-line driver: certificates, dimension tables, deformation runs and
the identity suite.

Exit codes: 0 pass, 1 usage error, 2 certification failure, 3 obstruction
detected. Every command is a pure function of (config, seed); the effective
configuration is echoed next to the outputs so a run can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .engine import (
    DeformationProblem,
    FourierField,
    evaluate,
    majorant_diagnostic,
    run,
    standard_a1,
)
from .fields import HodgePackage
from .identities import identity_suite
from .models import (
    KINDS,
    RankUnstableError,
    build_model,
    certify_ellipticity,
    E_space,
    expected_cohomology,
    g2_five_form_14,
    g2_spaces,
    hk_invariant_two_forms,
    isotropy_algebra,
    spin7_spaces,
    cy_primitive_11_dim,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CERT_FAIL = 2
EXIT_OBSTRUCTED = 3

IDENTITY_TOLS = {
    "L_a_anti_derivation": 1e-10,
    "L_a_evaluation_formula": 1e-10,
    "bracket_nijenhuis": 1e-10,
    "closed_square_E2": 1e-10,
    "ad_powers_E2": 1e-9,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_params(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        key, _, val = item.partition("=")
        if not _ or not key.strip():
            raise UsageError(f"bad --params entry {item!r}; expected key=value")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            raise UsageError(f"--params value {val!r} must be an integer") from None
    return out


DEFAULTS = {
    "seed": 0,
    "trials": 100,
    "orders": 8,
    "sobolev_s": 6.0,
    "support_cap": 64,
    "tolerances": {"closure_tol": 1e-10, "harmonic_tol": 1e-9, "ellipticity_tol": 1e-8},
    "t_eval": [0.01, 0.02, 0.05, 0.1],
    "gauge_fix": False,
    "a1": {"type": "random-harmonic", "mode_amplitude": 2.0, "constant_amplitude": 0.0},
    "out": "caldef_out",
}


def _effective_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if getattr(args, "config", None):
        try:
            file_cfg = serialize.load_config(args.config)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise UsageError(f"config: {exc}") from None
        for key, val in file_cfg.items():
            if isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    for key in ("seed", "trials", "orders"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if getattr(args, "sobolev_s", None) is not None:
        cfg["sobolev_s"] = args.sobolev_s
    if getattr(args, "cap", None) is not None:
        cfg["support_cap"] = args.cap
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    if getattr(args, "model", None) is not None:
        cfg.setdefault("model", {})
        cfg["model"]["kind"] = args.model
    if getattr(args, "params", None):
        cfg.setdefault("model", {})
        cfg["model"]["params"] = _parse_params(args.params)
    return cfg


def _require_model(cfg) -> tuple[str, dict]:
    model_cfg = cfg.get("model") or {}
    kind = model_cfg.get("kind")
    if not kind:
        raise UsageError("a model is required (--model or config.model.kind)")
    if kind not in KINDS:
        raise UsageError(f"unknown model {kind!r}; choose one of {', '.join(KINDS)}")
    return kind, model_cfg.get("params", {})


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run_config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def cmd_certify(cfg: dict) -> int:
    kind, params = _require_model(cfg)
    out = _outdir(cfg)
    model = build_model(kind, **params)
    tol = cfg["tolerances"]["ellipticity_tol"]
    cert = certify_ellipticity(model, trials=cfg["trials"], seed=cfg["seed"], tol=tol)
    lines = [f"model {cert.model_id}",
             f"stages {' '.join(str(k) for k in cert.stages)}",
             f"trial_covectors {cert.trials} (+{model.dim} coordinate probes)",
             f"seed {cert.seed}",
             f"max_exactness_defect {cert.max_defect!r}",
             f"verdict {'pass' if cert.verdict else 'fail'}"]
    ok = cert.verdict
    if kind in ("symplectic", "slnc", "cy", "hk", "g2", "spin7") and cert.verdict:
        expected = expected_cohomology(model)
        pkg = HodgePackage(model)
        computed = pkg.cohomology_dims(2, probe_seed=cfg["seed"])
        for j in (1, 2):
            match = int(computed[j]) == int(expected[j])
            ok = ok and match
            lines.append(f"H{j}_sharp mode0={computed[j]} paper={expected[j]} "
                         f"{'ok' if match else 'MISMATCH'}")
    text = "\n".join(lines) + "\n"
    (out / "certificate.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_CERT_FAIL


def _dims_rows(kind: str, params: dict) -> list[tuple[str, int]]:
    model = build_model(kind, **params)
    rows = [(f"E{k}", E_space(model, k).rank) for k in range(4)]
    rows.append(("isotropy", isotropy_algebra(model).rank))
    rows.append(("gl_dim_minus_isotropy",
                 model.dim ** 2 - isotropy_algebra(model).rank))
    if kind == "g2":
        sp = g2_spaces(model)
        rows += [("Lambda2_7", sp["2_7"].rank), ("Lambda2_14", sp["2_14"].rank),
                 ("Lambda3_1", sp["3_1"].rank), ("Lambda3_7", sp["3_7"].rank),
                 ("Lambda3_27", sp["3_27"].rank), ("Lambda5_14", g2_five_form_14(model).rank)]
    if kind == "spin7":
        sp = spin7_spaces(model)
        rows += [("Lambda2_7", sp["2_7"].rank), ("Lambda2_21", sp["2_21"].rank),
                 ("Lambda3_8", sp["3_8"].rank), ("Lambda3_48", sp["3_48"].rank),
                 ("Lambda4_1", sp["4_1"].rank), ("Lambda4_7", sp["4_7"].rank),
                 ("Lambda4_27", sp["4_27"].rank), ("Lambda4_35", sp["4_35"].rank)]
    if kind == "hk":
        rows.append(("Lambda2_HK", hk_invariant_two_forms(model).rank))
    if kind == "cy":
        rows.append(("P11_real", cy_primitive_11_dim(model)))
    return rows


def cmd_dims(cfg: dict) -> int:
    out = _outdir(cfg)
    if cfg.get("model", {}).get("kind"):
        kind, params = _require_model(cfg)
        targets = [(kind, params)]
    else:
        targets = [("symplectic", {"n": 2}), ("slnc", {"n": 3}), ("cy", {"n": 3}),
                   ("hk", {"m": 1}), ("g2", {}), ("spin7", {})]
    human = []
    machine = ["# model\tquantity\tvalue"]
    for kind, params in targets:
        try:
            rows = _dims_rows(kind, params)
        except RankUnstableError as exc:
            human.append(f"{kind}: RANK UNSTABLE ({exc})")
            continue
        mid = build_model(kind, **params).model_id()
        human.append(mid)
        for name, val in rows:
            human.append(f"  {name:24s} {val}")
            machine.append(f"{mid}\t{name}\t{val}")
    text = "\n".join(human) + "\n"
    (out / "dims.txt").write_text(text)
    (out / "dims.tsv").write_text("\n".join(machine) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def _build_a1(model, cfg: dict) -> FourierField:
    a1_cfg = cfg["a1"]
    kind = a1_cfg.get("type", "random-harmonic")
    cap = cfg["support_cap"]
    if kind == "random-harmonic":
        kvec = a1_cfg.get("kvec")
        return standard_a1(model, kvec=kvec, seed=a1_cfg.get("seed", cfg["seed"]),
                           mode_amplitude=a1_cfg.get("mode_amplitude", 2.0),
                           constant_amplitude=a1_cfg.get("constant_amplitude", 0.0),
                           cap=cap)
    if kind == "modes":
        entries = a1_cfg.get("entries")
        if not entries:
            raise UsageError("a1.type 'modes' needs a nonempty a1.entries list")
        n = model.dim
        field = FourierField(n, "endo", None, cap)
        for ent in entries:
            k = tuple(int(x) for x in ent["k"])
            mat = (np.array(ent["matrix_re"], dtype=float)
                   + 1j * np.array(ent.get("matrix_im", np.zeros((n, n))), dtype=float))
            if mat.shape != (n, n):
                raise UsageError(f"a1 matrix at mode {k} must be {n}x{n}")
            field = field + FourierField.single(n, "endo", k, mat, cap)
        return field
    raise UsageError(f"unknown a1.type {kind!r}")


def cmd_deform(cfg: dict) -> int:
    kind, params = _require_model(cfg)
    out = _outdir(cfg)
    model = build_model(kind, **params)
    a1 = _build_a1(model, cfg)
    problem = DeformationProblem(
        model, a1, orders=cfg["orders"], t_eval=tuple(cfg["t_eval"]),
        closure_tol=cfg["tolerances"]["closure_tol"],
        harmonic_tol=cfg["tolerances"]["harmonic_tol"],
        gauge_fix=cfg["gauge_fix"], sobolev_s=cfg["sobolev_s"],
        support_cap=cfg["support_cap"])
    try:
        trace, coeffs = run(problem)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    (out / "a1.field").write_text(serialize.dump_field(a1))
    for k, c in coeffs.items():
        (out / f"coeff_{k}.field").write_text(serialize.dump_field(c))
    evals = []
    if trace.completed:
        for t in problem.t_eval:
            _, res = evaluate(model, coeffs, t, orders=problem.orders,
                              sobolev_s=problem.sobolev_s, cap=problem.support_cap)
            evals.append((t, res, t > trace.radius_estimate))
        rep = majorant_diagnostic(trace)
        with open(out / "majorant.txt", "w") as fh:
            fh.write(f"b {rep.b!r}\nc {rep.c!r}\nradius_lower_bound "
                     f"{rep.radius_lower_bound!r}\nfeasible {rep.feasible}\n")
    (out / "trace.tsv").write_text(serialize.dump_trace_machine(trace))
    human = serialize.dump_trace_human(trace, evals)
    (out / "trace.txt").write_text(human)
    sys.stdout.write(human)
    if not trace.completed:
        (out / "obstruction.txt").write_text(serialize.dump_obstruction(trace.obstruction))
        return EXIT_OBSTRUCTED
    return EXIT_OK


def cmd_verify_identities(cfg: dict) -> int:
    out = _outdir(cfg)
    res = identity_suite(trials=cfg["trials"], seed=cfg["seed"])
    lines = [f"trials {cfg['trials']}  seed {cfg['seed']}",
             "identity                    max_residual  tolerance  verdict"]
    ok = True
    for name, tol in IDENTITY_TOLS.items():
        val = res[name]
        good = val < tol
        ok = ok and good
        lines.append(f"{name:26s} {val:13.3e}  {tol:9.0e}  {'pass' if good else 'FAIL'}")
    lines.append(f"bracket identity side norms: lhs {res['bracket_lhs_norm']:.6e} "
                 f"rhs {res['bracket_rhs_norm']:.6e}")
    text = "\n".join(lines) + "\n"
    (out / "identities.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_CERT_FAIL


def make_parser() -> _Parser:
    p = _Parser(prog="caldef", description=__doc__)
    sub = p.add_subparsers(dest="command")
    for name in ("certify", "dims", "deform", "verify-identities"):
        q = sub.add_parser(name)
        q.add_argument("--model", choices=KINDS)
        q.add_argument("--params", help="model parameters, e.g. n=3 or m=2")
        q.add_argument("--seed", type=int)
        q.add_argument("--trials", type=int)
        q.add_argument("--orders", type=int)
        q.add_argument("--sobolev-s", dest="sobolev_s", type=float)
        q.add_argument("--cap", type=int)
        q.add_argument("--out")
        q.add_argument("--config")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a command is required (certify, dims, deform, verify-identities)")
        cfg = _effective_config(args)
        if args.command == "certify":
            return cmd_certify(cfg)
        if args.command == "dims":
            return cmd_dims(cfg)
        if args.command == "deform":
            return cmd_deform(cfg)
        return cmd_verify_identities(cfg)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        sys.stderr.write(parser.format_usage())
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
