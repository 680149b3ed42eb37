"""Command-line front end: `snmono validate | quasidense | demo | sweep`.

Exit codes: 0 when no check fails, 1 when a check fails or a set is refuted,
2 for usage errors and malformed input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from ._optim import Budget, lattice
from .alignment import alignment_library, alignment_tau, quasidense_via_alignment
from .convex_fn import Indicator, NormPower, Quadratic
from .fitzpatrick import phi, theta
from .linear_relations import LinearRelation, brezis_browder_check, sup_s_on_polar
from .mono_ops import (SubdiffMap, combo, head, map_from_dict, pairing_exact, resolvent_gap_oracle,
                       tail)
from .positive_sets import (LinearSubspace, LPositiveSet, SequenceGraph, certify_quasidense,
                            is_L_positive, set_from_dict)
from .sn_core import SnSpace, product_space, validate_sn

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MAP_KINDS = ("linear", "subdiff", "finite-graph", "inverse", "sum", "deformed")
DEMOS = ("tail", "heads-and-tails", "gossez", "rockafellar", "alignment")


class InputError(ValueError):
    """Malformed or inconsistent command-line input."""


# ---------------------------------------------------------------------------
# reports


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return v


class Report:
    def __init__(self, command: str, config: dict):
        self.command, self.config = command, config
        self.records: list[dict] = []

    def add(self, name: str, anchor: str, verdict: str, **numbers) -> None:
        if verdict not in ("pass", "fail", "inconclusive", "info"):
            raise ValueError(verdict)
        self.records.append({"name": name, "anchor": anchor, "verdict": verdict,
                             "numbers": _clean(numbers)})

    def check(self, name: str, anchor: str, ok: bool, **numbers) -> None:
        self.add(name, anchor, "pass" if ok else "fail", **numbers)

    @property
    def summary(self) -> dict:
        out = {"pass": 0, "fail": 0, "inconclusive": 0, "info": 0}
        for r in self.records:
            out[r["verdict"]] += 1
        return out

    @property
    def exit_code(self) -> int:
        return EXIT_FAIL if self.summary["fail"] else EXIT_OK

    def to_dict(self, timestamp: bool) -> dict:
        d = {"command": self.command, "config": _clean(self.config), "records": self.records,
             "summary": self.summary}
        if timestamp:
            d["timestamp"] = datetime.now(timezone.utc).isoformat()
        return d

    def to_json(self, timestamp: bool) -> str:
        return json.dumps(self.to_dict(timestamp), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "anchor", "verdict", "key", "value"])
        for r in self.records:
            items = sorted(r["numbers"].items()) or [("", "")]
            for k, v in items:
                w.writerow([r["name"], r["anchor"], r["verdict"], k, _fmt(v)])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


# ---------------------------------------------------------------------------
# inputs


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path} must hold a JSON object")
    return data


def load_space(path: Optional[str]) -> Optional[SnSpace]:
    if path is None:
        return None
    try:
        return SnSpace.from_dict(_load_json(path))
    except InputError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"malformed space in {path}: {exc}") from exc


def load_set(path: Optional[str], space: Optional[SnSpace]):
    """Returns (set, linear relation or None)."""
    if path is None:
        return None, None
    data = _load_json(path)
    kind = data.get("kind")
    try:
        if kind == "linear-relation":
            rel = LinearRelation.from_dict(data)
            sp = space or product_space(rel.n)
            return rel.as_set(sp), rel
        if kind in MAP_KINDS:
            S = map_from_dict(data)
            return S.graph_set(space), None
        if kind == "sequence-operator":
            return set_from_dict(None, data), None
        if space is None:
            raise InputError(f"set kind {kind!r} needs --space")
        A = set_from_dict(space, data)
    except InputError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"malformed set in {path}: {exc}") from exc
    rel = None
    if isinstance(A, LinearSubspace) and A.space.is_product and not np.any(A.origin) \
            and np.allclose(A.space.L, product_space(A.space.n).L):
        rel = LinearRelation(A.space.n, A.basis)
    return A, rel


def parse_grid(text: Optional[str], dim: int) -> Optional[np.ndarray]:
    """'x0:x1:step,...' with one axis per coordinate; a single axis is reused."""
    if text is None:
        return None
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise InputError("empty grid")
    axes = []
    for p in parts:
        try:
            lo, hi, step = (float(t) for t in p.split(":"))
        except ValueError as exc:
            raise InputError(f"bad grid axis {p!r}") from exc
        if not (step > 0 and hi >= lo):
            raise InputError(f"empty grid axis {p!r}")
        axes.append((lo, hi, step))
    if len(axes) == 1:
        axes = axes * dim
    if len(axes) != dim:
        raise InputError(f"grid has {len(axes)} axes, space has dimension {dim}")
    if math.prod(int((hi - lo) / st + 1e-9) + 1 for lo, hi, st in axes) > 2_000_000:
        raise InputError("grid too large")
    return lattice(axes)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SNMONO_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items) -> list:
    """Ordered map over items, fanned out over SNMONO_THREADS workers."""
    k = _threads()
    if k == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, report: Report) -> None:
    space = load_space(args.space)
    A, _ = load_set(args.set, space)
    if space is None and A is not None:
        space = A.space
    if space is None:
        raise InputError("validate needs --space or --set")
    rep = validate_sn(space, args.tol)
    report.check("sn-map", "symmetric-nonexpansive-map", rep.ok, condition=rep.condition,
                 opnorm=rep.opnorm, asymmetry=rep.asymmetry, exact_norm=rep.exact_norm,
                 witness=rep.witness)
    if A is not None:
        pos = is_L_positive(A, seed=args.seed)
        report.check("l-positivity", "pairwise-nonnegative-quadratic-form", pos.ok, min_q=pos.min_q,
                     exhaustive=pos.exhaustive)


def _default_grid(A: LPositiveSet) -> np.ndarray:
    if isinstance(A, SequenceGraph):
        return np.vstack([np.zeros(A.space.dim), A.e_star(1.0)])
    from .positive_sets import default_probe_grid
    side = 5 if A.space.dim <= 6 else 3
    return default_probe_grid(A.space, side=side)


def cmd_quasidense(args, report: Report) -> None:
    space = load_space(args.space)
    A, rel = load_set(args.set, space)
    if A is None:
        raise InputError("quasidense needs --set")
    grid = parse_grid(args.grid, A.space.dim)
    if grid is None:
        grid = _default_grid(A)
    budget = Budget(seed=args.seed)
    tol = args.tol
    cert = certify_quasidense(A, grid, budget, tol)
    verdict = {"quasidense-on-grid": "pass", "refuted": "fail"}.get(cert.verdict, "inconclusive")
    report.add("gap-certificate", "quasidensity-gap", verdict, certificate=cert.verdict,
               max_gap=cert.max_gap, lower_bound=cert.lower_bound, witness=cert.witness,
               probes=len(cert.records))
    routes = {"gap": cert.verdict == "quasidense-on-grid"}
    if rel is not None and rel.is_monotone():
        ps = sup_s_on_polar(rel)
        bb = brezis_browder_check(rel, strict=False)
        routes["polar"] = ps.quasidense
        report.add("polar-eigen-test", "polar-subspace-sup-criterion", "pass" if ps.quasidense else "fail",
                   sup=ps.value, adjoint_monotone=bb.adjoint_monotone,
                   adjoint_maximal=bb.adjoint_maximal, consistent=bb.consistent)
    if A.space.is_product:
        al = quasidense_via_alignment(A, grid, budget, tol, cross_check=False)
        routes["alignment"] = al.verdict == "consistent-with-quasidense"
        report.add("alignment-route", "negative-alignment-criterion", "info", outcome=al.verdict)
    if cert.verdict != "no-gap-found-within-budget":
        agree = len(set(routes.values())) == 1
        report.check("route-agreement", "cross-check", agree, **routes)


def _demo_tail(args, report: Report) -> None:
    G = SequenceGraph("tail", args.N)
    c = G.e_star(1.0)
    best, x, seen = G.minimize_gap(c, restarts=args.restarts, seed=args.seed, record=True)
    lo = min(seen)
    report.check("tail-lower-bound", "tail-operator-quarter-bound", lo >= 0.25 - 1e-9,
                 N=args.N, restarts=args.restarts, min_evaluated=lo, evaluations=len(seen))
    report.check("tail-near-tight", "tail-operator-quarter-bound-empirical", best <= 0.26, best=best,
                 sigma=float(np.sum(x)))
    cert = certify_quasidense(G, np.vstack([c]), Budget(seed=args.seed))
    report.check("tail-not-quasidense", "tail-operator-not-quasidense", cert.verdict == "refuted",
                 certificate=cert.verdict, lower_bound=cert.lower_bound)


def _random_finite_support(rng, k: int, N: int) -> np.ndarray:
    X = np.zeros((k, N))
    for i in range(k):
        m = int(rng.integers(1, N + 1))
        X[i, :m] = rng.standard_normal(m) * rng.uniform(0.1, 3.0)
    return X


def _demo_heads_and_tails(args, report: Report) -> None:
    rng = np.random.default_rng(args.seed)
    X = _random_finite_support(rng, args.samples, args.N)
    diff, slack, float_diff = 0.0, math.inf, 0.0
    for x in X:
        xt, xh = pairing_exact(x, 1.0, 0.0), pairing_exact(x, 0.0, 1.0)
        diff = max(diff, abs(xh - xt))
        slack = min(slack, xt - 0.5 * math.fsum(x) ** 2)
        float_diff = max(float_diff, abs(float(x @ head(x)) - float(x @ tail(x))))
    report.check("heads-equal-tails", "head-tail-pairing-identity", diff <= 1e-12,
                 samples=args.samples, N=args.N, max_abs_difference=diff)
    report.add("heads-equal-tails-float64", "head-tail-pairing-identity", "info",
               max_abs_difference=float_diff)
    report.check("tail-pairing-bound", "tail-pairing-half-sigma-squared", slack >= -1e-12, min_slack=slack)


def _demo_gossez(args, report: Report) -> None:
    rng = np.random.default_rng(args.seed)
    X = _random_finite_support(rng, args.samples, args.N)
    worst = max(abs(float(x @ combo(1.0, -1.0, x))) for x in X)
    report.check("gossez-skew", "gossez-operator-monotone", worst <= 1e-9, max_abs_pairing=worst)
    for lam, mu in ((1.0, -1.0), (-1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (2.0, 1.0), (1.0, 2.0)):
        G = SequenceGraph("combo", args.N, lam, mu)
        c = G.e_star(1.0)
        best, _, _ = G.minimize_gap(c, restarts=3, seed=args.seed)
        mono = min(float(x @ combo(lam, mu, x)) for x in X[:50])
        report.add(f"combo-{lam:g}-{mu:g}", "two-quadrants", "info", lam=lam, mu=mu,
                   min_pairing=mono, gap_at_e_star=best, predicted_quasidense=lam - mu <= 0)


def _rockafellar_maps() -> list[tuple[str, SubdiffMap]]:
    return [("half-square", SubdiffMap(Quadratic(np.eye(1)))),
            ("abs", SubdiffMap(NormPower(1, 1.0, 1))),
            ("indicator-unit-interval", SubdiffMap(Indicator(1, lo=[0.0], hi=[1.0])))]


def _demo_rockafellar(args, report: Report) -> None:
    grid = lattice([(-2.0, 2.0, 0.5)] * 2)
    for name, S in _rockafellar_maps():
        gaps = [resolvent_gap_oracle(S, p[:1], p[1:])[0] for p in grid]
        report.check(f"subdifferential-{name}", "subdifferential-quasidense", max(gaps) <= 1e-6,
                     max_gap=max(gaps), probes=len(grid))


def _demo_alignment(args, report: Report) -> None:
    for case in alignment_library():
        r = alignment_tau(case["map"], case["w"], case["wstar"], case["alpha"], case["beta"],
                          Budget(seed=args.seed), restarts=args.restarts)
        report.check(f"tau-{case['name']}", "negative-alignment-uniqueness",
                     r.spread <= 1e-4 and not r.flagged, tau=r.tau, spread=r.spread,
                     alpha=r.alpha, beta=r.beta, residual=r.residual)


def cmd_demo(args, report: Report) -> None:
    {"tail": _demo_tail, "heads-and-tails": _demo_heads_and_tails, "gossez": _demo_gossez,
     "rockafellar": _demo_rockafellar, "alignment": _demo_alignment}[args.name](args, report)


def cmd_sweep(args, report: Report):
    space = load_space(args.space)
    A, _ = load_set(args.set, space)
    if A is None:
        raise InputError("sweep needs --set")
    if args.grid is None:
        raise InputError("sweep needs --grid")
    grid = parse_grid(args.grid, A.space.dim)
    budget = Budget(seed=args.seed)
    fn = {"phi": lambda p: phi(A, p, budget), "theta": lambda p: theta(A, p, budget),
          "gap": lambda p: A.gap(p, budget).value}[args.what]
    values = _pmap(fn, list(grid))
    return grid, values


def sweep_csv(grid: np.ndarray, values: list, what: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = ["x", "y"] if grid.shape[1] == 2 else [f"b{i}" for i in range(grid.shape[1])]
    w.writerow(names + [what])
    for p, v in zip(grid, values):
        w.writerow([repr(float(t)) for t in p] + [repr(float(v))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--space", help="SN space JSON {dim, norm, L}")
    common.add_argument("--set", help="set, relation or map JSON")
    common.add_argument("--grid", help="probe grid 'x0:x1:step,...'")
    common.add_argument("--tol", type=float, default=None, help="verdict tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--no-timestamp", action="store_true", help="omit the report timestamp")
    p = _Parser(prog="snmono", description="Verification reports for SN spaces and monotone sets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="check the SN map and L-positivity")
    sub.add_parser("quasidense", parents=[common], help="certify quasidensity on a probe grid")
    d = sub.add_parser("demo", parents=[common], help="canned reproductions")
    d.add_argument("name", choices=DEMOS)
    d.add_argument("--N", type=int, default=None, help="sequence truncation length")
    d.add_argument("--restarts", type=int, default=10)
    d.add_argument("--samples", type=int, default=1000)
    s = sub.add_parser("sweep", parents=[common], help="evaluate a function over a 2-D grid")
    s.add_argument("--what", choices=("phi", "theta", "gap"), default="phi")
    return p


def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "no_timestamp")}
    return cfg


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if args.tol is not None and not args.tol > 0:
        print("snmono: error: --tol must be positive", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "demo" and args.N is None:
        args.N = 200 if args.name == "tail" else 100
    report = Report(args.command, _config(args))
    try:
        if args.command == "sweep":
            grid, values = cmd_sweep(args, report)
            if args.format == "json":
                text = json.dumps(_clean({"what": args.what, "points": grid, "values": values}),
                                  sort_keys=True, indent=2) + "\n"
            else:
                text = sweep_csv(grid, values, args.what)
            _emit(text, args.out)
            return EXIT_OK
        {"validate": cmd_validate, "quasidense": cmd_quasidense, "demo": cmd_demo}[args.command](args, report)
    except InputError as exc:
        print(f"snmono: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = report.to_csv() if args.format == "csv" else report.to_json(not args.no_timestamp)
    _emit(text, args.out)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
