"""Acceptance suite: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v` (lines appear in the terminal
summary) or `python3 tests/test_acceptance.py` for the plain listing.
"""

import json
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from snmono.alignment import (alignment_library, alignment_tau, midpoint_gap_bound,
                              norm_gap_inequality, quasidense_via_alignment,
                              random_monotone_cloud, sqrt_gap_bound, zagrodny_check)
from snmono.convex_fn import NormPower, Quadratic, project_to_coincidence
from snmono.fitzpatrick import FitzpatrickFn, extension_membership, identity_phi, phi
from snmono.linear_relations import adjoint, random_monotone_relation, sup_s_on_polar
from snmono.mono_ops import (LinearMap, SubdiffMap, op_sum, pairing_exact, parallel_sum,
                             parallel_sum_check, sum_identity_check)
from snmono.positive_sets import (OperatorGraph, SequenceGraph, certify_quasidense,
                                  default_probe_grid)
from snmono.sn_core import (coordinate_swap_space, negated_identity_space, product_space,
                            r_L, s_L, scaled_identity_space)

DATA = Path(__file__).resolve().parent.parent / "data"
RESULTS = []


def record(k, title, ok, detail):
    line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def tail_bound():
    G = SequenceGraph("tail", 200)
    c = G.e_star(1.0)
    best, _, seen = G.minimize_gap(c, restarts=50, seed=0, record=True)
    lo = min(seen)
    ok = lo >= 0.25 - 1e-9 and best <= 0.26
    return ok, f"min evaluated {lo:.12f} over {len(seen)} evaluations, best {best:.6f}"


def s_equals_pairing():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 6))
        b = rng.standard_normal(2 * n) * rng.uniform(0.1, 5)
        worst = max(worst, abs(s_L(product_space(n), b) - b[:n] @ b[n:]))
    return worst <= 1e-6, f"max |s_L - pairing| = {worst:.2e}"


def closed_forms():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        lam = rng.uniform(0.05, 1.0)
        n = int(rng.integers(1, 5))
        b = rng.standard_normal(n) * 3
        b3 = rng.standard_normal(3) * 3
        nb = float(b @ b)
        errs = [
            r_L(scaled_identity_space(n, lam), b) - 0.5 * (1 + lam) * nb,
            r_L(negated_identity_space(n, lam), b) - 0.5 * (1 - lam) * nb,
            r_L(coordinate_swap_space(lam), b3)
            - 0.5 * (b3[0] ** 2 + 2 * lam * b3[0] * b3[1] + b3[1] ** 2 + (1 + lam) * b3[2] ** 2),
            s_L(scaled_identity_space(n, lam), b) - 0.5 * nb / lam,
        ]
        scale = 1 + nb / lam + float(b3 @ b3)
        worst = max(worst, max(abs(e) for e in errs) / scale)
    return worst <= 1e-10, f"max relative error {worst:.2e}"


def heads_and_tails():
    rng = np.random.default_rng(3)
    d1, d2 = 0.0, math.inf
    for _ in range(1000):
        x = np.zeros(100)
        m = int(rng.integers(1, 101))
        x[:m] = rng.standard_normal(m) * rng.uniform(0.1, 3)
        d1 = max(d1, abs(pairing_exact(x, 0.0, 1.0) - pairing_exact(x, 1.0, 0.0)))
        d2 = min(d2, pairing_exact(x) - 0.5 * math.fsum(x) ** 2)
    return d1 <= 1e-12 and d2 >= -1e-12, f"max |<x,Hx> - <x,Tx>| = {d1:.1e}, min excess {d2:.3e}"


def relation_oracles():
    rng = np.random.default_rng(4)
    mismatches = 0
    grid = default_probe_grid(product_space(3), 5, 0.5)
    for _ in range(200):
        A = random_monotone_relation(3, rng, int(rng.integers(0, 4)))
        eig = sup_s_on_polar(A).quasidense
        adj = adjoint(A).is_monotone()
        cert = certify_quasidense(A.as_set(), grid).quasidense
        mismatches += not (eig == adj == cert)
    return mismatches == 0, f"{mismatches} disagreements on 200 relations ({len(grid)} probes each)"


def fitzpatrick_identities():
    G = OperatorGraph(product_space(1), [[1.0]])
    xs = np.linspace(-2, 2, 41)
    worst = max(abs(phi(G, [x, y]) - identity_phi(x, y)) for x in xs for y in xs)
    rng = np.random.default_rng(5)
    bad = 0
    for i in range(100):
        x = rng.uniform(-2, 2)
        y = x if i % 2 == 0 else x + rng.choice([-1, 1]) * rng.uniform(1e-3, 2)
        res = extension_membership(G, [x, y], tol=1e-8)
        bad += res.member != (i % 2 == 0) or not res.routes_agree
    return worst <= 1e-8 and bad == 0, f"max phi error {worst:.1e}, {bad} membership mismatches"


def projection():
    G = OperatorGraph(product_space(1), [[1.0]])
    _, tr = project_to_coincidence(product_space(1), FitzpatrickFn(G), [1.0, -1.0], delta=0.1)
    ok = tr.coincidence_residual <= 1e-6 and tr.step_bounds_hold() and tr.distance <= tr.N_c + 3
    return ok, (f"residual {tr.coincidence_residual:.1e}, {len(tr.steps)} steps, "
                f"|a - c| = {tr.distance:.4f} vs N_c + 3 = {tr.N_c + 3:.4f}")


def zagrodny_suite():
    rng = np.random.default_rng(6)
    norms = ["euclidean", "ell1", "ellinf"]
    zmin = math.inf
    for i in range(1000):
        n = int(rng.integers(1, 5))
        A = random_monotone_cloud(n, int(rng.integers(2, 8)), rng, norms[i % 3])
        a = A.points[rng.integers(len(A.points))]
        b = rng.standard_normal(2 * n) * rng.uniform(0.1, 4)
        zmin = min(zmin, zagrodny_check(A.points, a, b, A.space))
    nmin = math.inf
    for i in range(1000):
        sp = product_space(int(rng.integers(1, 5)), norms[i % 3])
        d, e = rng.standard_normal((2, sp.dim)) * rng.uniform(0.1, 5)
        nmin = min(nmin, norm_gap_inequality(sp, d, e) / (1 + sp.norm(d) + sp.norm(e)))
    mmin, smin, done = math.inf, math.inf, 0
    sp = product_space(2)
    while done < 1000:
        M = rng.standard_normal((4, 4))
        P, g = M @ M.T + np.eye(4), rng.standard_normal(4)
        # the constant makes min(f - q_L) = 0, so f touches q_L at one point
        f = Quadratic(sp.L + P, g, 0.5 * g @ np.linalg.solve(P, g))
        a, c = rng.standard_normal((2, 4)) * 2
        mmin = min(mmin, midpoint_gap_bound(sp, f, a, c))
        smin = min(smin, sqrt_gap_bound(sp, f, a, c))
        done += 1
    ok = min(zmin, nmin, mmin, smin) >= -1e-9
    return ok, (f"min slack: Zagrodny {zmin:.2e}, norm gap {nmin:.2e}, "
                f"midpoint {mmin:.2e}, sqrt {smin:.2e}")


def alignment():
    lib = alignment_library()
    spread = 0.0
    tau_id = None
    for case in lib:
        res = alignment_tau(case["map"], case["w"], case["wstar"], case["alpha"], case["beta"])
        spread = max(spread, res.spread)
        if case["name"] == "identity-off-graph":
            tau_id = res.tau
    disagree = 0
    for case in lib:
        v = quasidense_via_alignment(case["map"])
        disagree += not v.agrees
    ok = spread <= 1e-4 and abs(tau_id - 1.0) <= 1e-4 and disagree == 0
    return ok, f"max spread {spread:.1e}, identity tau {tau_id:.8f}, {disagree} route disagreements"


def sum_theorems():
    rng = np.random.default_rng(8)
    pairs = [
        (LinearMap([[1.0]]), SubdiffMap(Quadratic(np.array([[2.0]])))),
        (SubdiffMap(NormPower(1)), LinearMap([[1.0]])),
        (SubdiffMap(NormPower(1)), SubdiffMap(Quadratic(np.array([[0.5]])))),
    ]
    bad = mixed = 0
    for S, T in pairs:
        on = op_sum(S, T).sample(25, rng)
        off = on + np.column_stack([np.zeros(25), rng.choice([-1, 1], 25) * rng.uniform(0.5, 2, 25)])
        rep = sum_identity_check(S, T, np.vstack([on, off]))
        bad += sum(not r.agree for r in rep.records)
        mixed += 0 < sum(r.direct for r in rep.records) < 50
    ident = LinearMap([[1.0]])
    P = parallel_sum(ident, ident)
    x = rng.uniform(-2, 2, 50)
    probes = np.column_stack([x, np.where(np.arange(50) % 2 == 0, x / 2, x / 2 + rng.uniform(0.1, 1, 50))])
    half = sum(P.contains([p[0]], [p[1]], 1e-6) != (abs(p[1] - p[0] / 2) <= 1e-6) for p in probes)
    prep = parallel_sum_check(ident, ident, probes, tol=1e-6)
    bad_par = half + sum(not r.agree for r in prep.records)
    ok = bad == 0 and bad_par == 0 and mixed == 3
    return ok, f"{bad} sum disagreements over 150 probes, {bad_par} parallel-sum"


def cli_contract():
    cmd = [sys.executable, "-m", "snmono.cli"]
    demo = cmd + ["demo", "tail", "--seed", "7", "--no-timestamp"]
    a = subprocess.run(demo, capture_output=True)
    b = subprocess.run(demo, capture_output=True)
    ident = str(DATA / "identity_graph.json")
    with tempfile.TemporaryDirectory() as d:
        bad = Path(d) / "bad.json"
        bad.write_text("{not json")
        codes = [
            subprocess.run(cmd + ["quasidense", "--set", ident], capture_output=True).returncode,
            subprocess.run(cmd + ["quasidense", "--set", str(DATA / "zero_relation.json")],
                           capture_output=True).returncode,
            subprocess.run(cmd + ["validate", "--space", str(bad)], capture_output=True).returncode,
        ]
    same = a.stdout == b.stdout and len(a.stdout) > 0
    json.loads(a.stdout)
    ok = same and codes == [0, 1, 2] and a.returncode == 0
    return ok, f"demo byte-identical: {same}, exit codes pass/refute/malformed = {codes}"


CRITERIA = [
    (1, "tail-operator quarter bound", tail_bound),
    (2, "s_L equals the duality pairing", s_equals_pairing),
    (3, "closed forms of r_L and s_L", closed_forms),
    (4, "heads equal tails, tail pairing bound", heads_and_tails),
    (5, "eigen-test, adjoint monotonicity and certification agree", relation_oracles),
    (6, "Fitzpatrick identities on the identity graph", fitzpatrick_identities),
    (7, "projection to the coincidence set", projection),
    (8, "Zagrodny suite", zagrodny_suite),
    (9, "negative alignment", alignment),
    (10, "sum and parallel-sum identities", sum_theorems),
    (11, "CLI determinism and exit codes", cli_contract),
]


@pytest.mark.parametrize("k,title,fn", CRITERIA, ids=[f"criterion_{k}" for k, _, _ in CRITERIA])
def test_criterion(k, title, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    record(k, title, ok, f"{detail} [{time.perf_counter() - t0:.1f} s]")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k, title, fn in CRITERIA:
        t0 = time.perf_counter()
        ok, detail = fn()
        failed += not record(k, title, ok, f"{detail} [{time.perf_counter() - t0:.1f} s]")
    sys.exit(1 if failed else 0)
