"""Acceptance criteria, one PASS/FAIL line each, on the desk-scale pipeline.

The desk run (11 classes, 500 genuine + 550 tampered traces, 500 points,
5 folds, 100 trees) is executed twice through the CLI; the second run only
feeds the determinism check.
"""
import json
import math
import time

import numpy as np
import pytest

from waldo.cli import main
from waldo.datagen import N_CLASSES, read_csv
from waldo.dtw import dtw_distance
from waldo.forest import RandomForestClassifier
from waldo.model_selection import permutation_control
from waldo.oracle import check_dtw, check_gini_and_splits, check_resonances, check_s11_roundtrip
from waldo.oracle import check_tree_shap
from waldo.pdn import FrequencyGrid

pytestmark = pytest.mark.acceptance

DESK = ["--seed", "0"]
ARTIFACTS = ("dataset.csv", "model.json", "shap_summary.csv")


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    runs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        assert main(["run-all", "--out", str(out), *DESK]) == 0
        runs.append((out, time.perf_counter() - t0))
    return runs


def _report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    assert ok, detail


def test_1_desk_classification(desk, capsys):
    out, wall = desk[0]
    metrics = json.loads((out / "metrics.json").read_text())
    s = metrics["summary"]
    recall = s["pooled_recall"]
    ok = (len(metrics["classes"]) == N_CLASSES and len(metrics["folds"]) == 5
          and s["mean_accuracy"] >= 0.90 and s["accuracy_spread"] <= 0.03
          and min(recall) >= 0.80 and wall <= 600)
    _report(capsys, 1, ok, f"mean accuracy {s['mean_accuracy']:.4f} (>= 0.90), "
            f"spread {100 * s['accuracy_spread']:.2f} pts (<= 3), min class recall "
            f"{min(recall):.4f} (>= 0.80), wall {wall:.1f} s (<= 600)")


def test_2_shap_exactness(desk, capsys):
    oracle = check_tree_shap(n_trees=200, atol=1e-9)
    local = json.loads((desk[0][0] / "concordance.json").read_text())
    err = local["local_accuracy_max_error"]
    ok = oracle.passed and oracle.cases >= 200 and err <= 1e-6
    _report(capsys, 2, ok, f"{oracle.cases} random trees vs brute force at 1e-9: "
            f"{len(oracle.failures)} failed; desk local accuracy max error {err:.2e} (<= 1e-6)")


def test_3_physics_suite(capsys):
    results = [check_s11_roundtrip(), check_resonances(), check_gini_and_splits()]
    ok = all(r.passed for r in results) and results[0].cases >= 10_000
    _report(capsys, 3, ok, "; ".join(f"{r.name}: {r.cases - len(r.failures)}/{r.cases}"
                                     for r in results))


def test_4_attribution_physics_concordance(desk, capsys):
    conc = json.loads((desk[0][0] / "concordance.json").read_text())
    hit = conc["concordant_classes"]
    missing = sorted((int(c) for c, v in conc["classes"].items() if not v["concordant"]))
    ok = conc["tampered_classes"] == 10 and hit >= 9
    _report(capsys, 4, ok, f"{hit}/10 tampered classes have a top-10 frequency in their "
            f"top-decile deviation band (>= 9); non-concordant: {missing or 'none'}")


def test_5_determinism(desk, capsys):
    (a, _), (b, _) = desk
    same = {name: (a / name).read_bytes() == (b / name).read_bytes() for name in ARTIFACTS}
    _report(capsys, 5, all(same.values()),
            ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))


def test_6_permutation_control(desk, capsys):
    data = read_csv(desk[0][0] / "dataset.csv", FrequencyGrid(points=500))
    acc = permutation_control(data.rows, data.labels, RandomForestClassifier(100), k=5, seed=0)
    chance = 1 / N_CLASSES
    _report(capsys, 6, abs(acc - chance) <= 0.05,
            f"label-permuted accuracy {acc:.4f}, chance {chance:.4f} (+/- 0.05)")


def test_7_dtw(capsys):
    rng = np.random.default_rng(7)
    seq = rng.random(12)
    battery = check_dtw(cases=100)
    ok = (dtw_distance(seq, seq) == 0 and dtw_distance([0, 0], [1]) == 2 and battery.passed
          and all(math.isclose(dtw_distance(a, b), dtw_distance(b, a), abs_tol=1e-12)
                  for a, b in (rng.random((2, 9)) for _ in range(100))))
    _report(capsys, 7, ok, f"identity 0, [0,0] vs [1] = 2, {battery.cases} enumeration and "
            f"symmetry cases: {len(battery.failures)} failed")
