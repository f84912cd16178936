"""Self-contained verification batteries behind ``waldo oracle-check``.

Each battery pits an implementation against an independent route
(closed-form physics, subset enumeration, path enumeration) and returns a
:class:`CheckResult`; nothing here raises on a failed comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dtw import dtw_align, dtw_distance, path_cost
from .exceptions import WaldoError
from .explain import brute_force_shap, expected_value, tree_shap
from .forest import _Builder, Tree, best_split, gini
from .pdn import (
    BoardModel,
    Branch,
    FrequencyGrid,
    PdnInstance,
    find_resonances,
    nominal_instance,
    s11_to_z,
    series_resonance,
    sweep,
    z_to_s11,
)


@dataclass
class CheckResult:
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, msg):
        self.failures.append(msg)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  first failure: {self.failures[0]}" if self.failures else ""
        return f"[{status}] {self.name}: {self.cases} cases, {len(self.failures)} failed{extra}"


def random_tree(rng: np.random.Generator, n_features: int = 8, max_depth: int = 4,
                n_classes: int = 3, split_prob: float = 0.75) -> Tree:
    """Random tree with conserved integer covers, for oracle comparisons."""
    b = _Builder(n_classes)

    def grow(depth, cover):
        if depth < max_depth and cover >= 2 and rng.random() < split_prob:
            node = b.add(np.zeros(n_classes), cover)
            b.feature[node] = int(rng.integers(n_features))
            b.threshold[node] = float(rng.normal())
            left_cover = int(rng.integers(1, cover))
            b.left[node] = grow(depth + 1, left_cover)
            b.right[node] = grow(depth + 1, cover - left_cover)
            return node
        counts = rng.multinomial(cover, rng.dirichlet(np.ones(n_classes)))
        counts = counts.astype(float)
        return b.add(counts, cover)

    grow(0, int(rng.integers(20, 200)))
    tree = b.build(n_features)
    for i in range(tree.node_count - 1, -1, -1):
        if not tree.is_leaf(i):
            tree.value[i] = tree.value[tree.children_left[i]] + tree.value[tree.children_right[i]]
    return tree


def check_s11_roundtrip(n: int = 10_000, seed: int = 1) -> CheckResult:
    res = CheckResult("z <-> s11 round trip (rel 1e-9)")
    rng = np.random.default_rng(seed)
    z0 = 50.0
    z = 10 ** rng.uniform(-3, 3, n) * np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2, n))
    s = z_to_s11(z, z0)
    back = s11_to_z(s, z0)
    err = np.abs(back - z) / np.abs(z)
    res.cases = n
    if np.any(np.abs(s) > 1 + 1e-12):
        res.fail("|s11| > 1 for a passive load")
    bad = np.flatnonzero(err > 1e-9)
    for i in bad[:3]:
        res.fail(f"z={z[i]:.6g} relative error {err[i]:.3g}")
    for z_in, s_expect in ((z0, 0.0), (0.0, -1.0), (3 * z0, 0.5)):
        res.cases += 1
        if abs(z_to_s11(z_in, z0) - s_expect) > 1e-15:
            res.fail(f"z_to_s11({z_in}) != {s_expect}")
    return res


def _single_branch(c, l_total, esr=5e-3):
    board = BoardModel(c_plane=0.0, l_spread=0.0, r_plane=0.0, l_mount=0.0, vrm_r=None)
    return PdnInstance((Branch("C", "capacitor", c, esr, l_total, 0.0),), board)


def check_resonances(seed: int = 2, cases: int = 20) -> CheckResult:
    """Single series-RLC boards: the lone |S11| minimum sits on 1/(2 pi sqrt(LC))."""
    res = CheckResult("single-branch resonance vs closed form (one grid step)")
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid(1e6, 1e9, 2000)
    for _ in range(cases):
        c = 10 ** rng.uniform(-10, -7)
        l_total = 10 ** rng.uniform(-9.5, -8)
        f_expect = series_resonance(c, l_total)
        if not grid.start_hz + grid.step_hz < f_expect < grid.stop_hz - grid.step_hz:
            continue
        res.cases += 1
        # |S11| grows with |X| at fixed R, so the dip sits where X = 0
        mins = find_resonances(sweep(_single_branch(c, l_total), grid), grid)
        if len(mins) != 1 or abs(mins[0][0] - f_expect) > grid.step_hz:
            res.fail(f"C={c:.3g} L={l_total:.3g}: expected {f_expect:.6g} Hz, got {mins}")
    nominal = find_resonances(sweep(nominal_instance(), FrequencyGrid()), FrequencyGrid())
    res.cases += 1
    if not nominal or abs(nominal[0][0] - 470e6) > 40e6:
        res.fail(f"nominal fundamental {nominal[:1]} outside 470 +/- 40 MHz")
    return res


def check_gini_and_splits() -> CheckResult:
    res = CheckResult("Gini impurity and split selection")
    cases = [
        (gini([4, 4]), 0.5),
        (gini([7, 0, 0]), 0.0),
        (gini([1] * 11), 10 / 11),
    ]
    for got, want in cases:
        res.cases += 1
        if abs(got - want) > 1e-12:
            res.fail(f"gini {got} != {want}")
    res.cases += 1
    if best_split([[1], [2], [10], [11]], [0, 0, 1, 1]) != (0, 6.0):
        res.fail("1-D boundary split not at midpoint 6.0")
    res.cases += 1
    if best_split([[1], [2], [3]], [1, 1, 1]) is not None:
        res.fail("pure node produced a split")
    res.cases += 1
    X = np.array([[1, 1], [2, 2], [3, 3], [4, 4]], dtype=float)
    if best_split(X, [0, 0, 1, 1]) != (0, 2.5):
        res.fail("tie between identical features not resolved to feature 0")
    return res


def check_tree_shap(n_trees: int = 200, seed: int = 3, trees=None,
                    atol: float = 1e-9) -> CheckResult:
    """TreeSHAP against subset enumeration, plus the efficiency identity."""
    res = CheckResult(f"TreeSHAP vs brute-force enumeration (atol {atol:g})")
    rng = np.random.default_rng(seed)
    if trees is None:
        trees = [random_tree(rng, int(rng.integers(1, 13)), int(rng.integers(1, 5)),
                             int(rng.integers(2, 5))) for _ in range(n_trees)]
    for t, tree in enumerate(trees):
        x = rng.normal(size=tree.n_features)
        res.cases += 1
        try:
            fast = tree_shap(tree, x)
            slow = brute_force_shap(tree, x)
            base = expected_value(tree)
        except WaldoError as exc:
            res.fail(f"tree {t}: {exc}")
            continue
        err = np.max(np.abs(fast - slow))
        if not err <= atol:
            res.fail(f"tree {t}: max |tree_shap - brute| = {err:.3g}")
            continue
        out = tree.predict_proba(x[None, :])[0]
        if np.max(np.abs(base + fast.sum(axis=0) - out)) > 1e-9:
            res.fail(f"tree {t}: local accuracy violated")
    return res


def _enumerate_paths(n, m):
    """All monotone warping paths from (0, 0) to (n-1, m-1)."""
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < n and j + dj < m:
                for rest in walk(i + di, j + dj):
                    yield [(i, j)] + rest
    yield from walk(0, 0)


def dtw_brute_force(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return min(sum(abs(a[i] - b[j]) for i, j in p) for p in _enumerate_paths(len(a), len(b)))


def check_dtw(seed: int = 4, cases: int = 100) -> CheckResult:
    res = CheckResult("DTW vs warping-path enumeration")
    rng = np.random.default_rng(seed)
    res.cases += 2
    if dtw_distance([0, 0], [1]) != 2:
        res.fail("distance([0,0],[1]) != 2")
    seq = rng.random(7)
    if dtw_distance(seq, seq) != 0 or not np.array_equal(dtw_align(seq, seq),
                                                         np.column_stack([np.arange(7)] * 2)):
        res.fail("identical traces not at distance 0 on the diagonal")
    for _ in range(cases):
        a = rng.random(int(rng.integers(1, 6)))
        b = rng.random(int(rng.integers(1, 6)))
        res.cases += 1
        d = dtw_distance(a, b)
        if not math.isclose(d, dtw_brute_force(a, b), rel_tol=1e-12, abs_tol=1e-12):
            res.fail(f"distance mismatch for {a}, {b}")
        elif not math.isclose(d, dtw_distance(b, a), rel_tol=1e-12, abs_tol=1e-12):
            res.fail("asymmetric distance")
        elif not math.isclose(path_cost(a, b, dtw_align(a, b)), d, rel_tol=1e-12, abs_tol=1e-12):
            res.fail("aligned path cost differs from distance")
    return res


def run_all(shap_cases: int = 200) -> list[CheckResult]:
    return [
        check_s11_roundtrip(),
        check_resonances(),
        check_gini_and_splits(),
        check_tree_shap(shap_cases),
        check_dtw(),
    ]

