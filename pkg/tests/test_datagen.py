import numpy as np
import pytest

from waldo.datagen import (
    GENUINE_PARTS,
    MULTIPLIERS,
    N_CLASSES,
    TAMPER_TABLE,
    ClassSpec,
    build_plan,
    class_name,
    file_digest,
    generate_dataset,
    full_plan,
    read_csv,
    sample_genuine,
    sample_tampered,
    write_csv,
)
from waldo.exceptions import DataError, DomainError
from waldo.pdn import DEFAULT_CENSUS, FrequencyGrid, nominal_instance

SMALL = FrequencyGrid(points=40)


def _part(pid):
    return next(c for c in DEFAULT_CENSUS if c.part_id == pid)


def test_plan_accounting():
    plan = build_plan()
    assert sum(s.traces for s in plan) == 1050
    assert sum(s.traces for s in plan if s.class_id == 0) == 500
    assert [s.class_id for s in plan if s.class_id] == list(range(1, 11))
    full = full_plan()
    assert sum(s.traces for s in full) == 15000


def test_class_ids_follow_table():
    for spec in build_plan():
        if spec.class_id:
            assert (spec.target_part, spec.tampered_field) == TAMPER_TABLE[spec.class_id]
            assert spec.value_multipliers == MULTIPLIERS
            assert spec.variation_halfwidth == 0.20
    assert class_name(0) == "Genuine"
    assert len({class_name(c) for c in range(N_CLASSES)}) == N_CLASSES


def test_genuine_draws_stay_in_band_and_touch_one_part():
    rng = np.random.default_rng(0)
    nominal = nominal_instance().branches
    for pid in GENUINE_PARTS:
        inst = sample_genuine(pid, rng)
        spec = _part(pid)
        for b, n in zip(inst.branches, nominal):
            if b.part_id != pid:
                assert b == n
                continue
            assert abs(b.value / spec.value - 1) <= 0.10
            assert abs(b.esl / spec.esl - 1) <= 0.10
            if spec.kind == "capacitor":
                assert abs(b.esr / spec.esr - 1) <= 0.10
            else:
                assert abs(b.cp / spec.cp - 1) <= 0.10


def test_zero_halfwidth_is_nominal():
    inst = sample_genuine("C0603-CAP-ASM", np.random.default_rng(1), halfwidth=0)
    assert inst == nominal_instance()


def test_tampered_draw_uses_one_multiplier():
    spec = ClassSpec(1, "C0402-CAP-ASM-1", "esl", MULTIPLIERS, 0.20, 1)
    inst = sample_tampered(spec, np.random.default_rng(2))
    hits = [b for b in inst.branches if b.part_id == "C0402-CAP-ASM-1"]
    ratios = {round(b.value / 0.1e-6) for b in hits}
    assert len(ratios) == 1 and ratios <= set(MULTIPLIERS)
    assert all(abs(b.esl / 0.4e-9 - 1) <= 0.20 for b in hits)
    assert all(b.esr == 20e-3 for b in hits)


def test_multiplier_histogram_roughly_uniform():
    spec = ClassSpec(2, "C0402-CAP-ASM-2", "esr", MULTIPLIERS, 0.20, 1)
    rng = np.random.default_rng(3)
    mults = [round(sample_tampered(spec, rng).branches[25].value / 2.2e-6)
             for _ in range(3000)]
    counts = np.array([mults.count(m) for m in MULTIPLIERS])
    assert np.all(np.abs(counts / 3000 - 1 / 3) <= 0.05)


def test_degenerate_multiplier_leaves_value():
    spec = ClassSpec(8, "C0805-CAP-ASM", "esr", (1,), 0.20, 1)
    inst = sample_tampered(spec, np.random.default_rng(4))
    assert all(b.value == 10e-6 for b in inst.branches if b.part_id == "C0805-CAP-ASM")


def test_class_spec_invariants():
    with pytest.raises(DomainError):
        ClassSpec(0, "C0603-CAP-ASM", None, (10,), 0.10, 5)
    with pytest.raises(DomainError):
        ClassSpec(3, "C0603-CAP-ASM", "esl", (), 0.20, 5)


def test_dataset_is_schedule_independent():
    plan = build_plan(3, 2)
    a = generate_dataset(plan, SMALL, master_seed=7)
    b = generate_dataset(plan, SMALL, master_seed=7, n_jobs=2)
    c = generate_dataset(build_plan(3, 2, classes=[0, 4]), SMALL, master_seed=7)
    assert np.array_equal(a.rows, b.rows)
    # dropping classes does not reshuffle the surviving rows
    assert np.array_equal(a.rows[a.labels == 4], c.rows[c.labels == 4])
    assert a.class_counts() == {0: 15, **{k: 2 for k in range(1, 11)}}


def test_csv_roundtrip_and_digest(tmp_path):
    m = generate_dataset(build_plan(2, 1), SMALL, master_seed=0)
    digest = write_csv(m, tmp_path / "d.csv")
    assert digest == file_digest(tmp_path / "d.csv")
    back = read_csv(tmp_path / "d.csv", SMALL)
    assert np.array_equal(back.labels, m.labels)
    np.testing.assert_allclose(back.rows, m.rows, rtol=1e-11)
    assert write_csv(back, tmp_path / "e.csv") == digest


def test_csv_schema_errors(tmp_path):
    m = generate_dataset(build_plan(2, 1), SMALL, master_seed=0)
    write_csv(m, tmp_path / "d.csv")
    with pytest.raises(DataError):
        read_csv(tmp_path / "d.csv", FrequencyGrid(points=41))
    with pytest.raises(DataError):
        read_csv(tmp_path / "d.csv", FrequencyGrid(2e6, 1e9, 40))
    lines = (tmp_path / "d.csv").read_text().splitlines()
    (tmp_path / "bad.csv").write_text("\n".join(lines[:2] + [lines[2] + ",0.5"]) + "\n")
    with pytest.raises(DataError):
        read_csv(tmp_path / "bad.csv", SMALL)
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(DataError):
        read_csv(tmp_path / "empty.csv", SMALL)
