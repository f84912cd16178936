"""Genuine and tampered PDN populations and the labelled trace dataset."""
from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DataError, DomainError
from .pdn import (
    CAPACITOR,
    DEFAULT_BOARD,
    DEFAULT_CENSUS,
    BoardModel,
    Branch,
    ComponentSpec,
    FrequencyGrid,
    PdnInstance,
    sweep,
)

MULTIPLIERS = (10, 100, 1000)

# Tampered rows of the class table: class id -> (target part, varied parasitic).
TAMPER_TABLE = {
    1: ("C0402-CAP-ASM-1", "esl"),
    2: ("C0402-CAP-ASM-1", "esr"),
    3: ("C0402-CAP-ASM-2", "esl"),
    4: ("C0402-CAP-ASM-2", "esr"),
    5: ("C0603-CAP-ASM", "esl"),
    6: ("C0603-CAP-ASM", "esr"),
    7: ("C0805-CAP-ASM", "esl"),
    8: ("C0805-CAP-ASM", "esr"),
    9: ("0402-RES-ASM", "cp"),
    10: ("0402-RES-ASM", "esl"),
}

# Genuine subgroups, in table order.
GENUINE_PARTS = (
    "C0603-CAP-ASM",
    "C0402-CAP-ASM-1",
    "C0805-CAP-ASM",
    "C0402-CAP-ASM-2",
    "0402-RES-ASM",
)

N_CLASSES = 11


def class_name(class_id: int) -> str:
    if class_id == 0:
        return "Genuine"
    part, fld = TAMPER_TABLE[class_id]
    return f"{part}-T-{fld.upper()}"


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    target_part: str
    tampered_field: str | None = None
    value_multipliers: tuple[int, ...] = ()
    variation_halfwidth: float = 0.10
    traces: int = 100

    def __post_init__(self):
        if not 0 <= self.class_id < N_CLASSES:
            raise DomainError(f"class id {self.class_id} outside 0..10")
        genuine = self.class_id == 0
        if genuine != (not self.value_multipliers) or genuine != (self.tampered_field is None):
            raise DomainError("class 0 alone has no multipliers and no tampered field")
        if self.tampered_field not in (None, "esr", "esl", "cp"):
            raise DomainError(f"unknown parasitic {self.tampered_field!r}")
        if self.variation_halfwidth < 0 or self.traces < 0:
            raise DomainError("halfwidth and trace count must be >= 0")


def build_plan(genuine_traces: int = 100, tampered_traces: int = 55,
               classes: Sequence[int] | None = None,
               genuine_halfwidth: float = 0.10, tampered_halfwidth: float = 0.20,
               multipliers: Sequence[int] = MULTIPLIERS) -> list[ClassSpec]:
    """Class plan following the table: five genuine subgroups, then classes 1..10."""
    wanted = set(range(N_CLASSES) if classes is None else classes)
    plan = []
    if 0 in wanted:
        plan += [ClassSpec(0, part, None, (), genuine_halfwidth, genuine_traces)
                 for part in GENUINE_PARTS]
    for cid, (part, fld) in TAMPER_TABLE.items():
        if cid in wanted:
            plan.append(ClassSpec(cid, part, fld, tuple(multipliers), tampered_halfwidth,
                                  tampered_traces))
    return plan


def full_plan() -> list[ClassSpec]:
    return build_plan(genuine_traces=1500, tampered_traces=750)


def _census_map(census):
    return {c.part_id: c for c in census}


def _instance(census, board, overrides):
    branches = []
    for spec in census:
        drawn = overrides.get(spec.part_id)
        for k in range(spec.count):
            if drawn is None:
                branches.append(Branch(spec.part_id, spec.kind, spec.value, spec.esr, spec.esl,
                                       spec.cp, spec.site))
            else:
                branches.append(drawn[k])
    return PdnInstance(tuple(branches), board)


def _jitter(rng, nominal, halfwidth):
    if halfwidth == 0:
        return nominal
    return nominal * rng.uniform(1 - halfwidth, 1 + halfwidth)


def sample_genuine(subgroup_part: str, rng: np.random.Generator,
                   census: Sequence[ComponentSpec] = DEFAULT_CENSUS,
                   board: BoardModel = DEFAULT_BOARD, halfwidth: float = 0.10) -> PdnInstance:
    """Manufacturing-variation draw for one part number, all others nominal.

    Each instance of the part gets its value and both listed parasitics
    (ESL/ESR for capacitors, ESL/CP for resistors) drawn independently.
    """
    spec = _census_map(census).get(subgroup_part)
    if spec is None:
        raise DomainError(f"unknown part {subgroup_part!r}")
    drawn = []
    for _ in range(spec.count):
        value = _jitter(rng, spec.value, halfwidth)
        esl = _jitter(rng, spec.esl, halfwidth)
        if spec.kind == CAPACITOR:
            esr, cp = _jitter(rng, spec.esr, halfwidth), spec.cp
        else:
            esr, cp = spec.esr, _jitter(rng, spec.cp, halfwidth)
        drawn.append(Branch(spec.part_id, spec.kind, value, esr, esl, cp, spec.site))
    return _instance(census, board, {subgroup_part: drawn})


def sample_tampered(spec: ClassSpec, rng: np.random.Generator,
                    census: Sequence[ComponentSpec] = DEFAULT_CENSUS,
                    board: BoardModel = DEFAULT_BOARD) -> PdnInstance:
    """One multiplier for the whole part number; its tampered parasitic jittered per instance."""
    if spec.class_id < 1:
        raise DomainError("sample_tampered needs a tampered class")
    part = _census_map(census).get(spec.target_part)
    if part is None:
        raise DomainError(f"unknown part {spec.target_part!r}")
    mult = spec.value_multipliers[rng.integers(len(spec.value_multipliers))]
    drawn = []
    for _ in range(part.count):
        b = Branch(part.part_id, part.kind, part.value * mult, part.esr, part.esl, part.cp,
                   part.site)
        nominal = getattr(part, spec.tampered_field)
        drawn.append(replace(b, **{spec.tampered_field: _jitter(rng, nominal,
                                                                spec.variation_halfwidth)}))
    return _instance(census, board, {spec.target_part: drawn})


def _part_ordinal(census, part_id):
    return [c.part_id for c in census].index(part_id)


def trace_rng(master_seed: int, spec: ClassSpec, index: int,
              census: Sequence[ComponentSpec] = DEFAULT_CENSUS) -> np.random.Generator:
    """Stream keyed by (seed, class, subgroup part, index): independent of schedule."""
    return np.random.default_rng([master_seed, spec.class_id,
                                  _part_ordinal(census, spec.target_part), index])


@dataclass
class TraceMatrix:
    rows: np.ndarray
    labels: np.ndarray
    grid: FrequencyGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.rows.ndim != 2 or len(self.rows) != len(self.labels):
            raise DataError("rows must be 2-D with one label per row")
        if self.rows.shape[1] != self.grid.points:
            raise DataError(f"{self.rows.shape[1]} columns but grid has {self.grid.points} points")

    def __len__(self):
        return len(self.labels)

    def class_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))


def generate_dataset(plan: Sequence[ClassSpec], grid: FrequencyGrid,
                     board: BoardModel = DEFAULT_BOARD, master_seed: int = 0,
                     census: Sequence[ComponentSpec] = DEFAULT_CENSUS,
                     n_jobs: int | None = None) -> TraceMatrix:
    """Sample and sweep every trace in ``plan``; rows follow plan order."""
    if not plan:
        raise DomainError("empty class plan")
    jobs = [(spec, i) for spec in plan for i in range(spec.traces)]

    def one(spec, i):
        rng = trace_rng(master_seed, spec, i, census)
        if spec.class_id == 0:
            inst = sample_genuine(spec.target_part, rng, census, board, spec.variation_halfwidth)
        else:
            inst = sample_tampered(spec, rng, census, board)
        return sweep(inst, grid)

    if n_jobs in (None, 1):
        rows = [one(spec, i) for spec, i in jobs]
    else:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=n_jobs)(delayed(one)(spec, i) for spec, i in jobs)
    labels = [spec.class_id for spec, _ in jobs]
    parts = np.array([spec.target_part for spec, _ in jobs])
    return TraceMatrix(np.vstack(rows), np.array(labels), grid, {"parts": parts})


def write_csv(matrix: TraceMatrix, path) -> str:
    """Write ``f_1..f_N,label``; returns the sha256 of the bytes written."""
    buf = io.StringIO()
    buf.write(",".join(matrix.grid.labels() + ["label"]) + "\n")
    for row, label in zip(matrix.rows, matrix.labels):
        buf.write(",".join(f"{v:.12g}" for v in row))
        buf.write(f",{int(label)}\n")
    data = buf.getvalue().encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_csv(path, grid: FrequencyGrid) -> TraceMatrix:
    """Load a dataset CSV and validate its header against ``grid``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[-1:] != ["label"] or len(header) - 1 != grid.points:
            raise DataError(f"{path}: {len(header) - 1} frequency columns, grid expects "
                            f"{grid.points}")
        try:
            freqs = np.array([float(h) for h in header[:-1]])
        except ValueError as exc:
            raise DataError(f"{path}: bad header ({exc})") from None
        if not np.allclose(freqs, grid.frequencies, rtol=1e-5, atol=0):
            raise DataError(f"{path}: header frequencies do not match the grid")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                body = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
    if body.size == 0:
        raise DataError(f"{path}: no data rows")
    if body.shape[1] != grid.points + 1:
        raise DataError(f"{path}: rows have {body.shape[1]} fields, header has {len(header)}")
    return TraceMatrix(body[:, :-1], body[:, -1].astype(int), grid)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
