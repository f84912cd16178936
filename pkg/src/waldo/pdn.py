"""Lumped frequency-domain surrogate of the 1V8 power delivery network.

The board is modelled as a port with series spreading inductance and plane
resistance feeding a main plane node. Every component branch, the interplane
capacitance and the regulator hang off that node in parallel. Optional remote
plane sites (a local plane capacitance plus the parts mounted on it) connect
to the main node through their own link impedance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError, SingularityError

CAPACITOR = "capacitor"
RESISTOR = "resistor"

PART_IDS = (
    "C0603-CAP-ASM",
    "C0402-CAP-ASM-1",
    "C0805-CAP-ASM",
    "C0402-CAP-ASM-2",
    "0402-RES-ASM",
)


@dataclass(frozen=True)
class ComponentSpec:
    """Nominal electrical model of one part number and its instance count."""

    part_id: str
    kind: str
    value: float
    esr: float = 0.0
    esl: float = 0.0
    cp: float = 0.0
    count: int = 1
    site: str = ""

    def __post_init__(self):
        if self.kind not in (CAPACITOR, RESISTOR):
            raise DomainError(f"{self.part_id}: unknown kind {self.kind!r}")
        if not self.value > 0:
            raise DomainError(f"{self.part_id}: value must be > 0")
        if min(self.esr, self.esl, self.cp) < 0:
            raise DomainError(f"{self.part_id}: parasitics must be >= 0")
        if self.kind == CAPACITOR and self.cp != 0:
            raise DomainError(f"{self.part_id}: capacitors carry no cp")
        if self.count < 1:
            raise DomainError(f"{self.part_id}: count must be positive")


@dataclass(frozen=True)
class PlaneSite:
    """Remote plane island: local capacitance reached through a link impedance."""

    name: str
    c_plane: float
    l_link: float
    r_link: float = 0.0

    def __post_init__(self):
        if min(self.c_plane, self.l_link, self.r_link) < 0:
            raise DomainError(f"site {self.name}: parameters must be >= 0")


@dataclass(frozen=True)
class BoardModel:
    z0: float = 50.0
    c_plane: float = 4.0e-9
    l_spread: float = 0.2e-9
    r_plane: float = 5e-3
    l_mount: float = 0.5e-9
    # None removes the regulator branch entirely.
    vrm_r: float | None = 10e-3
    vrm_l: float = 100e-9
    sites: tuple[PlaneSite, ...] = ()

    def __post_init__(self):
        if not self.z0 > 0:
            raise DomainError("z0 must be > 0")
        values = [self.c_plane, self.l_spread, self.r_plane, self.l_mount, self.vrm_l]
        if self.vrm_r is not None:
            values.append(self.vrm_r)
        if min(values) < 0:
            raise DomainError("board parameters must be >= 0")
        names = [s.name for s in self.sites]
        if len(set(names)) != len(names) or "" in names:
            raise DomainError("site names must be unique and non-empty")

    def site(self, name: str) -> PlaneSite:
        for s in self.sites:
            if s.name == name:
                return s
        raise DomainError(f"unknown site {name!r}")


@dataclass(frozen=True)
class FrequencyGrid:
    start_hz: float = 1e6
    stop_hz: float = 1e9
    points: int = 5000

    def __post_init__(self):
        if not 0 < self.start_hz < self.stop_hz:
            raise DomainError("need 0 < start_hz < stop_hz")
        if int(self.points) != self.points or self.points < 2:
            raise DomainError("points must be an integer >= 2")

    @property
    def frequencies(self) -> np.ndarray:
        return np.linspace(self.start_hz, self.stop_hz, int(self.points))

    @property
    def step_hz(self) -> float:
        return (self.stop_hz - self.start_hz) / (self.points - 1)

    def labels(self) -> list[str]:
        """Column labels: frequencies in Hz at 6 significant digits."""
        return [f"{f:.6g}" for f in self.frequencies]


@dataclass(frozen=True)
class Branch:
    part_id: str
    kind: str
    value: float
    esr: float
    esl: float
    cp: float
    site: str = ""

    def sort_key(self):
        return (self.site, self.part_id, self.kind, self.value, self.esr, self.esl, self.cp)


@dataclass(frozen=True)
class PdnInstance:
    branches: tuple[Branch, ...]
    board: BoardModel = field(default_factory=BoardModel)

    def __post_init__(self):
        for b in self.branches:
            if not (b.value > 0 and b.esr >= 0 and b.esl >= 0 and b.cp >= 0):
                raise DomainError(f"non-physical branch {b}")

    def __len__(self):
        return len(self.branches)


# 470 MHz calibration: see tests/test_pdn.py::test_nominal_calibration
DEFAULT_SITES = (
    PlaneSite("C0603-island", c_plane=0.5e-9, l_link=0.2e-9, r_link=2e-3),
    PlaneSite("C0805-island", c_plane=1.0e-9, l_link=0.3e-9, r_link=2e-3),
)

DEFAULT_BOARD = BoardModel(sites=DEFAULT_SITES)

DEFAULT_CENSUS = (
    ComponentSpec("C0402-CAP-ASM-1", CAPACITOR, 0.1e-6, esr=20e-3, esl=0.4e-9, count=25),
    ComponentSpec("C0402-CAP-ASM-2", CAPACITOR, 2.2e-6, esr=20e-3, esl=0.4e-9, count=1),
    ComponentSpec("C0603-CAP-ASM", CAPACITOR, 10e-6, esr=8e-3, esl=0.55e-9, count=4,
                  site="C0603-island"),
    ComponentSpec("C0805-CAP-ASM", CAPACITOR, 10e-6, esr=8e-3, esl=0.9e-9, count=4,
                  site="C0805-island"),
    ComponentSpec("0402-RES-ASM", RESISTOR, 470.0, esl=0.4e-9, cp=50e-15, count=2),
)


def _omega(f):
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise DomainError("frequency must be > 0")
    return 2 * np.pi * f


def _unwrap(z):
    return complex(z) if np.ndim(z) == 0 else z


def cap_branch_z(c, esr, esl, l_mount, f):
    """Series R-L-C impedance of a mounted capacitor."""
    if not c > 0:
        raise DomainError("capacitance must be > 0")
    w = _omega(f)
    return _unwrap(esr + 1j * w * (esl + l_mount) + 1 / (1j * w * c))


def res_branch_z(r, esl, cp, l_mount, f):
    """Mounted chip resistor: (R + jw(ESL + l_mount)) in parallel with CP."""
    if not r > 0:
        raise DomainError("resistance must be > 0")
    w = _omega(f)
    zs = r + 1j * w * (esl + l_mount)
    if cp == 0:
        return _unwrap(zs)
    return _unwrap(zs / (1 + 1j * w * cp * zs))


def branch_z(branch: Branch, l_mount: float, f):
    if branch.kind == CAPACITOR:
        return cap_branch_z(branch.value, branch.esr, branch.esl, l_mount, f)
    return res_branch_z(branch.value, branch.esl, branch.cp, l_mount, f)


def _node_admittance(branches: Iterable[Branch], c_plane: float, l_mount: float, w, f):
    """Sum of admittances at one plane node; +inf marks a dead short."""
    y = 1j * w * c_plane
    for b in branches:
        zb = branch_z(b, l_mount, f)
        with np.errstate(divide="ignore", invalid="ignore"):
            y = y + np.where(zb == 0, np.inf, 1 / np.where(zb == 0, 1, zb))
    return y


def _parallel(y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.isinf(y.real), 0, 1 / np.where(np.isinf(y.real), 1, y))


def pdn_impedance(inst: PdnInstance, f):
    """Input impedance seen at the port.

    Branches are summed in a canonical order, so the result does not depend
    on how ``inst.branches`` is ordered. A branch that is exactly 0 ohm
    shorts its node.
    """
    board = inst.board
    f_arr = np.atleast_1d(np.asarray(f, dtype=float))
    w = _omega(f_arr)
    ordered = sorted(inst.branches, key=Branch.sort_key)
    site_names = {s.name for s in board.sites}
    for b in ordered:
        if b.site and b.site not in site_names:
            raise DomainError(f"branch {b.part_id} mounted on unknown site {b.site!r}")

    y = _node_admittance((b for b in ordered if not b.site), board.c_plane,
                         board.l_mount, w, f_arr)
    if board.vrm_r is not None:
        y = y + _inv(board.vrm_r + 1j * w * board.vrm_l)
    for site in board.sites:
        local = [b for b in ordered if b.site == site.name]
        if not local and site.c_plane == 0:
            continue
        y_site = _node_admittance(local, site.c_plane, board.l_mount, w, f_arr)
        z_site = site.r_link + 1j * w * site.l_link + _parallel(y_site)
        y = y + _inv(z_site)
    z = 1j * w * board.l_spread + board.r_plane + _parallel(y)
    return complex(z[0]) if np.ndim(f) == 0 else z


def _inv(z):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z == 0, np.inf, 1 / np.where(z == 0, 1, z))


def z_to_s11(z, z0: float = 50.0):
    """Reflection coefficient of impedance ``z`` against reference ``z0``."""
    if not z0 > 0:
        raise DomainError("z0 must be > 0")
    z = np.asarray(z, dtype=complex)
    den = z + z0
    if np.any(den == 0):
        raise SingularityError("z = -z0 has no reflection coefficient")
    return _unwrap((z - z0) / den)


def s11_to_z(s, z0: float = 50.0):
    """Inverse of :func:`z_to_s11`: ``z0 (1 + s) / (1 - s)``."""
    if not z0 > 0:
        raise DomainError("z0 must be > 0")
    s = np.asarray(s, dtype=complex)
    if np.any(s == 1):
        raise SingularityError("s11 = 1 is an open circuit")
    return _unwrap(z0 * (1 + s) / (1 - s))


def sweep(inst: PdnInstance, grid: FrequencyGrid) -> np.ndarray:
    """|S11| magnitude trace of ``inst`` over ``grid``."""
    z = pdn_impedance(inst, grid.frequencies)
    return np.abs(z_to_s11(z, inst.board.z0))


def find_resonances(trace, grid: FrequencyGrid | None = None) -> list[tuple[float, float]]:
    """Strict interior local minima, deepest first.

    Returns ``(frequency, magnitude)`` pairs; the first is the fundamental.
    Without a grid the frequency slot holds the sample index.
    """
    m = np.asarray(trace, dtype=float)
    if grid is not None and len(m) != grid.points:
        raise DomainError("trace length does not match grid")
    if len(m) < 3:
        return []
    idx = np.nonzero((m[1:-1] < m[:-2]) & (m[1:-1] < m[2:]))[0] + 1
    idx = idx[np.argsort(m[idx], kind="stable")]
    freqs = grid.frequencies if grid is not None else np.arange(len(m), dtype=float)
    return [(float(freqs[i]), float(m[i])) for i in idx]


def nominal_instance(census: Sequence[ComponentSpec] = DEFAULT_CENSUS,
                     board: BoardModel = DEFAULT_BOARD) -> PdnInstance:
    branches = []
    for spec in census:
        branches.extend(
            Branch(spec.part_id, spec.kind, spec.value, spec.esr, spec.esl, spec.cp, spec.site)
            for _ in range(spec.count)
        )
    return PdnInstance(tuple(branches), board)


def series_resonance(c: float, l: float) -> float:
    return 1 / (2 * math.pi * math.sqrt(l * c))


def with_board(inst: PdnInstance, **changes) -> PdnInstance:
    return PdnInstance(inst.branches, replace(inst.board, **changes))
