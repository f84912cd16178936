import xml.etree.ElementTree as ET

import numpy as np
import pytest

from waldo.cli import main
from waldo.exceptions import DataError
from waldo.pdn import FrequencyGrid
from waldo.report import beeswarm_svg, build_report, confusion_svg, fold_table, overlay_svg


def test_svgs_are_valid_xml():
    grid = FrequencyGrid(points=30)
    trace = np.linspace(0.9, 0.5, 30)
    trace[10] = 0.2
    svgs = [confusion_svg([[5, 1], [0, 6]], [0, 3]),
            overlay_svg(grid, trace, {3: trace * 0.9}, [(grid.frequencies[10], 0.2)]),
            beeswarm_svg([{"sample_id": i, "feature_index": 2, "frequency_hz": 5e6,
                           "phi": 0.1 * i, "feature_value": float(i)} for i in range(4)], 3)]
    for svg in svgs:
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
    assert "MHz" in svgs[1]


def test_fold_table_layout():
    metrics = {"folds": [{"fold": 1, "accuracy": 0.9855, "depth_min": 7, "depth_max": 16}],
               "summary": {"mean_accuracy": 0.9855, "depth_min": 7, "depth_max": 16}}
    lines = fold_table(metrics).splitlines()
    assert lines[0] == "| Fold | Accuracy | Min depth | Max depth |"
    assert lines[2] == "| 1 | 98.55% | 7 | 16 |"


def test_missing_artifacts(tmp_path):
    with pytest.raises(DataError, match="missing upstream artifact"):
        build_report(tmp_path, FrequencyGrid(points=3), np.zeros((1, 3)), [0])


def test_report_regenerates_identically(tmp_path):
    out = tmp_path / "r"
    args = ["--out", str(out), "--points", "500", "--trees", "3", "--folds", "2",
            "--classes", "0,5"]
    assert main(["run-all", *args]) == 0
    first = {p.name: p.read_bytes() for p in out.glob("*.svg")} | {
        "report.md": (out / "report.md").read_bytes()}
    assert main(["report", *args]) == 0
    again = {p.name: p.read_bytes() for p in out.glob("*.svg")} | {
        "report.md": (out / "report.md").read_bytes()}
    assert first == again
    text = first["report.md"].decode()
    assert "| Fold | Accuracy | Min depth | Max depth |" in text
    assert "data:image/svg+xml;base64," in text
    fundamental = [ln for ln in text.splitlines() if "(fundamental)" in ln]
    assert len(fundamental) == 1
    f_mhz = float(fundamental[0].split()[1])
    assert 430 <= f_mhz <= 510
