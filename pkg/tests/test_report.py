import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd

from mobility_sdi import report as rp
from mobility_sdi.pipeline import national_report


def parse(svg):
    assert svg.startswith("<?xml")
    root = ET.fromstring(svg.encode())
    assert root.get("width") == str(rp.WIDTH) and root.get("height") == str(rp.HEIGHT)
    return root


def test_figure1_relative_to_benchmark(small_run):
    t = rp.figure1_table(small_run.metrics, small_run.sdi, small_run.benchmark)
    assert list(t.columns) == rp.FIG1_COLUMNS
    b = small_run.benchmark.set_index(["level", "geo_id"]).loc[("nation", "US")]
    nat = small_run.metrics[small_run.metrics["level"] == "nation"].reset_index(drop=True)
    assert np.allclose(t["work_trips_rel"], nat["work_trips_pp"] / b["work_trips_pp"])
    parse(rp.figure1_svg(t))


def test_figure2_phase_shading(paper_run):
    res = paper_run.res
    nat = national_report(res.phase_reports).to_dict()
    t = rp.figure2_table(res.sdi, res.roc, nat)
    assert list(t.columns) == rp.FIG2_COLUMNS
    assert set(t["phase"]) == {"", "inertia", "fatigue"}
    assert t.loc[t["date"] == nat["fatigue_start"], "phase"].item() == "fatigue"
    root = parse(rp.figure2_svg(t))
    assert len(root.findall(".//{http://www.w3.org/2000/svg}rect")) >= 2


def test_figure3_with_and_without_cases():
    t = pd.DataFrame({"geo_id": ["S1", "S2"], "sdi_before": [50.0, 40.0], "sdi_after": [46.0, 38.0],
                      "sdi_pct_change": [-8.0, -5.0], "cases_before_per_k": [0.1, 0.2],
                      "cases_after_per_k": [0.3, 0.25]})
    text = rp.figure3_svg(t)
    parse(text)
    assert "cases after" in text
    bare = t.assign(cases_before_per_k=np.nan, cases_after_per_k=np.nan)
    assert "cases after" not in rp.figure3_svg(bare)
    phases = pd.DataFrame({"level": ["nation", "state"], "geo_id": ["US", "S1"], "mean_before": [1.0, 2.0],
                           "mean_after": [0.5, 1.0], "pct_change": [-50.0, -50.0]})
    f = rp.figure3_from_phases(phases)
    assert f["geo_id"].tolist() == ["S1"] and list(f.columns) == rp.FIG3_COLUMNS


def test_data_comment_cannot_break_out():
    t = pd.DataFrame({"geo_id": ["a--b", "<x>"], "sdi_before": [1.0, 2.0], "sdi_after": [1.0, 2.0],
                      "sdi_pct_change": [0.0, 0.0], "cases_before_per_k": [np.nan, np.nan],
                      "cases_after_per_k": [np.nan, np.nan]})
    svg = rp.figure3_svg(t)
    parse(svg)
    body = svg.split("<!-- data", 1)[1].split("-->", 1)[0]
    assert "--" not in body


def test_degenerate_series_render():
    t = pd.DataFrame({"date": ["2020-02-03"], "sdi_smoothed": [0.0], "roc": [np.nan], "phase": [""]})
    parse(rp.figure2_svg(t))
