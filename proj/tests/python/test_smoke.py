import json
import os

import pytest

import cimmlc

DATA = os.path.join(os.path.dirname(__file__), "..", "..", "data")


def path(kind, name):
    return os.path.join(DATA, kind, name + ".json")


def test_example_wlm_has_512_blocks():
    flow = cimmlc.compile_flow(path("models", "conv_relu"), path("arch", "example"), mode="wlm")
    blocks = [l for l in flow.splitlines() if l.startswith("parallel{cim.read_rows")]
    assert len(blocks) == 512


def test_run_matches_reference():
    g, a = path("models", "resblock"), path("arch", "sram_macro")
    flow = cimmlc.compile_flow(g, a, mode="xbm")
    inputs, weights = cimmlc.random_tensors(g, 3)
    got = cimmlc.run(flow, a, inputs, weights)
    want = cimmlc.reference(g, inputs, weights)
    assert got == want


def test_pipe_pair_peak():
    flow = cimmlc.compile_flow(path("models", "pipe_pair"), path("arch", "pipe_pair"))
    assert cimmlc.perf(flow, path("arch", "pipe_pair"))["peak_active_xbars"] == 4
    trad = cimmlc.compile_flow(path("models", "pipe_pair"), path("arch", "pipe_pair"), staged=False)
    assert cimmlc.perf(trad, path("arch", "pipe_pair"))["peak_active_xbars"] == 6


def test_verify_and_modes():
    r = cimmlc.verify(path("models", "conv_relu"), path("arch", "example"), n=3)
    assert r["passed"] == r["cases"] == 3
    m = cimmlc.compare_modes(path("models", "vgg_small"), path("arch", "baseline"))
    assert m["wlm"]["latency"] <= m["xbm"]["latency"] <= m["cm"]["latency"]


def test_errors_surface():
    with open(path("arch", "example")) as f:
        arch = json.load(f)
    arch["crossbar"]["parallel_row"] = 64
    with pytest.raises(cimmlc.CimError):
        cimmlc.compile_flow(path("models", "conv_relu"), arch)
