"""Python access to the cimmlc compiler and simulator.

Graphs, arch descriptions and tensors may be given as dicts or file paths.
"""

import json
import os

from . import _cimmlc
from ._cimmlc import CimError

__all__ = ["CimError", "compile_flow", "perf", "run", "reference", "random_tensors", "verify", "compare_modes"]


def _text(doc):
    if isinstance(doc, (dict, list)):
        return json.dumps(doc)
    if isinstance(doc, (str, os.PathLike)) and os.path.exists(doc):
        with open(doc) as f:
            return f.read()
    return doc


def compile_flow(graph, arch, mode="auto", staged=True, remap=True):
    return _cimmlc.compile_flow(_text(graph), _text(arch), mode, staged, remap)


def perf(flow, arch):
    return json.loads(_cimmlc.perf(flow, _text(arch)))


def _tensors(doc):
    return json.loads(doc)["tensors"]


def run(flow, arch, inputs, weights):
    return _tensors(_cimmlc.run(flow, _text(arch), _text(inputs), _text(weights)))


def reference(graph, inputs, weights):
    return _tensors(_cimmlc.reference(_text(graph), _text(inputs), _text(weights)))


def random_tensors(graph, seed):
    i, w = _cimmlc.random_tensors(_text(graph), seed)
    return json.loads(i), json.loads(w)


def verify(graph, arch, seed=1, n=20, mode="auto"):
    passed, cases, counterexample = _cimmlc.verify(_text(graph), _text(arch), seed, n, mode)
    return {"passed": passed, "cases": cases, "counterexample": counterexample}


def compare_modes(graph, arch):
    return {m: {"latency": lat, "peak_xbars": peak} for m, lat, peak in _cimmlc.compare_modes(_text(graph), _text(arch))}
