# Copyright 2026 The Kascade Toolkit Authors
# SPDX-License-Identifier: Apache-2.0
"""Kascade Top-k sparse attention toolkit.

Plans and run reports are plain dicts with the same layout as the JSON files
the ``kascade`` command writes.
"""

import json

from ._kascade import (
    Error,
    FormatError,
    InvalidArgument,
    InvalidPlan,
    NumericError,
    Trace,
    TraceDims,
    UnsupportedOperation,
    coverage_table,
    decode_trace,
    dense_output,
    encode_trace,
    exhaustive_select,
    generate_synthetic,
    head_probabilities,
    k_budget,
    layer_importance,
    objective,
    read_trace,
    select_anchors,
    similarity_matrix,
    trace_from_arrays,
    write_trace,
)
from . import _kascade

__version__ = "0.1.0"


def plan(traces, budget=5, k=64, token_aggregation="min", use_importance=True,
         pooling="post_softmax", mode="remapped", tile_size=128, fraction=0.1, k_min=128):
    """Select anchors and head maps from one or more traces."""
    overrides = {"pooling": pooling, "mode": mode, "tile_size": tile_size,
                 "k_policy": {"fraction": fraction, "k_min": k_min}}
    return json.loads(_kascade._plan(traces, budget, k, token_aggregation, use_importance,
                                      json.dumps(overrides)))


def run(trace, plan, phase="decode", causal=True):
    """Dense vs Kascade comparison report for one trace."""
    return json.loads(_kascade._run(trace, json.dumps(plan), phase, causal))


def format_report(report):
    return _kascade._format_report(json.dumps(report))


def weighted_cost(anchor0=1.0, anchor=1.0, reuse=1.0, num_layers=32, num_anchors=5,
                  dense=1.0, phase="decode", fraction=0.1, seq_len=0):
    """Layer-weighted Kascade time and speedup over a dense layer time."""
    return json.loads(_kascade._cost(anchor0, anchor, reuse, num_layers, num_anchors, dense,
                                     phase, fraction, seq_len))


def presets():
    """Measured per-kind timings usable with weighted_cost."""
    return json.loads(_kascade._presets())


__all__ = [
    "Error", "FormatError", "InvalidArgument", "InvalidPlan", "NumericError", "Trace",
    "TraceDims", "UnsupportedOperation", "coverage_table", "decode_trace", "dense_output",
    "encode_trace", "exhaustive_select", "format_report", "generate_synthetic",
    "head_probabilities", "k_budget", "layer_importance", "objective", "plan", "presets",
    "read_trace", "run", "select_anchors", "similarity_matrix", "trace_from_arrays",
    "weighted_cost", "write_trace",
]
