#!/usr/bin/env python3
# Copyright 2026 The Kascade Toolkit Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes the KSCD v1 conformance fixture from closed-form tensor values.

Kept free of the C++ code on purpose: exporters in other languages can
compare their writer against the same bytes.

    make_fixture.py OUT.kscd          write the fixture
    make_fixture.py --check FILE      exit 1 unless FILE matches
"""

import argparse
import struct
import sys

L, HQ, HKV, D, N, MODEL_DIM = 2, 4, 2, 3, 5, 4
PROMPT = "conformance-v1"


def q_value(l, h, t, c):
    return (l * 1000 + h * 100 + t * 10 + c) / 64.0


def k_value(l, h, t, c):
    return -(l * 1000 + h * 100 + t * 10 + c) / 128.0


def v_value(l, h, t, c):
    return ((l + 1) * (h + 2) * (t + 3) * (c + 1)) / 16.0 - 8.0


def x_value(l, t, c):
    return (l * 100 + t * 10 + c) / 32.0 + 0.5


def y_value(l, t, c):
    return -((l * 100 + t * 10 + c) / 32.0) * 0.25


def build():
    out = bytearray()
    out += b"KSCD"
    out += struct.pack("<H", 1)
    out += struct.pack("<5I", L, HQ, HKV, D, N)
    out += struct.pack("<BB", 0, 1)
    prompt = PROMPT.encode("utf-8")
    out += struct.pack("<I", len(prompt)) + prompt
    out += struct.pack("<I", MODEL_DIM)
    for l in range(L):
        for h in range(HQ):
            for t in range(N):
                out += struct.pack("<%df" % D, *(q_value(l, h, t, c) for c in range(D)))
    for fn in (k_value, v_value):
        for l in range(L):
            for h in range(HKV):
                for t in range(N):
                    out += struct.pack("<%df" % D, *(fn(l, h, t, c) for c in range(D)))
    for fn in (x_value, y_value):
        for l in range(L):
            for t in range(N):
                out += struct.pack("<%df" % MODEL_DIM, *(fn(l, t, c) for c in range(MODEL_DIM)))
    return bytes(out)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("path")
    parser.add_argument("--check", action="store_true")
    args = parser.parse_args()
    data = build()
    if args.check:
        with open(args.path, "rb") as f:
            if f.read() != data:
                print("fixture mismatch: %s" % args.path, file=sys.stderr)
                return 1
        return 0
    with open(args.path, "wb") as f:
        f.write(data)
    return 0


if __name__ == "__main__":
    sys.exit(main())
