#!/usr/bin/env python3
# Copyright 2026 The Kascade Toolkit Authors
# SPDX-License-Identifier: Apache-2.0
"""End-to-end tests of the kascade executable.

    cli_test.py PATH/TO/kascade

Traces are written and read here with struct and numpy only, so the numbers
the CLI prints are checked against code that shares nothing with it.
"""

import csv
import io
import json
import os
import struct
import subprocess
import sys
import tempfile
import unittest

import numpy as np

EXE = None


def write_kscd(path, q, k, v, prompt="cli-test", x=None, y=None):
    L, hq, n, d = q.shape
    hkv = k.shape[1]
    flags = 1 if x is not None else 0
    out = bytearray(b"KSCD")
    out += struct.pack("<H5IBB", 1, L, hq, hkv, d, n, 0, flags)
    p = prompt.encode()
    out += struct.pack("<I", len(p)) + p
    if flags:
        out += struct.pack("<I", x.shape[2])
    for arr in (q, k, v) + ((x, y) if flags else ()):
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(out)


def read_kscd(path):
    data = read_bytes(path)
    assert data[:4] == b"KSCD"
    version, L, hq, hkv, d, n, dtype, flags = struct.unpack_from("<H5IBB", data, 4)
    plen = struct.unpack_from("<I", data, 28)[0]
    off = 32 + plen
    if flags & 1:
        off += 4
    q = np.frombuffer(data, "<f4", L * hq * n * d, off).reshape(L, hq, n, d)
    off += q.nbytes
    k = np.frombuffer(data, "<f4", L * hkv * n * d, off).reshape(L, hkv, n, d)
    off += k.nbytes
    v = np.frombuffer(data, "<f4", L * hkv * n * d, off).reshape(L, hkv, n, d)
    return q.astype(np.float64), k.astype(np.float64), v.astype(np.float64)


def causal_probs(q, k):
    """Softmax(q k^T / sqrt(d)) with a causal mask, float64."""
    n, d = q.shape
    s = q @ k.T / np.sqrt(d)
    s[np.triu_indices(n, 1)] = -np.inf
    s -= s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def run(*args, expect=0):
    r = subprocess.run([EXE, *map(str, args)], capture_output=True, text=True)
    if r.returncode != expect:
        raise AssertionError(
            f"{args}: exit {r.returncode}, wanted {expect}\n{r.stdout}\n{r.stderr}")
    return r


def load_json(path):
    with open(path) as f:
        return json.load(f)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


class CliTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)

    def gen(self, name, *extra, layers=6, q=4, kv=2, dim=16, tokens=192, seed=7):
        run("gen", "--layers", layers, "--q-heads", q, "--kv-heads", kv, "--dim", dim,
            "--tokens", tokens, "--seed", seed, "-o", self.path(name), *extra)
        return self.path(name)

    # gen

    def test_gen_is_deterministic(self):
        a = self.gen("a.kscd", "--rho", "0.95")
        b = self.gen("b.kscd", "--rho", "0.95")
        self.assertEqual(read_bytes(a), read_bytes(b))
        c = self.gen("c.kscd", "--rho", "0.95", seed=8)
        self.assertNotEqual(read_bytes(a), read_bytes(c))

    def test_gen_rejects_head_ratio_at_parse_time(self):
        r = run("gen", "--layers", 2, "--q-heads", 6, "--kv-heads", 4, "--dim", 8,
                "--tokens", 8, "-o", self.path("x.kscd"), expect=1)
        self.assertIn("--kv-heads", r.stderr)
        self.assertFalse(os.path.exists(self.path("x.kscd")))

    def test_gen_header_matches_flags(self):
        t = self.gen("a.kscd", layers=3, q=8, kv=2, dim=4, tokens=10)
        q, k, v = read_kscd(t)
        self.assertEqual(q.shape, (3, 8, 10, 4))
        self.assertEqual(k.shape, (3, 2, 10, 4))

    def test_usage_errors_exit_1(self):
        run(expect=1)
        run("frobnicate", expect=1)
        run("cost", "--preset", "x", "--all-presets", expect=1)
        run("run", "--trace", "t", "--plan", "p", "--identity", "--mode", "remapped", expect=1)

    # analyze

    def test_rho_one_similarity_is_all_ones(self):
        t = self.gen("a.kscd", "--rho", "1")
        run("analyze", t, "--out-dir", self.path("an"))
        rows = read_csv(self.path("an/similarity.csv"))
        self.assertEqual(len(rows), 36)
        for r in rows:
            if int(r["row"]) <= int(r["col"]):
                self.assertAlmostEqual(float(r["value"]), 1.0, delta=1e-9)

    def test_full_k_coverage_is_one(self):
        t = self.gen("a.kscd", tokens=96)
        run("analyze", t, "--coverage-k", 96, "--out-dir", self.path("an"))
        for r in read_csv(self.path("an/coverage.csv")):
            self.assertAlmostEqual(float(r["coverage"]), 1.0, delta=1e-9)

    def test_coverage_matches_numpy_oracle(self):
        rng = np.random.default_rng(3)
        L, hq, hkv, n, d = 3, 4, 2, 40, 8
        q = rng.normal(size=(L, hq, n, d)) * 2
        k = rng.normal(size=(L, hkv, n, d))
        v = rng.normal(size=(L, hkv, n, d))
        t = self.path("r.kscd")
        write_kscd(t, q, k, v)
        q, k, v = read_kscd(t)  # float32-rounded values
        kk = 5
        run("analyze", t, "--coverage-k", kk, "--out-dir", self.path("an"))
        got = {(int(r["layer"]), int(r["head"])): float(r["coverage"])
               for r in read_csv(self.path("an/coverage.csv"))}
        self.assertEqual(len(got), L * hq)
        for l in range(L):
            for h in range(hq):
                p = causal_probs(q[l, h], k[l, h // (hq // hkv)])
                top = np.sort(p, axis=1)[:, ::-1][:, :kk].sum(axis=1)
                self.assertAlmostEqual(got[(l, h)], top.mean(), delta=1e-9)
        summary = load_json(self.path("an/analysis.json"))
        self.assertEqual(summary["coverage_k"], kk)

    def test_importance_without_hidden_states_warns(self):
        t = self.gen("a.kscd")
        r = run("analyze", t, "--importance", "--out-dir", self.path("an"))
        self.assertIn("warning", r.stderr)
        rows = read_csv(self.path("an/importance.csv"))
        self.assertEqual(len(rows), 6)
        self.assertTrue(all(float(list(row.values())[-1]) == 1.0 for row in rows))

    # plan

    def test_budget_equal_to_layers_lists_all(self):
        t = self.gen("a.kscd")
        run("plan", t, "-m", 6, "-o", self.path("p.json"))
        self.assertEqual(load_json(self.path("p.json"))["anchors"], list(range(6)))

    def test_budget_above_layers_is_data_error(self):
        t = self.gen("a.kscd")
        r = run("plan", t, "-m", 7, "-o", self.path("p.json"), expect=2)
        self.assertIn("M=7", r.stderr)

    def test_objective_matches_similarity_csv(self):
        t = self.gen("a.kscd", "--rho", "0.6")
        r = run("plan", t, "-m", 3, "--no-importance", "-o", self.path("p.json"))
        printed = float(r.stdout.split("objective ")[1].split()[0])
        self.assertEqual(printed, float(r.stdout.split("objective recomputed ")[1].split()[0]))
        run("analyze", t, "--token-agg", "min", "-k", 64, "--head-mapped",
            "--out-dir", self.path("an"))
        s = np.zeros((6, 6))
        for row in read_csv(self.path("an/similarity.csv")):
            s[int(row["row"]), int(row["col"])] = float(row["value"])
        anchors = load_json(self.path("p.json"))["anchors"]
        total = 0.0
        for i, a in enumerate(anchors):
            end = anchors[i + 1] if i + 1 < len(anchors) else 6
            total += s[a, a:end].sum()
        self.assertAlmostEqual(total, printed, delta=1e-9)

    def test_permuted_copy_yields_the_permutations(self):
        rng = np.random.default_rng(11)
        L, hkv, g, n, d = 3, 4, 2, 48, 16
        perms = [list(range(hkv)), [2, 0, 3, 1], [3, 2, 1, 0]]
        q0 = rng.normal(size=(hkv * g, n, d)) * 3
        k0 = rng.normal(size=(hkv, n, d))
        v0 = rng.normal(size=(hkv, n, d))
        q = np.stack([q0[[p[j] * g + i for j in range(hkv) for i in range(g)]] for p in perms])
        k = np.stack([k0[p] for p in perms])
        v = np.stack([v0[p] for p in perms])
        t = self.path("perm.kscd")
        write_kscd(t, q, k, v)
        run("plan", t, "-m", 1, "-k", 6, "--no-importance", "-o", self.path("p.json"))
        plan = load_json(self.path("p.json"))
        self.assertEqual(plan["anchors"], [0])
        maps = {m["reuse_layer"]: m["map"] for m in plan["head_maps"]}
        for l in (1, 2):
            self.assertEqual(maps[l], perms[l])

    # run and report

    def test_full_plan_is_exact(self):
        t = self.gen("a.kscd", tokens=64)
        run("plan", t, "-m", 6, "-o", self.path("p.json"))
        for phase in ("prefill", "decode"):
            run("run", "--trace", t, "--plan", self.path("p.json"), "--phase", phase,
                "--fraction", 1, "--k-min", 64, "--report", self.path("r.json"),
                "--fail-above", "1e-5")
            rep = load_json(self.path("r.json"))
            self.assertLessEqual(rep["max_rel_err"], 1e-5)
            for row in rep["per_layer"]:
                self.assertLessEqual(row["output_rel_err_l2"], 1e-5)

    def test_five_anchor_plan_recovers_mass(self):
        t = self.gen("a.kscd", "--rho", "0.95", layers=8, tokens=1024)
        run("plan", t, "-m", 5, "-o", self.path("p.json"))
        run("run", "--trace", t, "--plan", self.path("p.json"), "--phase", "decode",
            "--report", self.path("r.json"))
        self.assertGreaterEqual(load_json(self.path("r.json"))["mean_mass_recovered"], 0.95)

    def test_fail_above_exits_3(self):
        t = self.gen("a.kscd")
        run("plan", t, "-m", 2, "-o", self.path("p.json"))
        run("run", "--trace", t, "--plan", self.path("p.json"), "--fail-above", "0", expect=3)
        run("run", "--trace", t, "--plan", self.path("p.json"), "--report", self.path("r.json"),
            "--fail-above", "1")
        run("report", self.path("r.json"), "--fail-above", "0", expect=3)

    def test_all_heads_pooled_runs(self):
        t = self.gen("a.kscd")
        run("plan", t, "-m", 2, "-o", self.path("p.json"))
        r = run("run", "--trace", t, "--plan", self.path("p.json"), "--all-heads-pooled")
        self.assertIn("mode all_heads_pooled", r.stdout)
        r2 = run("run", "--trace", t, "--plan", self.path("p.json"), "--mode", "all-heads-pooled")
        self.assertEqual(r.stdout, r2.stdout)

    def test_dim_mismatch_is_invalid_plan(self):
        a = self.gen("a.kscd")
        b = self.gen("b.kscd", layers=4)
        run("plan", b, "-m", 2, "-o", self.path("p.json"))
        r = run("run", "--trace", a, "--plan", self.path("p.json"), expect=2)
        self.assertIn("invalid plan", r.stderr)

    def test_report_reprints_run_output(self):
        t = self.gen("a.kscd")
        run("plan", t, "-m", 2, "-o", self.path("p.json"))
        r = run("run", "--trace", t, "--plan", self.path("p.json"), "--report", "-")
        rep = json.loads(r.stdout)
        self.assertIn("per_layer", rep)
        with open(self.path("r.json"), "w") as f:
            f.write(r.stdout)
        again = run("report", self.path("r.json"))
        self.assertEqual(r.stderr.split("\n", 1)[1], again.stdout)

    def test_corrupt_inputs_are_data_errors(self):
        t = self.gen("a.kscd")
        data = bytearray(read_bytes(t))
        data[0] = ord("X")
        with open(self.path("bad.kscd"), "wb") as f:
            f.write(bytes(data))
        r = run("analyze", self.path("bad.kscd"), "--out-dir", self.path("an"), expect=2)
        self.assertIn("byte 0", r.stderr)
        with open(self.path("short.kscd"), "wb") as f:
            f.write(read_bytes(t)[:-3])
        run("plan", self.path("short.kscd"), "-o", self.path("p.json"), expect=2)
        run("run", "--trace", t, "--plan", self.path("missing.json"), expect=2)
        with open(self.path("p.json"), "w") as f:
            json.dump({"schema": "kascade-plan", "schema_version": 1}, f)
        run("run", "--trace", t, "--plan", self.path("p.json"), expect=2)

    # cost

    def cost_json(self, *args):
        return json.loads(run("cost", *args, "--json", "-").stdout)

    def test_presets(self):
        self.assertAlmostEqual(self.cost_json("--preset", "table3-decode-131072-k10")["speedup"],
                               4.11, delta=0.02)
        self.assertAlmostEqual(self.cost_json("--preset", "table3-prefill-262144-k10")["speedup"],
                               2.57, delta=0.02)

    def test_uniform_ratios(self):
        self.assertEqual(self.cost_json()["speedup"], 1.0)
        j = self.cost_json("--anchor0", 1, "--anchor", 1, "--reuse", 1, "--layers", 12)
        self.assertEqual(j["speedup"], 1.0)

    def test_weighted_average_by_hand(self):
        j = self.cost_json("--anchor0", 2, "--anchor", 1, "--reuse", "0.25", "--layers", 10,
                           "--anchors", 3)
        want = (2 + 2 * 1 + 7 * 0.25) / 10
        self.assertAlmostEqual(j["kascade_time"], want, delta=1e-12)
        self.assertAlmostEqual(j["speedup"], 1 / want, delta=1e-12)

    def test_all_presets_csv_and_json_agree(self):
        rows = list(csv.DictReader(io.StringIO(run("cost", "--all-presets", "--csv", "-").stdout)))
        js = self.cost_json("--all-presets")
        self.assertEqual(len(rows), len(js))
        names = run("cost", "--list-presets").stdout.split()
        self.assertEqual(names, [r["name"] for r in rows])
        for r, j in zip(rows, js):
            self.assertEqual(float(r["speedup"]), j["speedup"])
            if int(r["seq_len"]) >= 65536:
                self.assertLessEqual(abs(j["speedup"] - j["published_speedup"]), 0.02)
                self.assertLessEqual(abs(j["kascade_time"] / j["published_time"] - 1), 0.005)

    def test_unknown_preset(self):
        r = run("cost", "--preset", "table3-decode-1-k10", expect=2)
        self.assertIn("unknown preset", r.stderr)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit("usage: cli_test.py PATH/TO/kascade [unittest args]")
    EXE = os.path.abspath(sys.argv.pop(1))
    unittest.main()
