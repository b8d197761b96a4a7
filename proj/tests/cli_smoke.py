"""End-to-end run of every CLI subcommand on a tiny dataset."""

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

CLI = Path(sys.argv[1])
SCHEMA = json.loads(Path(sys.argv[2]).read_text())

TINY = [
    "--set", "iterations=4",
    "--set", "eval_interval=2",
    "--set", "batch_labeled=4",
    "--set", "unlabeled_ratio=2",
    "--set", "arch.channels=[4,4]",
    "--set", "tau_e=0",
]

failures = []


def run(*args, expect=0):
    p = subprocess.run([str(CLI), *map(str, args)], capture_output=True, text=True)
    if p.returncode != expect:
        failures.append(f"{' '.join(map(str, args))}: exit {p.returncode}, want {expect}\n{p.stderr}")
    return p


def check(cond, what):
    if not cond:
        failures.append(what)


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    run("gen-data", "--out", d / "pool.ltds", "--classes", 3, "--per-class", 12, "--size", 16)
    run("gen-data", "--out", d / "test.ltds", "--classes", 3, "--per-class", 4, "--size", 16,
        "--test", "--first-id", 100000)
    lt = run("build-longtail", "--in", d / "pool.ltds", "--out", d / "lt.ltds", "--head", 12,
             "--ratio", 4)
    check("class counts: 12 6 3" in lt.stdout, f"long-tail counts: {lt.stdout!r}")

    common = ["--train", d / "lt.ltds", "--set", "image_size=16", *TINY]
    run("train", *common, "--test", d / "test.ltds", "--out", d / "run", "--quiet")
    run_dir = d / "run"
    for name in ["config.json", "metrics.csv", "eval.csv", "audit.jsonl", "report.json",
                 "best.ckpt", "last.ckpt", "final.ckpt"]:
        check((run_dir / name).exists(), f"missing {name}")

    report = json.loads((run_dir / "report.json").read_text())
    try:
        jsonschema.validate(report, SCHEMA)
    except jsonschema.ValidationError as e:
        failures.append(f"report.json: {e.message}")
    k = report["num_classes"]
    check(len(report["confusion"]) == k and all(len(r) == k for r in report["confusion"]),
          "confusion is not KxK")
    check(sum(map(sum, report["confusion"])) == 12, "confusion total != test size")
    check(sorted(report["head_classes"] + report["tail_classes"]) == list(range(k)),
          "head and tail do not partition the classes")

    with open(run_dir / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    check([r["step"] for r in rows] == ["0", "1", "2", "3"], "metrics.csv steps")
    with open(run_dir / "eval.csv") as f:
        evals = list(csv.DictReader(f))
    check([r["step"] for r in evals] == ["0", "2", "4"], "eval.csv steps")
    audit = [json.loads(l) for l in (run_dir / "audit.jsonl").read_text().splitlines()]
    check(len(audit) == 3 * k, "audit.jsonl lines")

    ev = run("eval", *common, "--test", d / "test.ltds", "--checkpoint", run_dir / "final.ckpt",
             "--json", d / "eval.json")
    ev_report = json.loads((d / "eval.json").read_text())
    try:
        jsonschema.validate(ev_report, SCHEMA)
    except jsonschema.ValidationError as e:
        failures.append(f"eval.json: {e.message}")
    check(ev_report["overall_accuracy"] == report["overall_accuracy"],
          "eval of final.ckpt disagrees with the run report")

    run("audit-pseudo", *common, "--checkpoint", run_dir / "final.ckpt", "--out", d / "a.jsonl")
    check(len((d / "a.jsonl").read_text().splitlines()) == k, "audit-pseudo lines")

    run("sweep", *common, "--test", d / "test.ltds", "--out", d / "sweep.csv",
        "--axis", "triplet_margin=0.2,0.9")
    with open(d / "sweep.csv") as f:
        sweep = list(csv.DictReader(f))
    check([r["status"] for r in sweep] == ["ok", "failed"], "sweep statuses")

    # Exit codes.
    run("train", *common, "--test", d / "test.ltds", "--out", d / "x", "--set", "bogus=1",
        expect=1)
    run("train", *common, "--test", d / "test.ltds", "--out", d / "x", "--set",
        "triplet_margin=0.9", expect=1)
    run("train", "--train", d / "none.ltds", "--test", d / "test.ltds", "--out", d / "x",
        expect=2)
    (d / "junk.ltds").write_bytes(b"not a dataset")
    run("train", "--train", d / "junk.ltds", "--test", d / "test.ltds", "--out", d / "x",
        expect=2)
    run("eval", *common, "--test", d / "test.ltds", "--checkpoint", run_dir / "final.ckpt",
        "--set", "seed=7", expect=1)
    run("train", *common, "--test", d / "test.ltds", "--out", d / "x", "--set", "lr=1e30",
        "--quiet", expect=3)
    run("no-such-command", expect=1)

for f in failures:
    print("FAIL:", f)
print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
