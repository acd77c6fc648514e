"""Regenerate the frozen fixtures under tests/data/v1.

    python3 tests/data/make_fixtures.py

Oracle tables come from synth.oracle_enumerate (the plain sequential path);
expected sweep rows are derived from those tables with oracle_select, never
from the solver code.
"""

from __future__ import annotations

import json
import os
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

from datamin import cli, synth
from datamin.forest import ForestConfig
from datamin.report import DEFAULT_THRESHOLDS
from datamin.tabular import SplitSpec

ROOT = Path(__file__).resolve().parent / "v1"

# (d split as task/user/shared/noise, signal strength); seeds are the list index
ORACLE_LAYOUTS = [
    ((1, 1, 1, 0), 0.9), ((1, 1, 0, 1), 0.8), ((2, 1, 0, 0), 0.7), ((1, 1, 1, 1), 1.0),
    ((2, 1, 1, 0), 0.6), ((1, 2, 1, 0), 0.9), ((2, 2, 0, 1), 0.8), ((1, 1, 2, 1), 0.7),
    ((2, 1, 1, 1), 0.5), ((2, 2, 1, 1), 0.9), ((1, 2, 1, 2), 0.6), ((3, 1, 1, 1), 0.8),
    ((2, 2, 2, 1), 0.7), ((2, 1, 2, 2), 0.9), ((3, 2, 1, 1), 0.6), ((2, 2, 1, 2), 1.0),
    ((3, 2, 2, 1), 0.8), ((2, 3, 1, 2), 0.7), ((3, 2, 1, 2), 0.9), ((2, 2, 2, 2), 0.5),
]
ORACLE_ROWS = 200
ORACLE_SPLIT = SplitSpec(0.3, 0, "task")
ORACLE_FOREST = ForestConfig(n_trees=10, seed=0)

REFERENCE = synth.PRESETS["tiny"]
REFERENCE_SPLIT = SplitSpec(0.3, 0, "task")
REFERENCE_FOREST = ForestConfig(n_trees=10, seed=0)


def oracle_specs() -> list[synth.SynthSpec]:
    return [synth.SynthSpec(n_rows=ORACLE_ROWS, n_classes=3, n_users=4, task_only=t, user_only=u, shared=s,
                            noise=z, signal_strength=strength, seed=i)
            for i, ((t, u, s, z), strength) in enumerate(ORACLE_LAYOUTS)]


def run_config(data: Path, out: Path, **extra) -> dict:
    doc = {"data": str(data), "task_column": "task", "user_column": "user",
           "split": {"test_fraction": REFERENCE_SPLIT.test_fraction, "seed": REFERENCE_SPLIT.seed},
           "forest": {"n_trees": REFERENCE_FOREST.n_trees, "seed": REFERENCE_FOREST.seed},
           "shap": {"permutations": 16, "seed": 0}, "out": str(out)}
    doc.update(extra)
    return doc


def build_reference(directory: Path) -> None:
    synth.save_fixture(REFERENCE, REFERENCE_SPLIT, REFERENCE_FOREST, directory)
    table = synth.OracleTable.from_json((directory / "oracle.json").read_text())
    rows = []
    for t in DEFAULT_THRESHOLDS:
        s = synth.oracle_select(table, t)
        acc, ident = table.entries[s]
        rows.append({"threshold": t, "subset": list(s), "accuracy": acc, "identifiability": ident})
    (directory / "expected_sweep.json").write_text(json.dumps({"rows": rows}, indent=1) + "\n")

    # CLI outputs, run from a scratch dir with relative paths so they are location-free
    work = directory / "_cli"
    work.mkdir(exist_ok=True)
    data = Path("data.csv")
    shutil.copy(directory / "data.csv", work / data)
    jobs = {
        "minimize": ("minimize", {"method": "exhaustive", "threshold": 0.01}),
        "greedy_sweep": ("sweep", {"method": {"greedy": {"scoring": "mi_utility", "strategy": "utility_desc"}}}),
        "score_shap": ("score", {"scoring": "shap"}),
    }
    cwd = os.getcwd()
    os.chdir(work)
    try:
        for name, (command, extra) in jobs.items():
            config = Path(f"{name}.json")
            config.write_text(json.dumps(run_config(data, Path(name), **extra), indent=1) + "\n")
            if cli.main([command, "--config", str(config)]) != 0:
                raise SystemExit(f"cli {command} failed")
    finally:
        os.chdir(cwd)
    shutil.copy(work / "minimize" / "report.json", directory / "minimize_report.json")
    shutil.copy(work / "minimize" / "chosen_features.txt", directory / "minimize_chosen.txt")
    shutil.copy(work / "greedy_sweep" / "curve.csv", directory / "greedy_curve.csv")
    shutil.copy(work / "score_shap" / "scores_shap.csv", directory / "scores_shap.csv")
    shutil.rmtree(work)


def main() -> int:
    ROOT.mkdir(parents=True, exist_ok=True)
    for i, spec in enumerate(oracle_specs()):
        synth.save_fixture(spec, ORACLE_SPLIT, ORACLE_FOREST, ROOT / "oracle" / f"fixture_{i:02d}")
        print(f"fixture_{i:02d}: d={spec.n_features}", file=sys.stderr)
    build_reference(ROOT / "reference")
    (ROOT / "MANIFEST.json").write_text(json.dumps({
        "oracle_fixtures": len(ORACLE_LAYOUTS),
        "oracle_split": asdict(ORACLE_SPLIT), "oracle_forest": asdict(ORACLE_FOREST),
        "reference": asdict(REFERENCE),
    }, indent=1) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
