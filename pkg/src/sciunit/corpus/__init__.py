"""Bundled deterministic sample pipeline and its recorded trace.

The pipeline is a miniature of a typical inspection-model workflow: a
driver script runs three stages (heat map, violations, model) over one
input file using only relative paths, so it repeats byte-identically
under the portable backend on any host with a POSIX shell.
"""

from __future__ import annotations

import shutil
from importlib import resources
from pathlib import Path

PIPELINE_DIR = "/data/pipeline"
PIPELINE_COMMAND = ["sh", "run.sh"]
PIPELINE_OUTPUTS = ("heatmap.dat", "violations.dat", "model.dat", "model.count")
PIPELINE_ENV = {"LC_ALL": "C"}  # pins sort order for byte-identical outputs

# stage scripts keyed by what the partial-repeat fixture exercises
STAGE_HEATMAP = f"{PIPELINE_DIR}/calc_heatmap.sh"
STAGE_VIOLATION = f"{PIPELINE_DIR}/calc_violation.sh"
STAGE_MODEL = f"{PIPELINE_DIR}/gen_model.sh"


def _root():
    return resources.files("sciunit") / "corpus"


def trace_text() -> str:
    """The recorded trace of the pipeline's reference execution."""
    return (_root() / "pipeline_trace.ndjson").read_text()


def install_tree(dest) -> Path:
    """Copy the pipeline source tree (absolute-path mirror) under dest."""
    dest = Path(dest)
    shutil.copytree(_root() / "pipeline_tree", dest, dirs_exist_ok=True)
    return dest


def run_reference(tree_root) -> None:
    """Execute the pipeline in place so outputs exist as audited."""
    import os
    import subprocess

    workdir = Path(tree_root) / PIPELINE_DIR.lstrip("/")
    env = dict(os.environ)
    env.update(PIPELINE_ENV)
    subprocess.run(PIPELINE_COMMAND, cwd=workdir, check=True, env=env)
