import os
import pathlib
import subprocess
import sys

import numpy as np
import pytest


@pytest.fixture(scope="session")
def repo_root() -> pathlib.Path:
    # Repo root = parent of tests/
    return pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture
def run_cli(repo_root):
    def _run(args, cwd=None):
        env = os.environ.copy()
        env["PYTHONPATH"] = os.pathsep.join([str(repo_root / "src"), env.get("PYTHONPATH", "")])
        cmd = [sys.executable, "-m", "fewtherm", *args]
        proc = subprocess.run(cmd, capture_output=True, text=True, env=env, cwd=cwd)
        return proc.returncode, proc.stdout, proc.stderr

    return _run


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

