import shutil
from pathlib import Path

import pytest

from casesim.config import PipelineConfig
from casesim.experiment import Pipeline

DESK60 = Path(__file__).parent / "fixtures" / "desk60"

# keeps pipeline tests quick; the acceptance run uses the shipped settings
FAST = {"train.max_epochs": 2, "train.patience": 2}


@pytest.fixture(scope="session")
def desk_copy(tmp_path_factory):
    """A private copy of the shipped fixture with ingest and both LLM sources done."""
    root = tmp_path_factory.mktemp("desk") / "desk60"
    shutil.copytree(DESK60, root)
    p = Pipeline(PipelineConfig.load(root / "config.yaml"))
    p.ingest()
    p.llm_disputes("llm_a")
    p.llm_disputes("llm_b")
    return root


@pytest.fixture
def make_pipeline(desk_copy, tmp_path):
    """Pipeline over the fixture writing into a fresh output directory.

    ``stages`` lists which prepared stage directories to copy in.
    """
    def factory(stages=("ingest", "llm-disputes"), **overrides):
        out = tmp_path / "out"
        for s in stages:
            shutil.copytree(desk_copy / "out" / s, out / s)
        conf = {**FAST, "output": str(out), **overrides}
        return Pipeline(PipelineConfig.load(desk_copy / "config.yaml", conf))

    return factory


def pytest_terminal_summary(terminalreporter):
    import re
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(re.match(r"\d+", s.split()[1]).group()), s)):
            terminalreporter.write_line(line)
