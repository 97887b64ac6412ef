import subprocess
import sys
from pathlib import Path

import pytest

from casesim import kernels

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(kernels.compiled is None, reason="compiled kernels not built")
def test_benchmark_script_runs():
    out = subprocess.run([sys.executable, str(BENCH), "--repeat", "1"], capture_output=True, text=True,
                         check=True, timeout=300).stdout
    assert out.splitlines()[0].startswith("kernel")
    assert len(out.splitlines()) == 6
