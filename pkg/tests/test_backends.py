import os
import shutil
import subprocess
import sys

import pytest

from wideac import _backend


def _backend_in_subprocess(flag):
    env = dict(os.environ)
    env.pop(_backend.ENV_FLAG, None)
    if flag is not None:
        env[_backend.ENV_FLAG] = flag
    out = subprocess.run(
        [sys.executable, "-c", "from wideac import _backend; print(_backend.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


def test_env_flag_selects_numpy_at_import():
    assert _backend_in_subprocess("1") == "numpy"
    expected = "numba" if _backend.HAS_NUMBA else "numpy"
    assert _backend_in_subprocess(None) == expected
    assert _backend_in_subprocess("0") == expected


def test_both_kernel_modules_share_contract():
    from wideac import _kernels_numpy

    names = {"train_segment", "empirical_kernel"}
    assert names <= set(dir(_kernels_numpy))
    if _backend.HAS_NUMBA:
        from wideac import _kernels_numba

        assert names <= set(dir(_kernels_numba))


@pytest.mark.skipif(shutil.which("wideac") is None, reason="console script not installed")
def test_console_script_help():
    out = subprocess.run(["wideac", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "fluctuation-sweep" in out.stdout and "--workers" in out.stdout
