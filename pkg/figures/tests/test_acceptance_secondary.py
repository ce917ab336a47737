"""Secondary acceptance: all five figure ids render from a completed run.

Uses a reduced desk-shaped run produced by the simulator CLI so the suite
stays self-contained and fast; full desk runs carry identical schemas.
"""

import subprocess
import sys

import pytest
import yaml

from temfigs import FIGURE_IDS, FigureSpec, render


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    config = {
        "seed": 3,
        "n_houses": 3,
        "days_train": 3,
        "days_test": 2,
        "rounds_per_day": 12,
        "agent_kind": "proposed",
    }
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(config))
    out = root / "run"
    subprocess.run(
        [sys.executable, "-m", "temsim", "train", "--config", str(config_path),
         "--out", str(out)],
        check=True,
        capture_output=True,
    )
    return out


@pytest.mark.parametrize("figure_id", FIGURE_IDS)
def test_all_figure_ids_render_byte_identically(figure_id, completed_run, tmp_path):
    out = tmp_path / f"{figure_id}.png"
    render(FigureSpec(figure_id, (completed_run,), out))
    first = out.read_bytes()
    render(FigureSpec(figure_id, (completed_run,), out))
    assert out.read_bytes() == first
    print(f"[PASS] secondary: {figure_id} rendered byte-identically")
