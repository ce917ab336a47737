"""Figure rendering tests against a synthetic schema-conformant run."""

import math

import pytest

from temfigs import FIGURE_IDS, FigureSpec, SchemaError, render
from temfigs.cli import main


def write_run(root, seed=1, agent_kind="random", days=2, rounds_per_day=4, houses=2):
    run = root / f"{agent_kind}-{seed}"
    (run / "eval" / "houses").mkdir(parents=True)
    run.joinpath("config.yaml").write_text(f"agent_kind: {agent_kind}\nseed: {seed}\n")

    lines = ["episode,agent_id,mean_reward,critic_loss_mean,sigma,demotions"]
    for ep in range(3):
        for h in range(houses):
            lines.append(f"{ep},house{h:02d},{1.0 + 0.1 * ep + 0.01 * h},0.5,0.2,0")
    run.joinpath("training_log.csv").write_text("\n".join(lines) + "\n")

    lines = [
        "round,clearing_price,clearing_quantity,r_s,r_b,q_tot_s,q_tot_b,m_s,m_b,std_s,std_b,supplier_price"
    ]
    for t in range(days * rounds_per_day):
        lines.append(f"{t},0.3,2.0,0.2,0.3,1.0,2.0,0.25,0.35,0.01,0.02,0.31")
    (run / "eval" / "market_log.csv").write_text("\n".join(lines) + "\n")

    for h in range(houses):
        lines = ["round,t_in,t_set,t_out,soc,pv_kw,base_kw,hvac_kw,charge_kw,discharge_kw"]
        for t in range(days * rounds_per_day):
            t_in = 23.0 + 0.5 * math.sin(t)
            lines.append(f"{t},{t_in},23.0,29.5,0.5,2.0,1.0,0.5,0.2,0.0")
        (run / "eval" / "houses" / f"house{h:02d}.csv").write_text("\n".join(lines) + "\n")

    lines = [
        "day,agent_id,episode_reward,price_gap,energy_payment,temperature_gap,dispatch_ratio,self_sufficiency"
    ]
    for day in range(days):
        for h in range(houses):
            lines.append(f"{day},house{h:02d},100.0,0.02,1.5,0.2,0.9,0.8")
        lines.append(f"{day},community,100.0,0.02,{3.0 + day},0.2,0.9,0.8")
    run.joinpath("metrics.csv").write_text("\n".join(lines) + "\n")
    return run


@pytest.fixture()
def run_dir(tmp_path):
    return write_run(tmp_path)


@pytest.mark.parametrize("figure_id", FIGURE_IDS)
def test_each_figure_renders_and_is_byte_stable(figure_id, run_dir, tmp_path):
    out = tmp_path / f"{figure_id}.png"
    render(FigureSpec(figure_id, (run_dir,), out))
    first = out.read_bytes()
    assert first[:8] == b"\x89PNG\r\n\x1a\n"
    render(FigureSpec(figure_id, (run_dir,), out))
    assert out.read_bytes() == first


def test_comparison_overlays_multiple_runs(run_dir, tmp_path):
    other = write_run(tmp_path / "more", seed=2, agent_kind="proposed")
    out = tmp_path / "bars.png"
    render(FigureSpec("comparison_bars", (run_dir, other), out))
    assert out.exists()


def test_missing_column_is_named(run_dir, tmp_path):
    market = run_dir / "eval" / "market_log.csv"
    lines = market.read_text().splitlines()
    header = lines[0].split(",")
    drop = header.index("m_b")
    rewritten = [
        ",".join(v for k, v in enumerate(line.split(",")) if k != drop) for line in lines
    ]
    market.write_text("\n".join(rewritten) + "\n")
    with pytest.raises(SchemaError, match="m_b"):
        render(FigureSpec("price_roles", (run_dir,), tmp_path / "x.png"))


def test_missing_run_is_a_file_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        render(FigureSpec("rewards", (tmp_path / "nope",), tmp_path / "x.png"))


def test_unknown_figure_id_rejected(run_dir, tmp_path):
    with pytest.raises(SchemaError, match="unknown figure id"):
        FigureSpec("sparkles", (run_dir,), tmp_path / "x.png")


def test_cli_round_trip(run_dir, tmp_path, capsys):
    out = tmp_path / "fig.png"
    assert main(["--run", str(run_dir), "--fig", "rewards", "--out", str(out)]) == 0
    assert out.exists()
    assert str(out) in capsys.readouterr().out


def test_cli_reports_missing_run(tmp_path, capsys):
    code = main(["--run", str(tmp_path / "ghost"), "--fig", "rewards",
                 "--out", str(tmp_path / "x.png")])
    assert code == 1
    assert "does not exist" in capsys.readouterr().err


def test_svg_output_is_byte_stable(run_dir, tmp_path):
    out = tmp_path / "fig.svg"
    render(FigureSpec("rewards", (run_dir,), out))
    first = out.read_bytes()
    render(FigureSpec("rewards", (run_dir,), out))
    assert out.read_bytes() == first
