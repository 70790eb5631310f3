import math
import os

import numpy as np
import pytest

from suppfit import (
    ChatterjeeRow,
    ChatterjeeTable,
    DataVersionError,
    ExperimentConfig,
    RiskRow,
    RiskTable,
    SuboptimalityReport,
    TableParseError,
    cell_seed,
    chatterjee_sweep,
    fit_rate,
    load,
    persist,
    run_risk_sweep,
    sandwich_check,
    suboptimality_report,
    truth_profile,
    width_contrast,
)


def planted_risk_table(d, risks_by_n, truth="ball", reps=2, noise=None, seed=0):
    """Rows whose risk_fixed follows a given per-n law exactly (or with
    multiplicative lognormal noise), for exercising the fitting layer."""
    gen = np.random.default_rng(seed)
    rows = []
    for n, base in risks_by_n.items():
        for rep in range(reps):
            r = base * (math.exp(noise * gen.standard_normal()) if noise else 1.0)
            rows.append(
                RiskRow(
                    d=d,
                    n=n,
                    truth=truth,
                    replicate=rep,
                    risk_fixed=r,
                    risk_population=1.1 * r,
                    population_se=0.01 * r,
                    kkt_residual=1e-9,
                    vertex_bound_ok=True,
                    converged=True,
                )
            )
    return RiskTable(rows=rows, config={"d": d, "planted": True})


SMALL = ExperimentConfig(
    d=2,
    n_grid=[8, 12],
    truth_kind="polytope",
    truth_m=4,
    sigma=0.5,
    replicates=2,
    master_seed=5,
    probes=128,
)


# ---------------------------------------------------------------------------
# risk sweep


def test_sweep_rows_complete_and_sorted():
    tab = run_risk_sweep(SMALL)
    keys = [(r.n, r.replicate) for r in tab.rows]
    assert keys == [(8, 0), (8, 1), (12, 0), (12, 1)]
    assert all(r.d == 2 and r.truth == "polytope-m4" for r in tab.rows)
    assert all(r.wall_time > 0 for r in tab.rows)
    assert tab.failures == 0
    assert tab.config["master_seed"] == 5
    assert tab.config["n_grid"] == [8, 12]


def test_sweep_noiseless_recovers_truth():
    cfg = ExperimentConfig(
        d=2,
        n_grid=[10, 14],
        truth_kind="polytope",
        truth_m=4,
        sigma=0.0,
        replicates=2,
        master_seed=3,
        probes=128,
    )
    tab = run_risk_sweep(cfg)
    for r in tab.rows:
        assert r.converged
        assert r.risk_fixed <= 1e-8


def test_sweep_deterministic_and_worker_independent():
    a = run_risk_sweep(SMALL, workers=1)
    b = run_risk_sweep(SMALL, workers=2)
    assert a.to_csv() == b.to_csv()


def test_sweep_master_seed_changes_rows():
    other = ExperimentConfig(**{**SMALL.to_dict(), "master_seed": 6})
    a = run_risk_sweep(SMALL)
    b = run_risk_sweep(other)
    assert a.rows[0].risk_fixed != b.rows[0].risk_fixed


def test_cell_seed_deterministic_and_distinct():
    base = cell_seed(0, "noise", 2, 64, 1).generate_state(4)
    again = cell_seed(0, "noise", 2, 64, 1).generate_state(4)
    np.testing.assert_array_equal(base, again)
    states = {
        tuple(cell_seed(m, stage, d, n, rep).generate_state(4))
        for m in (0, 1)
        for stage in ("design", "noise", "probes", "width")
        for d in (2, 6)
        for n in (64, 128)
        for rep in (0, 1)
    }
    assert len(states) == 2 * 4 * 2 * 2 * 2


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(d=1, n_grid=[8])
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[])
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[8, 8])
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[2])
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[8], truth_kind="cube")
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[8], truth_kind="file")
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[8], sigma=-1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(d=2, n_grid=[8], design_mode="grid")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"d": 2, "n_grid": [8], "color": "red"})


def test_truth_labels_track_vertex_count():
    cfg = ExperimentConfig(d=6, n_grid=[64, 256], truth_kind="polytope")
    assert cfg.truth_label(64) == "polytope-m8"
    assert cfg.truth_label(256) == "polytope-m16"
    assert cfg.truth_for(64).m == 8
    assert ExperimentConfig(d=2, n_grid=[8], truth_kind="ball").truth_label(8) == "ball"


# ---------------------------------------------------------------------------
# rate fitting


def test_fit_rate_exact_on_planted_power_law():
    risks = {n: 7.0 * n ** -0.8 for n in (32, 64, 128, 256)}
    tab = planted_risk_table(2, risks)
    rf = fit_rate(tab, "ball", target_exponent=-0.8)
    assert abs(rf.slope + 0.8) <= 1e-12
    assert abs(rf.intercept - math.log(7.0)) <= 1e-12
    assert rf.stderr <= 1e-12
    assert rf.n_used == (32, 64, 128, 256)
    assert rf.target_exponent == -0.8
    for n in risks:
        assert abs(rf.mean_risk[n] - risks[n]) <= 1e-15


def test_fit_rate_noisy_slope_within_stderr():
    risks = {n: 7.0 * n ** -0.8 for n in (32, 64, 128, 256, 512)}
    tab = planted_risk_table(2, risks, reps=6, noise=0.05, seed=11)
    rf = fit_rate(tab, "ball")
    assert rf.slope != -0.8
    assert abs(rf.slope + 0.8) <= 0.05
    assert rf.stderr > 0


def test_fit_rate_skips_unconverged_rows():
    risks = {n: 7.0 * n ** -0.8 for n in (32, 64, 128)}
    tab = planted_risk_table(2, risks, reps=3)
    # poison one replicate per n; the flag must keep it out of the means
    for r in tab.rows:
        if r.replicate == 2:
            r.risk_fixed = 1e6
            r.converged = False
    rf = fit_rate(tab, "ball")
    assert abs(rf.slope + 0.8) <= 1e-12


def test_fit_rate_validation():
    risks = {n: 7.0 * n ** -0.8 for n in (32, 64, 128)}
    tab = planted_risk_table(2, risks)
    with pytest.raises(ValueError):
        fit_rate(tab, "polytope")
    with pytest.raises(ValueError):
        fit_rate(tab, "")
    with pytest.raises(ValueError):
        fit_rate(tab, "ball", value="risk_typo")
    two = planted_risk_table(2, {32: 1.0, 64: 0.5})
    with pytest.raises(ValueError):
        fit_rate(two, "ball")
    flat = planted_risk_table(2, {32: 0.0, 64: 0.0, 128: 0.0})
    with pytest.raises(ValueError):
        fit_rate(flat, "ball")


# ---------------------------------------------------------------------------
# persistence


def test_risk_table_roundtrip(tmp_path):
    tab = run_risk_sweep(SMALL)
    path = os.path.join(tmp_path, "risk.csv")
    persist(tab, path)
    back = load(path)
    assert isinstance(back, RiskTable)
    assert back.to_csv() == tab.to_csv()
    assert all(r.wall_time == 0.0 for r in back.rows)
    assert back.config == tab.config


def test_chatterjee_table_roundtrip(tmp_path):
    rows = [
        ChatterjeeRow(
            d=2, n=16, truth="polytope-m4", replicate=k,
            risk_fixed=0.1 + 0.01 * k, t_f_hat=0.3, t_f_se=0.02,
            sandwich_pass=bool(k % 2), extend_grid=False, converged=True,
        )
        for k in range(3)
    ]
    tab = ChatterjeeTable(rows=rows, config={"d": 2})
    path = os.path.join(tmp_path, "chat.csv")
    persist(tab, path)
    back = load(path)
    assert isinstance(back, ChatterjeeTable)
    assert back.to_csv() == tab.to_csv()


def test_load_rejects_truncated_and_malformed(tmp_path):
    tab = run_risk_sweep(SMALL)
    text = tab.to_csv()
    path = os.path.join(tmp_path, "broken.csv")

    with open(path, "w") as fh:
        fh.write(text.rstrip("\n").rsplit(",", 1)[0])
    with pytest.raises(TableParseError):
        load(path)

    with open(path, "w") as fh:
        fh.write("just,some,rows\n1,2,3\n")
    with pytest.raises(TableParseError):
        load(path)

    lines = text.splitlines()
    lines[2] = lines[2].replace(",", ";", 1)
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
    with pytest.raises(TableParseError):
        load(path)


def test_load_reports_line_and_column(tmp_path):
    tab = run_risk_sweep(SMALL)
    lines = tab.to_csv().splitlines()
    parts = lines[3].split(",")
    parts[4] = "not-a-number"
    lines[3] = ",".join(parts)
    path = os.path.join(tmp_path, "bad.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
    with pytest.raises(TableParseError) as err:
        load(path)
    assert err.value.line == 4
    assert err.value.column == 5


def test_load_rejects_foreign_version(tmp_path):
    tab = run_risk_sweep(SMALL)
    text = tab.to_csv().replace("suppfit-data-1", "suppfit-data-9", 1)
    path = os.path.join(tmp_path, "future.csv")
    with open(path, "w") as fh:
        fh.write(text)
    with pytest.raises(DataVersionError):
        load(path)


def test_persist_rejects_unknown_type(tmp_path):
    with pytest.raises(TypeError):
        persist({"a": 1}, os.path.join(tmp_path, "x"))


# ---------------------------------------------------------------------------
# chatterjee sweep


def test_chatterjee_sweep_shares_profile_within_block():
    cfg = ExperimentConfig(
        d=2,
        n_grid=[12, 16],
        truth_kind="polytope",
        truth_m=4,
        sigma=0.5,
        replicates=3,
        master_seed=9,
        probes=128,
    )
    tab = chatterjee_sweep(cfg, num_gaussians=6, width_points=6)
    assert len(tab.rows) == 6
    assert tab.failures == 0
    for n in (12, 16):
        block = [r for r in tab.rows if r.n == n]
        assert len(block) == 3
        assert len({r.t_f_hat for r in block}) == 1
        assert len({r.t_f_se for r in block}) == 1
        for r in block:
            assert r.t_f_hat > 0
            assert r.sandwich_pass == sandwich_check(r.risk_fixed, r.t_f_hat, r.t_f_se)
    assert 0.0 <= tab.pass_fraction() <= 1.0


def test_chatterjee_csv_roundtrip(tmp_path):
    cfg = ExperimentConfig(
        d=2, n_grid=[12], truth_kind="polytope", truth_m=4,
        sigma=0.5, replicates=2, master_seed=9, probes=128,
    )
    tab = chatterjee_sweep(cfg, num_gaussians=4, width_points=5)
    path = os.path.join(tmp_path, "chat.csv")
    persist(tab, path)
    assert load(path).to_csv() == tab.to_csv()


# ---------------------------------------------------------------------------
# profiles and contrasts


def test_truth_profile_fields():
    cfg = ExperimentConfig(
        d=2, n_grid=[16], truth_kind="polytope", truth_m=4, sigma=0.5, master_seed=2
    )
    prof = truth_profile(cfg, 16, num_gaussians=5, width_points=6)
    assert prof.center_label == "polytope-m4"
    assert prof.noise_sigma == 0.5
    assert prof.t_grid.shape == (6,)
    assert prof.width[0] >= 0
    assert np.all(np.diff(prof.width) >= -1e-12)
    assert prof.t_grid[0] <= prof.t_f_hat <= prof.t_grid[-1] * 1.5
    assert prof.design is not None and prof.design.n == 16


def test_truth_profile_zero_sigma_uses_unit_noise():
    cfg = ExperimentConfig(
        d=2, n_grid=[16], truth_kind="polytope", truth_m=4, sigma=0.0, master_seed=2
    )
    prof = truth_profile(cfg, 16, num_gaussians=4, width_points=5)
    assert prof.noise_sigma == 1.0


def test_width_contrast_requires_matching_frames():
    a = ExperimentConfig(d=6, n_grid=[64], truth_kind="ball", master_seed=1)
    for other in (
        ExperimentConfig(d=5, n_grid=[64], truth_kind="polytope", master_seed=1),
        ExperimentConfig(d=6, n_grid=[64], truth_kind="polytope", master_seed=2),
        ExperimentConfig(
            d=6, n_grid=[64], truth_kind="polytope", master_seed=1, design_mode="iid-uniform"
        ),
    ):
        with pytest.raises(ValueError):
            width_contrast(a, other, n=64, instances=1)


def test_width_contrast_pairs_draws():
    a = ExperimentConfig(d=2, n_grid=[16], truth_kind="polytope", truth_m=4, master_seed=4)
    b = ExperimentConfig(d=2, n_grid=[16], truth_kind="polytope", truth_m=4, master_seed=4)
    pairs = width_contrast(a, b, n=16, instances=2, num_gaussians=4, width_points=5)
    assert len(pairs) == 2
    for k, p in enumerate(pairs):
        # identical truths under common random numbers: the contrast is zero
        assert p["replicate"] == k
        assert p["t_f_a"] == p["t_f_b"]
        assert p["truth_a"] == p["truth_b"] == "polytope-m4"


# ---------------------------------------------------------------------------
# suboptimality report


def planted_pair_tables(d, c_ball, c_poly, expo_ball, expo_poly, ns=(64, 128, 256, 512)):
    ball = planted_risk_table(d, {n: c_ball * n**expo_ball for n in ns}, truth="ball")
    poly = planted_risk_table(
        d, {n: c_poly * n**expo_poly for n in ns}, truth="polytope-m16"
    )
    return ball, poly


def test_report_targets_and_exact_slopes():
    ball, poly = planted_pair_tables(6, 1.0, 1.2, -4.0 / 9.0, -0.4)
    rep = suboptimality_report(ball, poly)
    assert abs(rep.target_minimax + 4.0 / 9.0) <= 1e-15
    assert abs(rep.target_lse + 0.4) <= 1e-15
    assert abs(rep.rate_ball.slope + 4.0 / 9.0) <= 1e-12
    assert abs(rep.rate_polytope.slope + 0.4) <= 1e-12
    assert rep.n_common == (64, 128, 256, 512)
    # slower polytope decay from a higher constant: the ratio must grow in n
    ratios = [rep.risk_ratio[n] for n in rep.n_common]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert all(r >= 1.2 for r in ratios)
    assert rep.tf_win_fraction is None


def test_report_d9_targets():
    ball, poly = planted_pair_tables(9, 1.0, 1.0, -1.0 / 3.0, -0.25)
    rep = suboptimality_report(ball, poly)
    assert abs(rep.target_minimax + 1.0 / 3.0) <= 1e-15
    assert abs(rep.target_lse + 0.25) <= 1e-15


def test_report_tf_win_fraction():
    ball, poly = planted_pair_tables(6, 1.0, 1.2, -4.0 / 9.0, -0.4)
    pairs = [
        {"n": 256, "replicate": 0, "t_f_a": 0.30, "t_f_b": 0.33, "extend_grid": False},
        {"n": 256, "replicate": 1, "t_f_a": 0.31, "t_f_b": 0.29, "extend_grid": False},
        {"n": 256, "replicate": 2, "t_f_a": 0.28, "t_f_b": 0.32, "extend_grid": False},
        {"n": 256, "replicate": 3, "t_f_a": 0.30, "t_f_b": 0.34, "extend_grid": False},
    ]
    rep = suboptimality_report(ball, poly, tf_pairs=pairs)
    assert rep.tf_win_fraction == 0.75


def test_report_dimension_mismatch():
    ball, _ = planted_pair_tables(6, 1.0, 1.2, -4.0 / 9.0, -0.4)
    _, poly9 = planted_pair_tables(9, 1.0, 1.2, -1.0 / 3.0, -0.25)
    with pytest.raises(ValueError):
        suboptimality_report(ball, poly9)


def test_report_json_roundtrip(tmp_path):
    ball, poly = planted_pair_tables(6, 1.0, 1.2, -4.0 / 9.0, -0.4)
    pairs = [{"n": 256, "replicate": 0, "t_f_a": 0.3, "t_f_b": 0.33, "extend_grid": False}]
    rep = suboptimality_report(ball, poly, tf_pairs=pairs)
    path = os.path.join(tmp_path, "report.json")
    persist(rep, path)
    back = load(path)
    assert isinstance(back, SuboptimalityReport)
    assert back.to_json() == rep.to_json()
    assert back.rate_ball.mean_risk == rep.rate_ball.mean_risk
    assert back.tf_win_fraction == rep.tf_win_fraction

    swapped = rep.to_json().replace("suppfit-data-1", "suppfit-data-0")
    with open(path, "w") as fh:
        fh.write(swapped)
    with pytest.raises(DataVersionError):
        load(path)
