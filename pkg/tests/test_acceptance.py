"""Acceptance suite: numbered end-to-end checks for the whole optimizer.

Each test prints one PASS/FAIL line on the real stdout so the verdicts
survive pytest's capture.  The Monte Carlo criteria (5, 6, 7) run the full
pipeline at the reference parameter set (4 users, 4 movable antennas,
8 paths, 0.1 m wavelength, -90 dBm noise) and take several minutes on one
core; everything else is seconds.
"""

import sys
import time

import numpy as np
import pytest

from ma_rsma.channel import (AntennaLayout, SystemParams, channel_matrix,
                             dbm_to_watts, derive_seed, generate_scenario)
from ma_rsma.driver import SCHEMES, OptimizerConfig, run
from ma_rsma.experiment import (ExperimentConfig, read_rows_csv,
                                run_experiment, summarize)
from ma_rsma.fp import refresh_aux
from ma_rsma.metrics import (Beamformer, common_constraint_values, mf_outputs,
                             RateAllocation, reformulated_total, sinr_arrays)
from ma_rsma.positions import objective_gradient
from ma_rsma.solver import SubproblemSpec, solve
from oracles import central_diff, projected_gradient_solve

LN2 = float(np.log(2.0))


def verdict(capsys, num, name, ok, detail):
    line = "[criterion %d] %-22s %s  (%s)" % (num, name, "PASS" if ok else "FAIL", detail)
    with capsys.disabled():
        sys.stdout.write("\n" + line + "\n")
        sys.stdout.flush()


def paper_system(aperture_wavelengths, power_dbm=30.0):
    return SystemParams(num_users=4, num_tx_antennas=4, num_paths=8,
                        wavelength=0.1, power_budget_w=dbm_to_watts(power_dbm),
                        noise_power_w=1e-12, x_max=aperture_wavelengths * 0.1)


def jittered_layout(params, rng):
    """Wavelength grid with +-0.2 wavelength jitter; spacing stays legal."""
    lam = params.wavelength
    n = params.num_tx_antennas
    x = lam * (np.arange(n) + 0.2 * rng.uniform(-1.0, 1.0, n))
    return AntennaLayout(np.sort(x) - min(0.0, np.min(x)) + params.x_min)


def random_point(params, rng, power_frac=0.9):
    fmat = rng.standard_normal((params.num_tx_antennas, params.num_users + 1)) \
        + 1j * rng.standard_normal((params.num_tx_antennas, params.num_users + 1))
    fmat *= np.sqrt(power_frac * params.power_budget_w / np.sum(np.abs(fmat) ** 2))
    return fmat


def test_criterion_1_surrogate_tightness(capsys):
    tic = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_g = 0.0
    worst_t = 0.0
    for i in range(200):
        params = SystemParams(num_users=int(rng.integers(1, 5)),
                              num_tx_antennas=int(rng.integers(1, 7)),
                              num_paths=int(rng.integers(1, 9)),
                              noise_power_w=1e-12, x_max=0.8)
        sc = generate_scenario(params, 1000 + i)
        layout = jittered_layout(params, rng)
        channels = channel_matrix(sc, layout)
        fmat = random_point(params, rng)
        noise = params.noise_vector()
        aux = refresh_aux(channels, fmat, noise)
        r_c = rng.uniform(0.0, 0.2, params.num_users)
        ghat = reformulated_total(channels, fmat, r_c, aux.alpha, aux.beta, noise)
        sinr_p, sinr_c = sinr_arrays(mf_outputs(channels, fmat), noise)
        true_rate = float(np.sum(np.log2(1.0 + sinr_p)) + np.sum(r_c))
        worst_g = max(worst_g, abs(ghat - true_rate))
        t = common_constraint_values(channels, fmat, aux.mu, aux.eta, noise)
        worst_t = max(worst_t, float(np.max(np.abs(t - np.log1p(sinr_c)))))
    elapsed = time.perf_counter() - tic
    ok = worst_g <= 1e-8 and worst_t <= 1e-10 and elapsed < 10.0
    verdict(capsys, 1, "surrogate tightness", ok,
            "max |G-rate| %.2e, max |t-ln(1+sinr)| %.2e, 200 instances, %.1f s"
            % (worst_g, worst_t, elapsed))
    assert worst_g <= 1e-8
    assert worst_t <= 1e-10
    assert elapsed < 10.0


def test_criterion_2_position_gradient_oracle(capsys):
    tic = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < 100 and attempts < 140:
        attempts += 1
        params = SystemParams(num_users=int(rng.integers(1, 5)),
                              num_tx_antennas=int(rng.integers(2, 5)),
                              num_paths=int(rng.integers(2, 9)),
                              noise_power_w=1e-12, x_max=0.8)
        sc = generate_scenario(params, 2000 + attempts)
        layout = jittered_layout(params, rng)
        channels = channel_matrix(sc, layout)
        fmat = random_point(params, rng)
        noise = params.noise_vector()
        aux = refresh_aux(channels, fmat, noise)
        analytic = objective_gradient(layout, sc, Beamformer(fmat),
                                      aux.alpha, aux.beta)
        scale = float(np.linalg.norm(analytic))
        if scale < 1e-3:  # degenerate: nothing to compare against
            continue

        def value(x):
            ch = channel_matrix(sc, AntennaLayout(x))
            return reformulated_total(ch, fmat, np.zeros(params.num_users),
                                      aux.alpha, aux.beta, noise)

        fd = central_diff(value, layout.positions.copy(),
                          h=1e-6 * params.wavelength)
        worst = max(worst, float(np.linalg.norm(analytic - fd)) / scale)
        checked += 1
    elapsed = time.perf_counter() - tic
    ok = checked >= 100 and worst <= 1e-4 and elapsed < 30.0
    verdict(capsys, 2, "position gradient", ok,
            "max rel err %.2e over %d instances, %.1f s" % (worst, checked, elapsed))
    assert checked >= 100
    assert worst <= 1e-4
    assert elapsed < 30.0


def test_criterion_3_subproblem_solver_oracle(capsys):
    tic = time.perf_counter()
    rng = np.random.default_rng(303)
    worst_rel = 0.0
    worst_viol = 0.0
    for i in range(50):
        channels = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        noise = np.ones(2)
        power = 10.0
        f0 = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        f0 *= np.sqrt(0.8 * power / np.sum(np.abs(f0) ** 2))
        aux = refresh_aux(channels, f0, noise)
        spec = SubproblemSpec(channels, aux, noise, power,
                              (Beamformer(f0), RateAllocation(np.zeros(2))))
        res = solve(spec)
        best, _ = projected_gradient_solve(channels, aux, noise, power, f0)
        worst_rel = max(worst_rel, abs(res.objective - best) / max(1.0, abs(best)))
        t = common_constraint_values(channels, res.beamformer.matrix,
                                     aux.mu, aux.eta, noise)
        viol = max(res.beamformer.power - power,
                   float(np.max(LN2 * res.rates.total - t)),
                   float(np.max(-res.rates.r_c)))
        worst_viol = max(worst_viol, viol)
    elapsed = time.perf_counter() - tic
    ok = worst_rel <= 1e-4 and worst_viol <= 1e-7 and elapsed < 120.0
    verdict(capsys, 3, "subproblem solver", ok,
            "max rel gap %.2e, max violation %.2e, 50 instances, %.1f s"
            % (worst_rel, worst_viol, elapsed))
    assert worst_rel <= 1e-4
    assert worst_viol <= 1e-7
    assert elapsed < 120.0


def test_criterion_5_scheme_ordering(capsys, tmp_path_factory):
    tic = time.perf_counter()
    cfg = ExperimentConfig(
        axis="power_dbm",
        axis_values=(30.0,),
        system=paper_system(8.0),
        schemes=SCHEMES,
        num_trials=50,
        base_seed=20260822,
        out_dir=str(tmp_path_factory.mktemp("ordering")),
    )
    out = run_experiment(cfg)
    rows = read_rows_csv(out / "rows.csv")
    summary = summarize(rows, schemes=list(SCHEMES), num_trials=50)
    stats = {s.scheme: s for s in summary}
    cfgs, ga, fpa = (stats[name] for name in ("CFGS_MA", "GA_MA", "FPA"))
    gain = cfgs.gain_pct_vs_fpa
    elapsed = time.perf_counter() - tic
    ok = (cfgs.failures == 0 and ga.failures == 0 and fpa.failures == 0
          and cfgs.mean_sum_rate_bps_hz >= ga.mean_sum_rate_bps_hz
          and ga.mean_sum_rate_bps_hz >= fpa.mean_sum_rate_bps_hz
          and gain is not None and gain >= 5.0)
    verdict(capsys, 5, "scheme ordering", ok,
            "means %.2f >= %.2f >= %.2f bps/Hz, gain %.1f%% >= 5%%, 50 trials, %.0f s"
            % (cfgs.mean_sum_rate_bps_hz, ga.mean_sum_rate_bps_hz,
               fpa.mean_sum_rate_bps_hz, gain if gain is not None else -1.0, elapsed))
    assert cfgs.failures == 0 and ga.failures == 0 and fpa.failures == 0
    assert cfgs.mean_sum_rate_bps_hz >= ga.mean_sum_rate_bps_hz
    assert ga.mean_sum_rate_bps_hz >= fpa.mean_sum_rate_bps_hz
    assert gain is not None and gain >= 5.0


@pytest.fixture(scope="module")
def aperture_pair_results():
    """Paired CFGS runs at 6 and 10 wavelength apertures, 50 trials."""
    cfg = OptimizerConfig(scheme="CFGS_MA")
    results = {6.0: [], 10.0: []}
    for trial in range(50):
        seed = derive_seed(20260823, 0.0, trial)
        for aperture in (6.0, 10.0):
            sc = generate_scenario(paper_system(aperture), seed)
            results[aperture].append(run(sc, cfg))
    return results


def test_criterion_6_aperture_monotonicity(capsys, aperture_pair_results):
    mean6 = float(np.mean([r.sum_rate for r in aperture_pair_results[6.0]]))
    mean10 = float(np.mean([r.sum_rate for r in aperture_pair_results[10.0]]))
    ok = mean10 >= mean6
    verdict(capsys, 6, "aperture trend", ok,
            "mean at 10 wavelengths %.2f >= mean at 6 wavelengths %.2f bps/Hz, 50 trials"
            % (mean10, mean6))
    assert mean10 >= mean6


@pytest.fixture(scope="module")
def power_sweep_results():
    """All three schemes at 20/30/40 dBm on shared scenarios, 30 trials."""
    powers = (20.0, 30.0, 40.0)
    results = {(s, p): [] for s in SCHEMES for p in powers}
    for trial in range(30):
        seed = derive_seed(20260824, 0.0, trial)
        for power in powers:
            sc = generate_scenario(paper_system(8.0, power_dbm=power), seed)
            for scheme in SCHEMES:
                results[(scheme, power)].append(run(sc, OptimizerConfig(scheme=scheme)))
    return results


def test_criterion_7_power_monotonicity(capsys, power_sweep_results):
    powers = (20.0, 30.0, 40.0)
    means = {
        scheme: [float(np.mean([r.sum_rate for r in power_sweep_results[(scheme, p)]]))
                 for p in powers]
        for scheme in SCHEMES
    }
    ok = all(m[0] <= m[1] <= m[2] for m in means.values())
    detail = ", ".join("%s %.2f/%.2f/%.2f" % (s, *means[s]) for s in SCHEMES)
    verdict(capsys, 7, "power trend", ok, detail + " bps/Hz at 20/30/40 dBm, 30 trials")
    for scheme in SCHEMES:
        m = means[scheme]
        assert m[0] <= m[1] <= m[2], scheme


def test_criterion_4_monotone_outer_traces(capsys, aperture_pair_results, power_sweep_results):
    pool = [r for results in aperture_pair_results.values() for r in results]
    pool += [r for results in power_sweep_results.values() for r in results]
    checked = 0
    worst_drop = 0.0
    for result in pool:
        if result.scheme != "CFGS_MA":
            continue
        objs = np.array([row.objective for row in result.trace])
        if objs.size > 1:
            worst_drop = max(worst_drop, float(np.max(-np.diff(objs))))
        checked += 1
    ok = checked > 0 and worst_drop <= 1e-9
    verdict(capsys, 4, "monotone outer loop", ok,
            "worst objective drop %.2e over %d full runs" % (worst_drop, checked))
    assert checked > 0
    assert worst_drop <= 1e-9


def test_criterion_8_determinism(capsys, tmp_path_factory):
    cfg = ExperimentConfig(
        axis="power_dbm",
        axis_values=(30.0,),
        system=SystemParams(num_users=2, num_tx_antennas=2, num_paths=4,
                            noise_power_w=1e-12, x_max=0.4),
        schemes=("CFGS_MA", "GA_MA", "FPA"),
        num_trials=2,
        base_seed=7,
    )

    def strip_wall(path):
        return [",".join(line.split(",")[:-1])
                for line in path.read_text().splitlines()]

    out1 = run_experiment(cfg, out_dir=tmp_path_factory.mktemp("det1"))
    out2 = run_experiment(cfg, out_dir=tmp_path_factory.mktemp("det2"))
    same = strip_wall(out1 / "rows.csv") == strip_wall(out2 / "rows.csv")
    verdict(capsys, 8, "determinism", same,
            "two runs, rows.csv identical apart from wall time" if same
            else "rows.csv differ beyond wall time")
    assert same
