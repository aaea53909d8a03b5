"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import json
import math
import time

import numpy as np

from etclab import cli, consistency as mc, datarate as dr, plants, sampling as sa, stc, triggers as trg
from etclab.errors import NoValidCandidate
from etclab.simulation import SimConfig, simulate

import oracles


# 1 ---------------------------------------------------------------------------

def test_c01_consistency_ratio(acceptance_record):
    t0 = time.perf_counter()
    cfg = mc.McConfig(trajectories=200, horizon=100.0, dt=1e-4, seed=2024)
    rows, ok = [], True
    for n in (1, 2, 3):
        res = mc.matched_comparison(mc.IntegratorModel(n, 1.0), 0.5 * n, cfg)
        target = n / (n + 2)
        dev = res.ratio / target - 1
        good = abs(dev) <= 0.05 and res.etc.events >= 10_000
        ok &= good
        rows.append(f"n={n} ratio={res.ratio:.4f}+-{res.ci_ratio:.4f} target={target:.4f} "
                    f"dev={dev:+.2%} events={res.etc.events}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 300
    acceptance_record(1, "consistency ratio n/(n+2)", ok, "; ".join(rows) + f"; {elapsed:.0f}s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c02_optimal_cost(acceptance_record):
    t0 = time.perf_counter()
    cfg = mc.McConfig(trajectories=40, horizon=500.0, dt=1e-4, seed=77)
    rows, ok = [], True
    for n, mu in ((1, 1.0), (2, 1.0)):
        model = mc.IntegratorModel(n, mu)
        rho_star = mc.optimal_threshold(n, mu)
        target = math.sqrt(2 * n * mu) * math.sqrt(n / (n + 2))
        ks = range(-2, 3)
        Js = [mc.simulate_etc_integrator(model, rho_star * 2 ** (k / 2), cfg).J for k in ks]
        J_star = Js[2]
        k_best = list(ks)[int(np.argmin(Js))]
        dev = J_star / target - 1
        good = abs(dev) <= 0.05 and abs(k_best) <= 1
        ok &= good
        rows.append(f"(n={n},mu={mu:g}) J(rho*)={J_star:.4f} target={target:.4f} dev={dev:+.2%} "
                    f"argmin k={k_best}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 300
    acceptance_record(2, "optimal cost at rho*", ok, "; ".join(rows) + f"; {elapsed:.0f}s")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_c03_figure12(acceptance_record):
    res = mc.figure12_experiment(seed=12, trajectories=100, horizon=100.0, dt=1e-4)
    thr_ok = res.threshold == math.sqrt(0.5) and f"{res.threshold:.4f}" == "0.7071"
    dev = res.ratio * 3 - 1
    rate_dev = res.etc.rate / 2.0 - 1
    ok = thr_ok and abs(dev) <= 0.05 and res.period == 0.5
    acceptance_record(3, "scalar matched-interval experiment", ok,
                      f"threshold +-{res.threshold:.4f}, ratio={res.ratio:.4f} (dev {dev:+.2%} from 1/3), "
                      f"ETC rate {res.etc.rate:.4f}/s (dev {rate_dev:+.2%} from 2)")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c04_periodic_pattern(acceptance_record):
    p = plants.sample_example_plant()
    rule = trg.Relative(gamma=trg.SQUARE, alpha=trg.SQUARE, sigma=0.05)
    _, log = simulate(p, rule, [2.0, 0.0], SimConfig(horizon=100.0), record=False)
    lag, peak = sa.autocorrelation_lag(log.t, log.h)
    target = 2 * math.pi / math.sqrt(3)
    dev = lag / target - 1
    ok = abs(dev) <= 0.05
    acceptance_record(4, "autocorrelation lag 2pi/sqrt(3)", ok,
                      f"lag={lag:.3f}s target={target:.3f}s dev={dev:+.2%} ({len(log)} events, peak {peak:.2f})")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c05_taylor_scaling(acceptance_record):
    rng = np.random.default_rng(5)
    sigmas = np.array([0.1, 0.05, 0.025, 0.0125])
    worst = np.zeros(len(sigmas))
    for _ in range(20):
        p = plants.random_hurwitz_plant(rng, 2)
        phis = rng.uniform(0, math.pi, 100)
        X = np.vstack([np.cos(phis), np.sin(phis)])
        for i, s in enumerate(sigmas):
            q = sa.IetQuery(p, float(s), mode="linear", delta_max=2.0, scan_step=1e-4)
            theta = sa.inter_event_times(q, X)
            approx = np.array([sa.taylor_iet_approx(p, float(s), X[:, k]) for k in range(X.shape[1])])
            fin = np.isfinite(theta)
            worst[i] = max(worst[i], float(np.max(np.abs(approx[fin] - theta[fin]))))
    slope = float(np.polyfit(np.log(sigmas), np.log(worst), 1)[0])
    ok = slope >= 1.8
    acceptance_record(5, "Taylor remainder slope", ok,
                      f"slope={slope:.3f}; max remainders " + ", ".join(f"{w:.3g}" for w in worst))
    assert ok


# 6 ---------------------------------------------------------------------------

def test_c06_theta_oracles(acceptance_record, rng):
    r = plants.radial_plant()
    x = np.array([0.6, -0.8])
    errs = {
        "radial quadratic 0.25 -> 1/3": sa.inter_event_time(sa.IetQuery(r, 0.25), x) - 1 / 3,
        "radial linear 0.25 -> 0.2": sa.inter_event_time(sa.IetQuery(r, 0.25, mode="linear"), x) - 0.2,
        "scalar linear 0.5 -> ln(4/3)": sa.inter_event_time(
            sa.IetQuery(plants.scalar_unstable_plant(), 0.5, mode="linear"), [1.0]) - math.log(4 / 3),
    }
    ok = all(abs(v) <= 1e-8 for v in errs.values())
    ok &= abs(oracles.radial_theta_quadratic(0.25) - 1 / 3) < 1e-15
    scales = [1e-3, 1.0, 1e3]
    rays = 0
    for _ in range(10):
        p = plants.random_hurwitz_plant(rng, 2)
        for mode in ("linear", "quadratic"):
            q = sa.IetQuery(p, 0.1, mode=mode, delta_max=5.0)
            ok &= sa.ray_invariance_check(q, rng.normal(size=2), scales)
            rays += 1
    worst = max(abs(v) for v in errs.values())
    acceptance_record(6, "exact theta oracles", ok,
                      f"max |error| {worst:.2e} on 3 oracles; ray invariance on {rays} rays at 1e-3..1e3")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_c07_stc_lower_bound(acceptance_record):
    rng = np.random.default_rng(7)
    checked = skipped = violations = 0
    for _ in range(1000):
        n = int(rng.choice([2, 3]))
        p = plants.random_hurwitz_plant(rng, n)
        x = rng.normal(size=n)
        grid = stc.CandidateGrid.from_spec(float(10 ** rng.uniform(-3, -1.5)), float(10 ** rng.uniform(-0.5, 0.5)),
                                           int(rng.integers(5, 60)), str(rng.choice(["log", "linear"])))
        sigma = float(rng.uniform(0.05, 0.6))
        mode = str(rng.choice(["linear", "quadratic"]))
        try:
            d = stc.next_sample_relative(p, sigma, x, grid, mode)
        except NoValidCandidate:
            skipped += 1
            continue
        checked += 1
        if not stc.validate_lower_bound(p, sigma, x, d, mode):
            violations += 1
    example = stc.next_sample_relative(plants.radial_plant(), 0.25, [1.0, 0.0],
                                       stc.CandidateGrid([0.05, 0.10, 0.15, 0.20, 0.25]))
    ok = violations == 0 and example == 0.15
    acceptance_record(7, "STC never exceeds theta", ok,
                      f"{checked} triples checked, {skipped} with no valid candidate, {violations} violations; "
                      f"boundary example -> {example}")
    assert ok


# 8 ---------------------------------------------------------------------------

def _nonincreasing(v, slack):
    return float(np.max(np.diff(v))) <= slack


def test_c08_lyapunov_suite(acceptance_record):
    rng = np.random.default_rng(8)
    cfg = SimConfig(step=5e-3, horizon=5.0)
    worst = {"relative": -math.inf, "dynamic": -math.inf, "eta": math.inf, "lyapunov": -math.inf}
    ok = True
    for _ in range(50):
        p = plants.random_hurwitz_plant(rng, 2)
        P, alpha, gamma = trg.quadratic_iss_certificate(p)
        phi = rng.uniform(0, 2 * math.pi)
        x0 = np.array([math.cos(phi), math.sin(phi)])
        V = lambda X: np.einsum("ki,ij,kj->k", X, P, X)
        slack = 1e-8 * max(1.0, float(x0 @ P @ x0))

        traj, _ = simulate(p, trg.Relative(gamma=gamma, alpha=alpha, sigma=0.5), x0, cfg)
        v = V(traj.x)
        worst["relative"] = max(worst["relative"], float(np.max(np.diff(v))))
        ok &= _nonincreasing(v, slack)

        rule = trg.Dynamic(beta=trg.IDENTITY, alpha=alpha, gamma=gamma, sigma=0.5)
        traj, _ = simulate(p, rule, x0, cfg)
        eta = -traj.g
        w = V(traj.x) + eta
        worst["eta"] = min(worst["eta"], float(np.min(eta)))
        worst["dynamic"] = max(worst["dynamic"], float(np.max(np.diff(w))))
        ok &= bool(np.min(eta) >= -1e-8) and _nonincreasing(w, slack)

        sig = min(0.9, 0.5 / float(np.max(np.linalg.eigvalsh(P))))
        rule = trg.LyapunovDecrease(P, sigma=sig)
        traj, log = simulate(p, rule, x0, cfg)
        ok &= bool(np.max(traj.g) <= slack)
        Vj = V(log.states)
        rec = Vj[1:] - (1 - sig * log.h) * Vj[:-1]
        if len(rec):
            worst["lyapunov"] = max(worst["lyapunov"], float(np.max(rec)))
            ok &= bool(np.max(rec) <= slack)
        worst["lyapunov"] = max(worst["lyapunov"], float(np.max(traj.g)))
    acceptance_record(8, "Lyapunov/ISS decrease", ok,
                      f"50 loops; max dV relative {worst['relative']:.2e}, max d(V+eta) {worst['dynamic']:.2e}, "
                      f"min eta {worst['eta']:.2e}, max recursion excess {worst['lyapunov']:.2e}")
    assert ok


# 9 ---------------------------------------------------------------------------

def _containment(plant, sigma, regions, horizon, rng, count=10):
    q = sa.IetQuery(plant, sigma, mode="quadratic", error="input")
    ab = sa.build_abstraction(plant, q, regions)
    rule = trg.Relative(gamma=trg.SQUARE, alpha=trg.SQUARE, sigma=sigma)
    pairs = misses = 0
    for _ in range(count):
        x0 = rng.normal(size=2)
        _, log = simulate(plant, rule, x0, SimConfig(horizon=horizon), record=False)
        for j in range(len(log.h)):
            pairs += 1
            misses += not ab.contains(ab.region_of(log.states[j]), float(log.h[j]))
    return pairs, misses


def test_c09_abstraction_containment(acceptance_record):
    rng = np.random.default_rng(9)
    pe, me = _containment(plants.sample_example_plant(), 0.05, 36, 100.0, rng)
    pr, mr = _containment(plants.radial_plant(), 0.25, 8, 100.0, rng)
    ok = me == 0 and mr == 0 and pe > 0 and pr > 0
    acceptance_record(9, "abstraction containment", ok,
                      f"example: {pe} pairs, {me} outside; radial: {pr} pairs, {mr} outside")
    assert ok


# 10 --------------------------------------------------------------------------

def test_c10_datarate(acceptance_record):
    e1 = abs(dr.ttc_min_rate(np.diag([1.0, -2.0, 3.0])) - 4 / math.log(2))
    e2 = abs(dr.breakeven_delay(1.0, 2.0, 0.5) - math.log(5))
    ch0 = dr.ChannelSpec(delta_bar=0.0, nu=2.0, rho0=0.5, psi=0.1)
    rep = dr.simulate_scalar_channel(1.0, 1.0, -3.0, ch0, horizon=20.0, delay_draw="zero")
    gaps = np.diff(rep.receive_times)
    e3 = float(np.max(np.abs(gaps - math.log(2) / 1.1)))
    rng = np.random.default_rng(10)
    runs = receptions = failures = 0
    for run in range(100):
        A = float(rng.uniform(0.2, 2.0))
        ch = dr.ChannelSpec(delta_bar=float(rng.uniform(0.01, 0.3)), nu=float(rng.uniform(2.0, 16.0)),
                            rho0=float(rng.uniform(0.3, 0.8)), psi=float(rng.uniform(0.0, 0.5)))
        try:
            r = dr.simulate_scalar_channel(A, 1.0, -A - float(rng.uniform(0.5, 3.0)), ch, horizon=20.0,
                                           delay_draw="uniform", seed=run,
                                           correction=str(rng.choice(["worst", "midpoint"])))
        except dr.QuantizerTooCoarse:
            continue
        runs += 1
        c = r.contraction_holds(ch)
        receptions += len(c)
        failures += int(np.sum(~c))
    ok = e1 <= 1e-12 and e2 <= 1e-12 and e3 <= 1e-6 and failures == 0 and receptions > 0
    acceptance_record(10, "data-rate formulas and contraction", ok,
                      f"|r_TTC err|={e1:.1e}, |breakeven err|={e2:.1e}, reception gap err={e3:.1e}, "
                      f"contraction on {receptions} receptions in {runs} runs with {failures} failures")
    assert ok


# 11 --------------------------------------------------------------------------

DETERMINISM_CASES = [
    {"experiment": "simulate", "seed": 1, "plant": {"catalog": "sample_example"},
     "rule": {"kind": "relative", "sigma": 0.1}, "params": {"x0": [1.0, 0.5], "horizon": 5.0}},
    {"experiment": "stc", "seed": 3, "plant": {"catalog": "sample_example"},
     "params": {"x0": [1.0, 0.0], "sigma": 0.2, "steps": 10, "grid": {"min": 0.01, "max": 2.0, "count": 50}}},
    {"experiment": "abstraction", "seed": 3, "plant": {"catalog": "sample_example"},
     "params": {"sigma": 0.05, "regions": 6, "rays_per_region": 4, "delta_samples": 4}},
    {"experiment": "consistency", "seed": 2,
     "params": {"n": 2, "mu": 1.0, "trajectories": 6, "horizon": 20.0, "dt": 1e-3}},
    {"experiment": "datarate", "seed": 5,
     "params": {"A": 1.0, "B": 1.0, "K": -3.0, "delta_bar": 0.1, "nu": 4.0, "rho0": 0.5, "delay": "uniform",
                "runs": 3}},
    {"experiment": "figure12", "seed": 4,
     "params": {"trajectories": 4, "horizon": 10.0, "dt": 1e-3, "path_horizon": 2.0, "path_count": 2}},
]


def test_c11_determinism(acceptance_record, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    compared = mismatched = 0
    for cfg in DETERMINISM_CASES:
        cfg_path.write_text(json.dumps(cfg))
        outs = []
        for rep in range(2):
            out = tmp_path / f"{cfg['experiment']}_{rep}"
            assert cli.main(["run", str(cfg_path), "--out", str(out)]) == 0
            outs.append(out)
        for f in sorted(outs[0].glob("*.csv")):
            compared += 1
            mismatched += f.read_bytes() != (outs[1] / f.name).read_bytes()
    capsys.readouterr()
    ok = mismatched == 0 and compared >= len(DETERMINISM_CASES)
    acceptance_record(11, "determinism", ok,
                      f"{compared} CSV files from {len(DETERMINISM_CASES)} experiments, {mismatched} differ")
    assert ok
