import numpy as np
import pytest

from obfkit.errors import FormatError, LookupFailure
from obfkit.profile import overlap
from obfkit.tracker_sim import Edge, TrackerConfig, TrackerSimulator, advance_epoch, probe_domain, run_session


def cfg(gt, **kw):
    return TrackerConfig({d: tuple(Edge(*e) for e in es) for d, es in gt.items()}, **kw)


WORLD = {
    "wired.com": [("Computers & Electronics", 1.0), ("Science", 0.4), ("Business & Industrial", 0.3)],
    "espn.com": [("Sports", 0.7)],
    "cooking.net": [("Food & Drink", 0.5), ("Home & Garden", 0.2)],
    "zillow.com": [("Real Estate", 0.9)],
    "kbb.com": [("Autos & Vehicles", 0.6), ("Shopping", 0.3)],
}
SESSION = ["https://www.wired.com/a", "https://espn.com/b", "http://cooking.net/c", "https://zillow.com/",
           "https://wired.com/b", "https://kbb.com/x", "https://unknown.org/", "https://espn.com/c"]


def test_noiseless_single_domain_every_run(tax):
    sim = TrackerSimulator(cfg({"d.com": [("Sports", 1.0)]}, coverage=1.0), tax)
    for seed in range(50):
        assert sim.run_session(["https://d.com/x"], seed).gics == {"Sports"}


def test_zero_coverage_is_empty(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=0.0, broadening_rate=1.0), tax)
    for seed in range(50):
        assert sim.run_session(SESSION, seed).bits.count(1) == 0


def test_unknown_domains_unobserved(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=1.0, broadening_rate=1.0), tax)
    assert run_session(sim, ["https://nobody.example/"], 3).bits.count(1) == 0


def test_validation(tax):
    with pytest.raises(ValueError):
        TrackerSimulator(cfg(WORLD, coverage=1.5), tax)
    with pytest.raises(ValueError):
        TrackerSimulator(cfg({}), tax)
    with pytest.raises(LookupFailure):
        TrackerSimulator(cfg({"d.com": [("Astrology", 1.0)]}), tax)
    with pytest.raises(ValueError):
        TrackerSimulator(cfg({"d.com": [("Sports", 1.2)]}), tax)


def test_probe_noiseless(tax):
    sim = TrackerSimulator(cfg(WORLD).noiseless(), tax)
    freq = probe_domain(sim, "espn.com", 40, 1)
    assert freq["Sports"] == 1.0
    assert sum(freq.values()) == 1.0


def test_probe_wired_flicker(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=1.0), tax)
    freq = sim.probe_domain("wired.com", 200, 11)
    assert freq["Computers & Electronics"] == 1.0
    assert 0 < freq["Science"] < 1 and 0 < freq["Business & Industrial"] < 1
    others = set(freq) - {"Computers & Electronics", "Science", "Business & Industrial"}
    assert all(freq[g] == 0 for g in others)


def test_probe_single_repeat_binary(tax):
    sim = TrackerSimulator(cfg(WORLD, broadening_rate=0.5), tax)
    for seed in range(20):
        assert set(sim.probe_domain("kbb.com", 1, seed).values()) <= {0.0, 1.0}
    with pytest.raises(ValueError):
        sim.probe_domain("kbb.com", 0, 1)


def test_probe_repeat_matches_session(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=0.8, broadening_rate=0.4), tax)
    seeds = sim.probe_seeds(5, 30)
    manual = np.mean([sim.run_session(["https://kbb.com/"], int(s)).bits for s in seeds], axis=0)
    got = sim.probe_domain("kbb.com", 30, 5)
    assert list(got.values()) == pytest.approx(manual.tolist())


def test_probe_converges_to_theta(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=1.0), tax)
    for domain, edges in WORLD.items():
        freq = sim.probe_domain(domain, 10000, 2)
        for g, theta in edges:
            assert freq[g] == pytest.approx(theta, abs=0.02)


def test_coverage_scales_probe(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=0.75), tax)
    assert sim.probe_domain("espn.com", 10000, 4)["Sports"] == pytest.approx(0.75 * 0.7, abs=0.02)


def test_monotone_coverage(tax):
    sessions = [SESSION, SESSION[:3], SESSION[::-1] * 2]
    for seed in range(40):
        prev = set()
        for c in (0.0, 0.2, 0.5, 0.75, 0.9, 1.0):
            sim = TrackerSimulator(cfg(WORLD, coverage=c), tax)
            cur = set().union(*(sim.run_session(s, seed).gics for s in sessions))
            assert prev <= cur
            prev = cur


def test_permutation_invariance_without_broadening(tax):
    sim = TrackerSimulator(cfg(WORLD, coverage=0.6), tax)
    rng = np.random.default_rng(0)
    for seed in range(60):
        perm = [SESSION[i] for i in rng.permutation(len(SESSION))]
        assert sim.run_session(SESSION, seed) == sim.run_session(perm, seed)


def test_broadening_adds_at_most_cap(tax):
    sim = TrackerSimulator(cfg({"d.com": [("Sports", 1.0)]}, coverage=1.0, broadening_rate=1.0,
                               extra_interest_max=2), tax)
    sizes = {sim.run_session(["https://d.com/"], s).bits.count(1) for s in range(300)}
    assert sizes <= {1, 2, 3} and len(sizes) > 1


def test_leaves_reported(tax):
    sim = TrackerSimulator(cfg({"d.com": [("Sports", 1.0)]}, coverage=1.0), tax)
    res = sim.run_session_detail(["https://d.com/"], 1)
    assert res.leaves == {"Sports"} and res.observed_visits == 1


def test_determinism_and_fresh_instances(tax):
    a = TrackerSimulator(cfg(WORLD, broadening_rate=0.3, drift_rate=0.2, seed=5), tax)
    b = TrackerSimulator(cfg(WORLD, broadening_rate=0.3, drift_rate=0.2, seed=5), tax)
    for seed in range(30):
        assert a.run_session(SESSION, seed) == b.run_session(SESSION, seed)
    assert a.advance_epoch().config == b.advance_epoch().config


def test_no_drift_keeps_profiles(tax):
    sim = TrackerSimulator(cfg(WORLD, drift_rate=0.0, broadening_rate=0.3), tax)
    nxt = advance_epoch(sim)
    assert nxt.epoch == 1 and sim.epoch == 0
    assert nxt.config.ground_truth == sim.config.ground_truth


def test_full_drift_reaches_chance_overlap(tax):
    # oracle: the simulator's own Monte-Carlo overlap between two independent random worlds
    rng = np.random.default_rng(3)
    roots = tax.roots
    gt = {f"site{i}.com": [(roots[int(rng.integers(24))], 1.0)] for i in range(60)}
    sim0 = TrackerSimulator(cfg(gt, coverage=1.0, drift_rate=1.0, seed=8), tax)
    sim1 = sim0.advance_epoch()
    alt = TrackerSimulator(cfg({d: [(roots[int(rng.integers(24))], 1.0)] for d in gt}, coverage=1.0), tax)
    sessions = [[f"https://site{j}.com/" for j in rng.choice(60, 6, replace=False)] for _ in range(400)]
    drifted = np.mean([overlap(sim0.run_session(s, 1), sim1.run_session(s, 1)) for s in sessions])
    chance = np.mean([overlap(sim0.run_session(s, 1), alt.run_session(s, 1)) for s in sessions])
    assert drifted == pytest.approx(chance, abs=0.05)
    assert drifted < 0.3


def test_drift_leaves_past_epoch_alone(tax):
    sim = TrackerSimulator(cfg(WORLD, drift_rate=0.5, seed=2), tax)
    before = [sim.run_session(SESSION, s) for s in range(10)]
    sim.advance_epoch(3)
    assert before == [sim.run_session(SESSION, s) for s in range(10)]


def test_config_round_trip(tmp_path, tax):
    c = cfg(WORLD, coverage=0.7, broadening_rate=0.1, drift_rate=0.05, seed=9)
    c.save(tmp_path / "t.json")
    assert TrackerConfig.load(tmp_path / "t.json") == c
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(FormatError):
        TrackerConfig.load(tmp_path / "bad.json")
