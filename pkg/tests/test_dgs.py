import logging

import numpy as np
import pytest

from obfkit import dgs
from obfkit.association import Observation, learn
from obfkit.dgs import (DummyPlan, UrlCatalog, build_direct_map, interleave, load_catalog,
                        load_odp_rdf, random_dgs, static_dgs, weighted_dgs)
from obfkit.domains import registrable_domain
from obfkit.errors import CapacityError, FormatError, StrategyError
from obfkit.profile import InterestProfile
from obfkit.taxonomy import data_dir
from obfkit.tracker_sim import Edge, TrackerConfig, TrackerSimulator


def big_catalog(n):
    return UrlCatalog([(f"http://site{i}.example.com/p", None) for i in range(n)])


# catalogs

def test_sample_catalog_loads():
    cat = load_catalog(data_dir() / "fixtures" / "catalog_sample.tsv")
    assert len(cat) == 56
    assert cat.entries[0] == ("http://www.film-archive.com/", "Top/Arts")
    assert len(cat.domains()) == 28


def test_catalog_errors(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("http://ok.com/\tTop/X\nnot a url\tTop/Y\n")
    with pytest.raises(FormatError, match=":2"):
        load_catalog(p)
    p.write_text("# only a comment\n")
    with pytest.raises(FormatError):
        load_catalog(p)
    with pytest.raises(ValueError):
        UrlCatalog([])


def test_odp_rdf(tmp_path):
    p = tmp_path / "content.rdf.u8"
    p.write_text('<RDF>\n<ExternalPage about="http://www.a.com/">\n  <d:Title>A</d:Title>\n'
                 '  <topic>Top/Arts</topic>\n</ExternalPage>\n<ExternalPage about="http://b.org/x">\n'
                 '</ExternalPage>\n<ExternalPage about="http://c.net/">\n<topic>Top/News</topic>\n</RDF>\n')
    cat = load_odp_rdf(p)
    assert cat.entries == [("http://www.a.com/", "Top/Arts"), ("http://b.org/x", None), ("http://c.net/", "Top/News")]
    assert len(load_odp_rdf(p, limit=1)) == 1


# random

def test_random_25_distinct():
    plan = random_dgs(big_catalog(5000), 25, seed=1)
    assert len(plan.urls) == len(set(plan.urls)) == 25
    assert plan.strategy == "random" and plan.target_gics == ()


def test_random_whole_catalog_shuffled():
    cat = big_catalog(40)
    plan = random_dgs(cat, 40, seed=2)
    assert sorted(plan.urls) == sorted(cat.urls) and list(plan.urls) != cat.urls


def test_random_deterministic_and_capacity():
    cat = big_catalog(100)
    assert random_dgs(cat, 10, 7) == random_dgs(cat, 10, 7)
    assert random_dgs(cat, 10, 7) != random_dgs(cat, 10, 8)
    with pytest.raises(CapacityError):
        random_dgs(cat, 101, 1)


# direct map

ROOTS = ["Sports", "News", "Games", "Science", "Pets & Animals", "Books & Literature", "Real Estate", "Travel",
         "Shopping", "Jobs & Education"]
GT = {f"{g.split()[0].lower()}{k}.com": [(g, 1.0)] for g in ROOTS for k in range(6)}
GT["flicker.com"] = [("Travel", 1.0), ("Pets & Animals", 0.3)]


def sim_for(tax, **kw):
    return TrackerSimulator(TrackerConfig({d: tuple(Edge(*e) for e in es) for d, es in GT.items()}, **kw), tax)


def test_direct_map_noiseless_equals_truth(tax):
    sim = TrackerSimulator(sim_for(tax).config.noiseless(), tax)
    m = build_direct_map(sim, list(GT), repeats=20, threshold=1.0)
    expect = {g: sorted(d for d, es in GT.items() if any(e[0] == g for e in es)) for g in tax.roots}
    assert {g: sorted(m.bucket(g)) for g in tax.roots} == expect


def test_direct_map_zero_threshold_keeps_everything_observed(tax):
    sim = sim_for(tax, coverage=1.0)
    m = build_direct_map(sim, list(GT), repeats=50, threshold=0.0)
    assert "flicker.com" in m.bucket("Pets & Animals") and "flicker.com" in m.bucket("Travel")
    assert m.bucket("Autos & Vehicles") == []


def test_direct_map_excludes_flicker(tax):
    sim = sim_for(tax, coverage=1.0)
    m = build_direct_map(sim, list(GT), repeats=2000, threshold=0.5)
    assert 0.25 < m.frequencies["flicker.com"]["Pets & Animals"] < 0.35
    assert "flicker.com" not in m.bucket("Pets & Animals") and "flicker.com" in m.bucket("Travel")


def test_direct_map_errors(tax):
    with pytest.raises(ValueError):
        build_direct_map(sim_for(tax), [], 10)
    with pytest.raises(ValueError):
        build_direct_map(sim_for(tax), ["a.com"], 0)


# static

def direct(tax):
    return build_direct_map(TrackerSimulator(sim_for(tax).config.noiseless(), tax), list(GT), 10, 1.0)


def test_static_sizes(tax):
    m = direct(tax)
    assert len(static_dgs(m, ROOTS[:5], 5, 1).urls) == 25
    plan = static_dgs(m, ROOTS, 5, 1)
    assert len(plan.urls) == 50 and plan.target_gics == tuple(ROOTS)
    one = static_dgs(m, ["Pets & Animals"], 1, 3)
    assert len(one.urls) == 1 and registrable_domain(one.urls[0]) in m.bucket("Pets & Animals")


def test_static_partitions_evenly(tax):
    plan = static_dgs(direct(tax), ROOTS[:5], 5, 4)
    for i, g in enumerate(ROOTS[:5]):
        chunk = plan.urls[5 * i:5 * i + 5]
        assert len(set(chunk)) == 5
        assert all(any(e[0] == g for e in GT[registrable_domain(u)]) for u in chunk)


def test_static_thin_bucket_reuses_and_warns(tax, caplog):
    m = direct(tax)
    caplog.set_level(logging.WARNING, logger="obfkit")
    plan = static_dgs(m, ["Pets & Animals"], 10, 1)
    assert len(plan.urls) == 10 and len(set(plan.urls)) <= 7
    assert "reusing" in caplog.text


def test_static_empty_bucket_names_gic(tax):
    with pytest.raises(StrategyError, match="Autos & Vehicles"):
        static_dgs(direct(tax), ["Sports", "Autos & Vehicles"], 2, 1)
    with pytest.raises(ValueError):
        static_dgs(direct(tax), [], 2, 1)
    with pytest.raises(ValueError):
        static_dgs(direct(tax), ["Sports"], 0, 1)


def test_static_plan_hits_targets_noiseless(tax):
    sim = TrackerSimulator(sim_for(tax).config.noiseless(), tax)
    target = ROOTS[2:7]
    plan = static_dgs(direct(tax), target, 3, 9)
    assert sim.run_session(list(plan.urls), 1).gics >= set(target)


# weighted

def model_for(tax, rows):
    return learn([Observation(f"u{i}", frozenset(ds), InterestProfile.from_gics(gs, tax))
                  for i, (ds, gs) in enumerate(rows)])


def test_weighted_point_mass(tax):
    rows = [(["hot.com"], ["Pets & Animals"])] * 50 + [([f"o{i}.com"], ["Sports"]) for i in range(30)]
    m = learn([Observation(f"u{i}", frozenset(ds), InterestProfile.from_gics(gs, tax))
               for i, (ds, gs) in enumerate(rows)], epsilon=1e-12)
    picks = {weighted_dgs(m, ["Pets & Animals"], 1, s).urls[0] for s in range(100)}
    assert picks == {"http://hot.com/"}


def test_weighted_25_distinct(tax):
    rows = [([f"d{i}.com", f"d{i + 1}.com"], [tax.roots[i % 24]]) for i in range(80)]
    plan = weighted_dgs(model_for(tax, rows), list(tax.roots[:5]), 5, 3)
    assert len(plan.urls) == len(set(plan.urls)) == 25


def test_weighted_uniform_column_chi_square(tax):
    rows = [([f"d{i}.com"], ["Pets & Animals"]) for i in range(10)]
    m = model_for(tax, rows)
    draws = 10_000
    hits = np.zeros(10)
    for s in range(draws):
        hits[m.index[registrable_domain(weighted_dgs(m, ["Pets & Animals"], 1, s).urls[0])]] += 1
    share = hits / draws
    assert np.abs(share - 0.1).max() <= 0.03
    chi2 = ((hits - draws / 10) ** 2 / (draws / 10)).sum()
    assert chi2 < 27.88  # df=9, alpha=0.001


def test_weighted_degenerate_column_warns(tax, caplog):
    m = model_for(tax, [(["a.com", "b.com"], ["Sports"])])
    caplog.set_level(logging.WARNING, logger="obfkit")
    plan = weighted_dgs(m, ["Pets & Animals"], 2, 1)
    assert sorted(plan.urls) == ["http://a.com/", "http://b.com/"]
    assert "uniformly" in caplog.text


def test_weighted_runs_out(tax):
    m = model_for(tax, [(["a.com", "b.com"], ["Sports"])])
    with pytest.raises(StrategyError):
        weighted_dgs(m, ["Sports", "Pets & Animals"], 2, 1)


def test_strategies_deterministic(tax):
    rows = [([f"d{i}.com", f"d{i + 3}.com"], [tax.roots[i % 24]]) for i in range(60)]
    m = model_for(tax, rows)
    assert weighted_dgs(m, ["News", "Pets & Animals"], 3, 5) == weighted_dgs(m, ["News", "Pets & Animals"], 3, 5)
    assert static_dgs(direct(tax), ROOTS[:3], 4, 5) == static_dgs(direct(tax), ROOTS[:3], 4, 5)


# interleave

def test_interleave_paper_shape():
    real = [f"r{i}" for i in range(100)]
    dummy = [f"d{i}" for i in range(25)]
    out = interleave(real, DummyPlan("random", tuple(dummy)), 80)
    assert len(out) == 125
    assert out[:80] == real[:80]
    assert out[80:120:2] == real[80:] and out[81:120:2] == dummy[:20]
    assert out[120:] == dummy[20:]


def test_interleave_edges():
    real = [f"r{i}" for i in range(30)]
    assert interleave(real, [], 10) == real
    assert interleave(real, ["x", "y"], 30) == real + ["x", "y"]
    assert interleave(real, ["x", "y"], 5, dummy_first=True)[5:9] == ["x", "r5", "y", "r6"]
    with pytest.raises(ValueError):
        interleave(real, ["x"], 31)


def test_plan_json_round_trip():
    plan = DummyPlan("static", ("http://a.com/",), ("Pets",))
    assert DummyPlan.from_dict(plan.to_dict()) == plan
    with pytest.raises(FormatError):
        DummyPlan.from_dict({"strategy": "clever", "urls": []})


def test_default_start():
    assert dgs.DEFAULT_START == 80
