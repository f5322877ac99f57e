import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynasto.archive import FailureArchive, FailureRecord
from dynasto.errors import ConfigurationError, ContractError, ProtocolError
from dynasto.rl import train_adversary
from dynasto.search import (FAILURE_ID, GeneticSearch, ParamBounds, ParamSpec, RandomSearch,
                            decode, encode, evaluate_candidate, ga_ask, ga_tell,
                            polynomial_mutation, remove_duplicates, run_search, sbx_crossover)
from dynasto.sim import ScenarioConfig, constant_policy

BOUNDS = ParamBounds.default(archive_size=5)


def test_reversed_range_is_canonicalized_with_warning():
    from dynasto.search import SEARCH_RANGES

    with pytest.warns(UserWarning):
        b = ParamBounds.from_dict(SEARCH_RANGES)
    i = b.names.index("x_adv")
    assert (b.low[i], b.high[i]) == (364.0, 395.0)
    assert b.dim == 10 and BOUNDS.dim == 11 and BOUNDS.names[-1] == FAILURE_ID


def test_integer_bounds_must_be_integral():
    with pytest.raises(ConfigurationError):
        ParamBounds([ParamSpec("l_ego", 0, 1.5, True)])


def test_decode_extremes_and_midpoint():
    lo, _ = decode(np.zeros(11), BOUNDS)
    hi, fid = decode(np.ones(11), BOUNDS)
    assert lo.x_ego == 247.0 and lo.x_adv == 364.0 and lo.s_ego == 20.0 and lo.l_ego == 0
    assert hi.x_ego == 304.0 and hi.x_adv == 395.0 and hi.h_adv == 0.08 and fid == 4
    mid, _ = decode(np.full(11, 0.5), BOUNDS)
    assert mid.h_ego == 0.0 and mid.l_ego == 1  # integer genes round half up


def test_encode_inverse_and_errors():
    cfg = ScenarioConfig(x_ego=247.0, x_adv=364.0, l_ego=0, l_adv=0, tl_ego=0, tl_adv=0,
                         h_ego=-0.08, h_adv=-0.08, s_ego=20.0, s_adv=20.0)
    assert np.array_equal(encode(cfg, 0, BOUNDS), np.zeros(11))
    bad = ScenarioConfig(x_ego=100.0, x_adv=364.0, l_ego=0, l_adv=0, tl_ego=0, tl_adv=0)
    with pytest.raises(ContractError):
        encode(bad, 0, BOUNDS)
    flat = ParamBounds([ParamSpec("x_ego", 250.0, 250.0)])
    assert encode(ScenarioConfig(250.0, 364.0, 0, 0, 0, 0), None, flat)[0] == 0.0


def test_round_trip_random_configs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x = BOUNDS.sample(rng)
        cfg, fid = decode(x, BOUNDS)
        again, fid2 = decode(encode(cfg, fid, BOUNDS), BOUNDS)
        assert fid2 == fid
        for name in BOUNDS.names[:-1]:
            assert abs(getattr(again, name) - getattr(cfg, name)) <= 1e-12


def test_sbx_properties():
    rng = np.random.default_rng(0)
    p = rng.random(11)
    c1, c2 = sbx_crossover(p, p, 15.0, rng)
    assert np.array_equal(c1, p) and np.array_equal(c2, p)
    p1, p2 = np.full(3, 0.3), np.full(3, 0.6)
    kids = np.array([k for _ in range(20000) for k in sbx_crossover(p1, p2, 15.0, rng)])
    assert np.all((kids >= 0) & (kids <= 1))
    assert np.allclose(kids.mean(axis=0), 0.45, atol=0.01)


def test_pm_properties():
    rng = np.random.default_rng(0)
    x = rng.random(11)
    assert np.array_equal(polynomial_mutation(x, 20.0, 0.0, rng), x)
    edge = polynomial_mutation(np.zeros(11), 20.0, 1.0, rng)
    assert np.all(edge >= 0.0)
    deltas = np.array([polynomial_mutation(np.array([0.5]), 20.0, 1.0, rng)[0] - 0.5
                       for _ in range(20000)])
    assert abs(np.mean(deltas > 0) - 0.5) < 0.02
    assert abs(np.mean(deltas)) < 2e-3


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_operators_stay_in_unit_box(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random(11), rng.random(11)
    a[rng.random(11) < 0.2] = 0.0
    b[rng.random(11) < 0.2] = 1.0
    for child in sbx_crossover(a, b, 15.0, rng):
        out = polynomial_mutation(child, 20.0, None, rng)
        assert np.all((out >= 0) & (out <= 1))


def test_remove_duplicates_rules():
    x = np.full(11, 0.5)
    assert len(remove_duplicates([x, x.copy()])) == 1
    y = x.copy()
    y[0] += 0.05
    assert len(remove_duplicates([x, y], 0.05)) == 2  # exactly D_th apart: both kept
    assert 0.05 / math.sqrt(11) == pytest.approx(0.015, abs=1e-3)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_remove_duplicates_postcondition(seed):
    rng = np.random.default_rng(seed)
    pop = rng.random((60, 3)) * 0.2
    kept = remove_duplicates(pop, 0.05)
    d = np.linalg.norm(kept[:, None] - kept[None], axis=-1)
    assert np.all(d[np.triu_indices(len(kept), 1)] >= 0.05)
    # every dropped individual is close to a kept one
    for row in pop:
        assert np.min(np.linalg.norm(kept - row, axis=1)) < 0.05 or any(np.array_equal(row, k) for k in kept)


def test_ask_tell_protocol():
    ga = GeneticSearch(BOUNDS, seed=0)
    X = ga_ask(ga)
    assert X.shape == (100, 11) and np.all((X >= 0) & (X <= 1))
    assert np.all(np.abs(X.mean(axis=0)[:-1] - 0.5) < 0.1)
    with pytest.raises(ProtocolError):
        ga.ask()
    with pytest.raises(ProtocolError):
        ga.tell(np.zeros(99))
    ga_tell(ga, np.zeros(100))
    with pytest.raises(ProtocolError):
        ga.tell(np.zeros(100))


def test_partial_asks_advance_generation_once_complete():
    ga = GeneticSearch(BOUNDS, seed=1)
    for n in (30, 30, 40):
        assert ga.generation == 0
        ga.tell(np.ones(len(ga.ask(n))))
    assert ga.generation == 1


def test_elitism_best_never_worsens():
    ga = GeneticSearch(ParamBounds([ParamSpec(f"p{i}", 0, 1) for i in range(4)]), pop_size=20, seed=0)
    target = np.array([0.2, 0.4, 0.6, 0.8])
    for _ in range(15):
        X = ga.ask()
        ga.tell(np.sum((X - target) ** 2, axis=1))
    assert all(b >= a for a, b in zip(ga.history[1:], ga.history[:-1]))
    assert ga.history[-1] < 0.01


def test_random_search_interface():
    rs = RandomSearch(BOUNDS, seed=0)
    X = rs.ask(10)
    rs.tell(np.zeros(10))
    assert X.shape == (10, 11)


@pytest.fixture(scope="module")
def step1_archive(sut1):
    run = train_adversary(sut1, 3000, seed=1)
    assert len(run.archive) > 0
    return run.archive


def test_evaluate_candidate_reproduces_archived_failure(step1_archive, sut1):
    rec = step1_archive[0]
    b = ParamBounds.from_dict({k: (min(lo, getattr(rec.config, k)), max(hi, getattr(rec.config, k)))
                               for k, (lo, hi) in ParamBounds.default().to_dict().items()},
                              archive_size=len(step1_archive))
    x = encode(rec.config, 0, b)
    pool = []
    fit, trace, cls = evaluate_candidate(x, step1_archive, sut1, b, seed=rec.seed, pool=pool)
    assert trace.dumps() == rec.trace.dumps()
    assert cls.label == "Valid" and fit <= -30 and len(pool) == 1


def test_evaluate_candidate_far_apart_no_collision(step1_archive):
    spec = ParamBounds.default().to_dict()
    spec.update(x_ego=(0.0, 0.0), x_adv=(500.0, 500.0))
    b = ParamBounds.from_dict(spec, archive_size=len(step1_archive))
    fit, trace, cls = evaluate_candidate(np.zeros(b.dim), step1_archive, constant_policy(1), b)
    assert cls.label == "NoCollision" and -40 <= fit <= 0


def test_evaluate_candidate_requires_archive(sut1):
    with pytest.raises(ConfigurationError):
        evaluate_candidate(np.zeros(11), FailureArchive(), sut1, BOUNDS)


def test_run_search_budget_and_determinism(step1_archive, sut1):
    assert run_search(step1_archive, sut1, 0).n_evaluations == 0
    a = run_search(step1_archive, sut1, 150, seed=2)
    b = run_search(step1_archive, sut1, 150, seed=2)
    assert a.n_evaluations == 150 and len(a.labels) == 150
    assert [r.trace.dumps() for r in a.failures] == [r.trace.dumps() for r in b.failures]
    assert all(isinstance(r, FailureRecord) and r.classification.label == "Valid" for r in a.failures)


def test_bounds_file_round_trip(tmp_path):
    import json

    path = tmp_path / "bounds.json"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        path.write_text(json.dumps(ParamBounds.default().to_dict()))
        b = ParamBounds.from_file(path, archive_size=3)
    assert b.dim == 11 and b.high[-1] == 2


def test_step_budget_lands_exactly(step1_archive, sut1):
    res = run_search(step1_archive, sut1, 250, seed=3, unit="steps", pop_size=10)
    assert res.n_steps == 250 and res.spent("steps") == 250
    assert res.n_evaluations == len(res.labels) >= 250 // 40
    assert all(0 <= r.index < 250 for r in res.failures)
    with pytest.raises(ConfigurationError):
        run_search(step1_archive, sut1, 10, unit="episodes")


@pytest.mark.parametrize("survival", ["generational", "plus"])
def test_survival_modes_keep_the_elite(survival):
    bounds = ParamBounds([ParamSpec(f"p{i}", 0, 1) for i in range(3)])
    ga = GeneticSearch(bounds, pop_size=10, seed=4, survival=survival)
    for _ in range(8):
        X = ga.ask()
        ga.tell(np.sum(X ** 2, axis=1))
        assert ga.F.min() == ga.history[-1] == min(ga.history)
    with pytest.raises(ConfigurationError):
        GeneticSearch(bounds, survival="steady")



def test_generational_survival_replaces_parents():
    bounds = ParamBounds([ParamSpec("p", 0, 1)])
    ga = GeneticSearch(bounds, pop_size=6, seed=0)
    X0 = ga.ask()
    ga.tell(X0[:, 0])
    parents = ga.X.copy()
    X1 = ga.ask()
    ga.tell(np.full(len(X1), 5.0))  # every child is worse than every parent
    kept = [x for x in ga.X if any(np.array_equal(x, p) for p in parents)]
    assert len(kept) == 1 and np.array_equal(kept[0], parents[0])
    assert ga.history[-1] == ga.history[-2]
