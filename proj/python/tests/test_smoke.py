import math

import pytest

import nasopt

CONV_PATH = "E:100000000010000000000|O:00000|B:0"
TINY = {
    "objective": "sphere:4",
    "build": {"cells": 1, "channels": 2, "input_size": 8, "num_sol": 10},
    "train": {"max_epochs": 5, "initial_epochs": 1, "max_budget": 5},
}


def test_space_size():
    assert nasopt.space_size() == 2**21 * 3**5 * 2


def test_genotype_round_trip():
    g = nasopt.sample_genotype(3)
    assert nasopt.Genotype.parse(str(g)) == g
    assert nasopt.Genotype.from_genes(g.genes()) == g
    assert len(g.genes()) == 27
    assert nasopt.Genotype.parse(CONV_PATH).penalty() == 0.0


def test_bad_genotype():
    with pytest.raises(ValueError):
        nasopt.Genotype.parse("E:1|O:0|B:0")


def test_objective():
    f = nasopt.make_objective("sphere:3")
    assert f.dimension == 3
    assert f([1.0, 2.0, 3.0]) == 14.0
    value, grad = f.gradient([1.0, 2.0, 3.0])
    assert value == 14.0
    assert grad == [2.0, 4.0, 6.0]
    assert f.evaluations == 2
    with pytest.raises(ValueError):
        nasopt.make_objective("nope:3")


def test_protein_straight_chain():
    assert nasopt.protein_energy("AAA", [0.0]) == 2.0**-12 - 2.0**-6
    e = nasopt.protein_energy("1BXP", [0.0] * 11)
    assert math.isfinite(e)


def test_train_reduces_cost():
    rep = nasopt.train(CONV_PATH, TINY, seed=1)
    assert rep["evals"] == 50
    assert rep["epoch_best"] == sorted(rep["epoch_best"], reverse=True)
    assert len(rep["x_best"]) == 4


def test_search_is_deterministic(tmp_path):
    cfg = dict(TINY, budget=300)
    a = nasopt.search(cfg, seed=4, run_dir=tmp_path / "a")
    b = nasopt.search(dict(cfg, workers=2), seed=4)
    assert a["records"] == b["records"]
    assert a["evals"] == 300
    assert (tmp_path / "a" / "search.csv").exists()


def test_unknown_config_key():
    with pytest.raises(ValueError, match="bogus"):
        nasopt.train(CONV_PATH, dict(TINY, bogus=1))


def test_verify():
    results = nasopt.verify()
    assert len(results) == 8
    assert all(passed for _, passed, _ in results)
