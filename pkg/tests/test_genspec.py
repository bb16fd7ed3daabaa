import json

import pytest

from adt_model import ProbMapError, uniform_probmap, universe_hash
from genspec import GenSpecError, Strategy, load_genspec, make_genspec
from prediction import star_probs


@pytest.fixture
def tree_prime_spec(tree_prime, tree_prime_probs):
    return make_genspec(tree_prime, 10, tree_prime_probs, star_probs(tree_prime, tree_prime_probs))


def test_genspec_document(tree_prime_spec, tree_prime):
    document = tree_prime_spec.to_json()

    assert document["root"] == "Tree"
    assert document["strategy"] == "dragen"
    assert document["starProbabilities"] == {"Tree.Leaf": 1.0}
    assert document["universeHash"] == universe_hash(tree_prime)


def test_load_genspec(tree_prime_spec):
    spec, u = load_genspec(json.dumps(tree_prime_spec.to_json()))

    assert spec == tree_prime_spec
    assert u.family_constructors == ("Tree.Leaf", "Tree.NodeA", "Tree.NodeB")


def test_load_spec_member_of_optimize_output(tree_prime_spec):
    text = json.dumps({"cost": "uniform", "spec": tree_prime_spec.to_json()})

    spec, _ = load_genspec(text)
    assert spec.size == 10


def test_genspec_completes_foreign_probabilities(composite):
    p = {c: v for c, v in uniform_probmap(composite).items() if c.startswith("Tree.")}
    spec = make_genspec(composite, 4, p, star_probs(composite, p), Strategy.MEGADETH)

    assert spec.probabilities["Bool.True"] == pytest.approx(0.5)
    loaded, _ = load_genspec(json.dumps(spec.to_json()))
    assert loaded.strategy == Strategy.MEGADETH


def _with(spec, **changes):
    document = spec.to_json()
    document.update(changes)
    return json.dumps(document)


@pytest.mark.parametrize(
    "changes",
    [
        {"universeHash": "0" * 64},
        {"strategy": "quickcheck"},
        {"size": -1},
        {"size": "10"},
    ],
)
def test_invalid_genspec(tree_prime_spec, changes):
    with pytest.raises(GenSpecError):
        load_genspec(_with(tree_prime_spec, **changes))


def test_missing_keys(tree_prime_spec):
    document = tree_prime_spec.to_json()
    del document["starProbabilities"]

    with pytest.raises(GenSpecError, match="starProbabilities"):
        load_genspec(json.dumps(document))
    with pytest.raises(GenSpecError):
        load_genspec("[1, 2]")


def test_invalid_probabilities(tree_prime_spec):
    probabilities = {"Tree.Leaf": 0.5, "Tree.NodeA": 0.5, "Tree.NodeB": 0.5}

    with pytest.raises(ProbMapError):
        load_genspec(_with(tree_prime_spec, probabilities=probabilities))


def test_excluded_types_may_have_no_mass(t1t2):
    p = {"T1.A": 1.0, "T1.B": 0.0, "T2.C": 0.0, "T2.D": 0.0}
    stars = {"T1.A": 1.0, "T2.C": 0.0}
    spec = make_genspec(t1t2, 3, p, stars, excluded_types=("T2",))

    loaded, _ = load_genspec(json.dumps(spec.to_json()))
    assert loaded.excluded_types == ("T2",)
    assert loaded.probabilities == p


@pytest.mark.parametrize(
    "stars",
    [
        {"Tree.Leaf": 0.5},
        {"Tree.Leaf": 1.0, "Tree.NodeA": 0.0},
        {"Tree.Missing": 1.0},
        {},
        {"Tree.Leaf": -1.0},
    ],
)
def test_invalid_star_probabilities(tree_prime_spec, stars):
    with pytest.raises(GenSpecError):
        load_genspec(_with(tree_prime_spec, starProbabilities=stars))


def test_only_excluded_types_may_have_no_stars(t1t2):
    p = {"T1.A": 0.5, "T1.B": 0.5, "T2.C": 0.5, "T2.D": 0.5}
    spec = make_genspec(t1t2, 3, p, {"T1.A": 1.0, "T2.C": 0.0})

    with pytest.raises(GenSpecError, match="T2"):
        load_genspec(json.dumps(spec.to_json()))
