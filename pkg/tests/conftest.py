from pathlib import Path

import pytest

from adt_model import parse_universe
from costfn import parse_cost
from optimizer import run_derivation

ADTS_DIR = Path(__file__).resolve().parent.parent / "adts"


def adt_path(name):
    return ADTS_DIR / name


def load_adt(name, root):
    return parse_universe(adt_path(name).read_text(encoding="utf-8"), root)


@pytest.fixture
def tree():
    return load_adt("tree.adt", "Tree")


@pytest.fixture
def tree_prime():
    return load_adt("tree_prime.adt", "Tree")


@pytest.fixture
def tree_pp():
    return load_adt("tree_pp.adt", "Tree")


@pytest.fixture
def t1t2():
    return load_adt("t1t2.adt", "T1")


@pytest.fixture
def derive_universe():
    return load_adt("derive.adt", "T")


@pytest.fixture
def composite():
    return load_adt("composite.adt", "Tree")


@pytest.fixture
def tree_prime_probs():
    return {"Tree.Leaf": 0.2, "Tree.NodeA": 0.5, "Tree.NodeB": 0.3}


TUNED_COSTS = (
    "uniform",
    "weighted(LeafA=3,LeafB=1,LeafC=1)",
    "weighted(LeafA=1,Node=3)",
    "only(LeafA,Node)",
    "without(LeafC)",
)


@pytest.fixture(scope="session")
def tree_derivations():
    """(spec, trace, report) of every tuned Tree generator at size 10."""
    u = load_adt("tree.adt", "Tree")
    return {text: run_derivation(u, 10, parse_cost(text, u)) for text in TUNED_COSTS}
