import json

import pytest

from adt_model import (
    DslSyntaxError,
    DuplicateNameError,
    FieldKind,
    ProbMapError,
    UnknownConstructorError,
    UnknownTypeError,
    UniverseError,
    UnsupportedUniverseError,
    branching_factor,
    build_cdg,
    complete_probmap,
    dump_probmap,
    is_terminal,
    load_probmap,
    normalize_probmap,
    parse_universe,
    print_universe,
    resolve_constructor,
    strongly_connected_components,
    terminal_constructors,
    uniform_probmap,
    universe_hash,
    universe_summary,
    validate_probmap,
)


def test_tree_universe(tree):
    assert tree.family == ("Tree",)
    assert tree.family_constructors == ("Tree.LeafA", "Tree.LeafB", "Tree.LeafC", "Tree.Node")
    assert branching_factor("Tree.Node", "Tree", tree) == 2
    assert branching_factor("Tree.LeafA", "Tree", tree) == 0
    assert terminal_constructors("Tree", tree) == {"Tree.LeafA", "Tree.LeafB", "Tree.LeafC"}


def test_single_constructor_universe():
    u = parse_universe("data U = OnlyU", "U")

    assert u.family == ("U",)
    assert u.type_graph == {"U": ()}
    assert is_terminal("U.OnlyU", u)


def test_mutually_recursive_family(t1t2):
    assert t1t2.family == ("T1", "T2")
    assert branching_factor("T1.B", "T1", t1t2) == 1
    assert branching_factor("T1.B", "T2", t1t2) == 1
    assert terminal_constructors("T2", t1t2) == {"T2.C"}


def test_tree_pp_terminals(tree_pp):
    assert terminal_constructors("Tree", tree_pp) == {"Tree.LeafA", "Tree.LeafB"}


def test_composite_monomorphization(composite):
    assert composite.family == ("Tree",)
    assert set(composite.foreign_types) == {"Maybe<Bool>", "Bool"}
    assert composite.cons("Maybe<Bool>") == ("Maybe<Bool>.Nothing", "Maybe<Bool>.Just")

    leaf_a = composite.constructors["Tree.LeafA"]
    assert leaf_a.fields[0].kind == FieldKind.FOREIGN
    assert leaf_a.fields[0].target == "Maybe<Bool>"
    # foreign fields do not make a constructor recursive
    assert is_terminal("Tree.LeafA", composite)


def test_ground_fields():
    u = parse_universe("data T = L Int Char | N T Double", "T")

    assert [f.kind for f in u.constructors["T.L"].fields] == [FieldKind.GROUND, FieldKind.GROUND]
    assert u.type_graph == {"T": ("T",)}
    assert is_terminal("T.L", u)


def test_distinct_instances_of_a_generic_type():
    source = """
    data T = L (Box Int) | N T (Box Char)
    data Box a = Box a
    """
    u = parse_universe(source, "T")

    assert {"Box<Int>", "Box<Char>"} <= set(u.decls)
    assert u.constructors["Box<Int>.Box"].fields[0].target == "Int"


def test_comments_are_ignored():
    u = parse_universe("-- a comment\ndata T = A -- trailing\n  | B T", "T")

    assert u.cons("T") == ("T.A", "T.B")


@pytest.mark.parametrize(
    "source, line, column",
    [
        ("data Tree = | Leaf", 1, 13),
        ("data A = X\ndata B = 3", 2, 10),
        ("Tree = Leaf", 1, 1),
    ],
)
def test_syntax_error_position(source, line, column):
    with pytest.raises(DslSyntaxError) as e:
        parse_universe(source, "Tree")

    assert (e.value.line, e.value.column) == (line, column)


def test_undeclared_type_variable():
    with pytest.raises(DslSyntaxError):
        parse_universe("data T = C a", "T")


def test_unclosed_parenthesis():
    with pytest.raises(DslSyntaxError):
        parse_universe("data T = C (Maybe Int\ndata Maybe a = N | J a", "T")


@pytest.mark.parametrize(
    "source, root, error",
    [
        ("data T = C U", "T", UnknownTypeError),
        ("data T = C", "U", UnknownTypeError),
        ("data A = X\ndata B = X", "A", DuplicateNameError),
        ("data A = X\ndata A = Y", "A", DuplicateNameError),
        ("data Int = I", "Int", DuplicateNameError),
        ("data T = C (Maybe Int Int)\ndata Maybe a = N | J a", "T", UniverseError),
        ("data T = C (Int T)", "T", UniverseError),
        ("data Maybe a = N | J a", "Maybe", UniverseError),
    ],
)
def test_invalid_universes(source, root, error):
    with pytest.raises(error):
        parse_universe(source, root)


def test_recursive_foreign_type_is_rejected():
    source = """
    data Tree = Leaf List | Node Tree Tree
    data List = Nil | Cons Int List
    """
    with pytest.raises(UnsupportedUniverseError):
        parse_universe(source, "Tree")


def test_strongly_connected_components():
    graph = {"a": ["b"], "b": ["a", "c"], "c": [], "d": ["a", "d"]}
    components = strongly_connected_components(graph)

    assert {frozenset(c) for c in components} == {
        frozenset({"a", "b"}),
        frozenset({"c"}),
        frozenset({"d"}),
    }
    # successors come before their predecessors
    assert components.index(("c",)) < components.index(("a", "b")) < components.index(("d",))


def test_print_universe(composite):
    assert print_universe(composite) == (
        "data Tree = LeafA (Maybe Bool) | LeafB Bool Bool | LeafC | Node Tree Tree\n"
        "data Maybe a = Nothing | Just a\n"
        "data Bool = False | True\n"
    )


def test_printed_universe_parses_back(composite, t1t2):
    for u in (composite, t1t2):
        reparsed = parse_universe(print_universe(u), u.root)
        assert universe_hash(reparsed) == universe_hash(u)
        assert reparsed.constructors == u.constructors


def test_resolve_constructor():
    source = """
    data T = L (Box Int) | N T (Box Char)
    data Box a = Box a
    """
    u = parse_universe(source, "T")

    assert resolve_constructor(u, "N") == "T.N"
    assert resolve_constructor(u, "Box<Int>.Box") == "Box<Int>.Box"
    with pytest.raises(UniverseError, match="ambiguous"):
        resolve_constructor(u, "Box")
    with pytest.raises(UnknownConstructorError):
        resolve_constructor(u, "Missing")


def test_cdg_of_composite_tree(composite):
    cdg = build_cdg(composite)
    edges = {(e.parent, e.child): e.multiplicity for e in cdg.edges}

    assert edges[("Tree.LeafA", "Maybe<Bool>.Just")] == 1
    assert edges[("Tree.LeafA", "Maybe<Bool>.Nothing")] == 1
    assert edges[("Maybe<Bool>.Just", "Bool.True")] == 1
    assert edges[("Maybe<Bool>.Just", "Bool.False")] == 1
    assert edges[("Tree.LeafB", "Bool.True")] == 2
    assert ("Tree.Node", "Tree.LeafA") not in edges
    assert len(edges) == 6
    assert cdg.roots == composite.family_constructors


def test_cdg_without_foreign_types(tree):
    cdg = build_cdg(tree)

    assert cdg.edges == ()
    assert cdg.nodes == tree.family_constructors


def test_universe_summary(t1t2):
    summary = universe_summary(t1t2)

    assert summary["root"] == "T1"
    assert summary["family"] == ["T1", "T2"]
    assert summary["constructors"] == 4
    assert summary["terminals"] == {"T1": ["T1.A"], "T2": ["T2.C"]}
    json.dumps(summary)


def test_uniform_probmap_covers_foreign_types(composite):
    p = uniform_probmap(composite)

    assert p["Tree.Node"] == pytest.approx(0.25)
    assert p["Maybe<Bool>.Just"] == pytest.approx(0.5)
    validate_probmap(composite, p)


def test_normalize_probmap_pins_constructors(tree):
    p = normalize_probmap(tree, uniform_probmap(tree), pinned={"Tree.LeafC"})

    assert p["Tree.LeafC"] == 0.0
    assert p["Tree.Node"] == pytest.approx(1 / 3)
    assert sum(p.values()) == pytest.approx(1.0, abs=1e-12)


def test_normalize_probmap_without_mass(tree):
    p = {"Tree.LeafA": 0.0, "Tree.LeafB": 0.0, "Tree.LeafC": 0.0, "Tree.Node": 1.0}

    with pytest.raises(ProbMapError):
        normalize_probmap(tree, p, pinned={"Tree.Node"})


@pytest.mark.parametrize(
    "p, error",
    [
        ({"Tree.Leaf": 0.5, "Tree.NodeA": 0.5}, ProbMapError),
        ({"Tree.Leaf": 0.5, "Tree.NodeA": 0.6, "Tree.NodeB": -0.1}, ProbMapError),
        ({"Tree.Leaf": 0.5, "Tree.NodeA": 0.6, "Tree.NodeB": 0.0}, ProbMapError),
        ({"Tree.Leaf": 1.0, "Tree.NodeA": 0.0, "Tree.NodeB": 0.0, "Tree.Other": 0.0}, UnknownConstructorError),
    ],
)
def test_validate_probmap_errors(tree_prime, p, error):
    with pytest.raises(error):
        validate_probmap(tree_prime, p)


def test_validate_probmap_accepts_excluded_types(t1t2):
    p = {"T1.A": 1.0, "T1.B": 0.0, "T2.C": 0.0, "T2.D": 0.0}

    with pytest.raises(ProbMapError):
        validate_probmap(t1t2, p)
    assert validate_probmap(t1t2, p, excluded_types=("T2",)) == p


def test_complete_probmap(composite):
    p = complete_probmap(composite, {"Tree.LeafA": 0.1, "Tree.LeafB": 0.1, "Tree.LeafC": 0.1, "Tree.Node": 0.7})

    assert p["Tree.Node"] == 0.7
    assert p["Bool.True"] == pytest.approx(0.5)


def test_load_probmap_resolves_bare_names(tree_prime, tree_prime_probs):
    text = json.dumps({"probabilities": {"Leaf": 0.2, "NodeA": 0.5, "Tree.NodeB": 0.3}})

    assert load_probmap(text, tree_prime) == tree_prime_probs
    assert load_probmap(dump_probmap(tree_prime_probs), tree_prime) == tree_prime_probs


def test_load_probmap_needs_probabilities(tree_prime):
    with pytest.raises(ProbMapError):
        load_probmap('{"Leaf": 1.0}', tree_prime)
