"""
Algebraic data type declarations: parsing the declaration DSL, instantiating
generic applications into concrete types, finding the root's mutually
recursive family, constructor dependency graphs and probability maps.
"""

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

GROUND_ATOMS = ("Int", "Double", "Char", "Unit")
PROB_TOLERANCE = 1e-9

logger = logging.getLogger("adt_model_logger")


class UniverseError(ValueError):
    pass


class DslSyntaxError(UniverseError):
    def __init__(self, msg, line, column):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class UnknownTypeError(UniverseError):
    pass


class UnknownConstructorError(UniverseError):
    pass


class DuplicateNameError(UniverseError):
    pass


class UnsupportedUniverseError(UniverseError):
    pass


class ProbMapError(UniverseError):
    pass


# Source declarations, as written in the DSL


@dataclass(frozen=True)
class TyVar:
    name: str


@dataclass(frozen=True)
class TyApp:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class SourceConstructor:
    name: str
    fields: tuple


@dataclass(frozen=True)
class SourceDecl:
    name: str
    params: tuple
    constructors: tuple


# Concrete (monomorphized) declarations


class FieldKind(Enum):
    FAMILY = "family"
    FOREIGN = "foreign"
    GROUND = "ground"


@dataclass(frozen=True)
class FieldRef:
    kind: FieldKind
    target: str


@dataclass(frozen=True)
class ConstructorDecl:
    id: str
    name: str
    type_id: str
    fields: tuple

    @property
    def arity(self):
        return len(self.fields)


@dataclass(frozen=True)
class TypeDecl:
    name: str
    template: str
    args: tuple
    constructors: tuple


@dataclass(frozen=True)
class ADTUniverse:
    decls: dict
    root: str
    family: tuple
    type_graph: dict
    source: tuple

    @cached_property
    def constructors(self):
        return {c.id: c for decl in self.decls.values() for c in decl.constructors}

    @cached_property
    def family_constructors(self):
        return tuple(c.id for t in self.family for c in self.decls[t].constructors)

    @cached_property
    def foreign_types(self):
        return tuple(t for t in self.decls if t not in self.family)

    def cons(self, type_id):
        if type_id not in self.decls:
            raise UnknownTypeError(f"Unknown type {type_id}")
        return tuple(c.id for c in self.decls[type_id].constructors)

    def type_of(self, ctor_id):
        if ctor_id not in self.constructors:
            raise UnknownConstructorError(f"Unknown constructor {ctor_id}")
        return self.constructors[ctor_id].type_id


# Lexer and parser

_TOKEN_RE = re.compile(
    r"(?P<comment>--[^\n]*)"
    r"|(?P<newline>\n)"
    r"|(?P<space>[ \t\r]+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<symbol>[=|()])"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source):
    tokens = []
    line, line_start, pos = 1, 0, 0

    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if not match:
            raise DslSyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )

        kind = match.lastgroup
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind in ("ident", "symbol"):
            text = match.group()
            if kind == "ident" and text == "data":
                kind = "data"
            tokens.append(_Token(kind, text, line, pos - line_start + 1))
        pos = match.end()

    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source):
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def current(self):
        return self.tokens[self.pos]

    def fail(self, msg):
        raise DslSyntaxError(msg, self.current.line, self.current.column)

    def advance(self):
        token = self.current
        self.pos += 1
        return token

    def expect(self, text):
        if self.current.text != text or self.current.kind == "eof":
            self.fail(f"expected {text!r}, found {self.current.text or 'end of input'!r}")
        return self.advance()

    def type_name(self):
        token = self.current
        if token.kind != "ident" or not token.text[0].isupper():
            self.fail(f"expected a type name, found {token.text or 'end of input'!r}")
        return self.advance().text

    def declarations(self):
        decls = []
        while self.current.kind != "eof":
            decls.append(self.declaration())
        return decls

    def declaration(self):
        if self.current.kind != "data":
            self.fail(f"expected 'data', found {self.current.text!r}")
        self.advance()

        name = self.type_name()
        params = []
        while self.current.kind == "ident" and self.current.text[0].islower():
            param = self.advance().text
            if param in params:
                self.fail(f"type variable {param} repeated in {name}")
            params.append(param)

        self.expect("=")
        constructors = [self.constructor(params)]
        while self.current.text == "|":
            self.advance()
            constructors.append(self.constructor(params))

        return SourceDecl(name, tuple(params), tuple(constructors))

    def constructor(self, params):
        token = self.current
        if token.kind != "ident" or not token.text[0].isupper():
            self.fail(f"expected a constructor name, found {token.text or 'end of input'!r}")
        name = self.advance().text

        fields = []
        while self.current.kind == "ident" or self.current.text == "(":
            fields.append(self.field(params))
        return SourceConstructor(name, tuple(fields))

    def field(self, params):
        token = self.current
        if token.text == "(":
            self.advance()
            name = self.type_name()
            args = [self.field(params)]
            while self.current.text != ")":
                if self.current.kind == "eof":
                    self.fail("unclosed '('")
                args.append(self.field(params))
            self.advance()
            return TyApp(name, tuple(args))

        if token.kind == "ident" and token.text[0].islower():
            if token.text not in params:
                self.fail(f"type variable {token.text} is not a parameter")
            return TyVar(self.advance().text)

        return TyApp(self.type_name())


def parse_declarations(source):
    decls = _Parser(source).declarations()

    type_names = set()
    ctor_names = set()
    for decl in decls:
        if decl.name in GROUND_ATOMS:
            raise DuplicateNameError(f"{decl.name} is a builtin ground type")
        if decl.name in type_names:
            raise DuplicateNameError(f"Type {decl.name} declared twice")
        type_names.add(decl.name)

        for ctor in decl.constructors:
            if ctor.name in ctor_names:
                raise DuplicateNameError(f"Constructor {ctor.name} declared twice")
            ctor_names.add(ctor.name)

    return decls


# Monomorphization and family detection


def _instance_id(name, args):
    if not args:
        return name
    return f"{name}<{','.join(args)}>"


def _monomorphize(templates, root):
    """Returns the concrete types reachable from root as
    {type id: (template, args, [(ctor name, [field type ids])])}, in
    discovery order."""
    instances = {}
    queue = []

    def resolve(expr, env):
        if isinstance(expr, TyVar):
            return env[expr.name]
        if expr.name in GROUND_ATOMS:
            if expr.args:
                raise UniverseError(f"Ground type {expr.name} takes no arguments")
            return expr.name
        if expr.name not in templates:
            raise UnknownTypeError(f"Unknown type {expr.name}")

        template = templates[expr.name]
        if len(template.params) != len(expr.args):
            raise UniverseError(
                f"Type {expr.name} expects {len(template.params)} argument(s), "
                f"got {len(expr.args)}"
            )

        args = tuple(resolve(arg, env) for arg in expr.args)
        type_id = _instance_id(expr.name, args)
        if type_id not in instances:
            instances[type_id] = None
            queue.append((type_id, template, args))
        return type_id

    if root not in templates:
        raise UnknownTypeError(f"Root type {root} is not declared")
    if templates[root].params:
        raise UniverseError(f"Root type {root} must not take type parameters")
    resolve(TyApp(root), {})

    while queue:
        type_id, template, args = queue.pop(0)
        env = dict(zip(template.params, args))
        constructors = [
            (ctor.name, [resolve(f, env) for f in ctor.fields])
            for ctor in template.constructors
        ]
        instances[type_id] = (template.name, args, constructors)

    return instances


def strongly_connected_components(graph):
    """Tarjan's algorithm over {node: successors}. Components come out in
    reverse topological order, each listed in the graph's node order."""
    counter = [0]
    stack = []
    on_stack = set()
    lowlinks = {}
    index = {}
    order = {node: i for i, node in enumerate(graph)}
    result = []

    def strongconnect(node):
        index[node] = lowlinks[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)

        for successor in graph.get(node, ()):
            if successor not in index:
                strongconnect(successor)
                lowlinks[node] = min(lowlinks[node], lowlinks[successor])
            elif successor in on_stack:
                lowlinks[node] = min(lowlinks[node], index[successor])

        if lowlinks[node] == index[node]:
            component = []
            while True:
                member = stack.pop()
                on_stack.discard(member)
                component.append(member)
                if member == node:
                    break
            result.append(tuple(sorted(component, key=order.get)))

    for node in graph:
        if node not in index:
            strongconnect(node)

    return result


def _is_recursive(component, graph):
    return len(component) > 1 or component[0] in graph.get(component[0], ())


def parse_universe(source, root):
    templates = {decl.name: decl for decl in parse_declarations(source)}
    instances = _monomorphize(templates, root)

    type_graph = {}
    for type_id, (_, _, constructors) in instances.items():
        targets = []
        for _, fields in constructors:
            for target in fields:
                if target not in GROUND_ATOMS and target not in targets:
                    targets.append(target)
        type_graph[type_id] = tuple(targets)

    components = strongly_connected_components(type_graph)
    family = next(c for c in components if root in c)

    for component in components:
        if component is not family and _is_recursive(component, type_graph):
            raise UnsupportedUniverseError(
                f"Recursive types {', '.join(component)} are reachable from "
                f"{root} but outside its recursive family"
            )

    decls = {}
    for type_id, (template, args, constructors) in instances.items():
        ctors = []
        for ctor_name, fields in constructors:
            refs = []
            for target in fields:
                if target in GROUND_ATOMS:
                    kind = FieldKind.GROUND
                elif target in family:
                    kind = FieldKind.FAMILY
                else:
                    kind = FieldKind.FOREIGN
                refs.append(FieldRef(kind, target))
            ctors.append(
                ConstructorDecl(f"{type_id}.{ctor_name}", ctor_name, type_id, tuple(refs))
            )
        decls[type_id] = TypeDecl(type_id, template, args, tuple(ctors))

    logger.debug(f"Parsed universe rooted at {root}: family {family}")

    return ADTUniverse(
        decls=decls,
        root=root,
        family=family,
        type_graph=type_graph,
        source=tuple(templates.values()),
    )


# Printing


def _print_field(expr):
    if isinstance(expr, TyVar):
        return expr.name
    if not expr.args:
        return expr.name
    return f"({expr.name} {' '.join(_print_field(a) for a in expr.args)})"


def print_universe(u):
    lines = []
    for decl in u.source:
        head = " ".join(["data", decl.name, *decl.params])
        ctors = [
            " ".join([ctor.name, *(_print_field(f) for f in ctor.fields)])
            for ctor in decl.constructors
        ]
        lines.append(f"{head} = {' | '.join(ctors)}")
    return "\n".join(lines) + "\n"


def universe_hash(u):
    return hashlib.sha256(print_universe(u).encode("utf-8")).hexdigest()


# Queries


def resolve_constructor(u, name):
    if name in u.constructors:
        return name

    matches = [c.id for c in u.constructors.values() if c.name == name]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise UnknownConstructorError(f"Unknown constructor {name}")
    raise UniverseError(f"Constructor {name} is ambiguous: {', '.join(matches)}")


def resolve_type(u, name):
    if name not in u.decls:
        raise UnknownTypeError(f"Unknown type {name}")
    return name


def branching_factor(c, t, u):
    if c not in u.constructors:
        raise UnknownConstructorError(f"Unknown constructor {c}")
    if t not in u.decls and t not in GROUND_ATOMS:
        raise UnknownTypeError(f"Unknown type {t}")
    return sum(1 for f in u.constructors[c].fields if f.target == t)


def is_terminal(c, u):
    return all(f.kind != FieldKind.FAMILY for f in u.constructors[c].fields)


def terminal_constructors(t, u):
    if t not in u.family:
        raise UniverseError(f"{t} is not part of the family of {u.root}")
    return {c for c in u.cons(t) if is_terminal(c, u)}


# Constructor dependency graph


@dataclass(frozen=True)
class CdgEdge:
    parent: str
    child: str
    multiplicity: int

    @property
    def symbol(self):
        # the child's entry in the ProbMap labels the edge
        return self.child


@dataclass(frozen=True)
class CDG:
    roots: tuple
    nodes: tuple
    edges: tuple

    def children(self, parent):
        return [e for e in self.edges if e.parent == parent]


def _check_foreign_acyclic(u):
    foreign = {t: [v for v in u.type_graph[t] if v not in u.family] for t in u.foreign_types}
    for component in strongly_connected_components(foreign):
        if _is_recursive(component, foreign):
            raise UnsupportedUniverseError(
                f"Cycle detected among foreign types: {', '.join(component)}"
            )


def build_cdg(u):
    _check_foreign_acyclic(u)

    nodes = list(u.family_constructors)
    seen = set(nodes)
    edges = []
    queue = list(nodes)

    while queue:
        parent = queue.pop(0)
        foreign_targets = []
        for f in u.constructors[parent].fields:
            if f.kind == FieldKind.FOREIGN and f.target not in foreign_targets:
                foreign_targets.append(f.target)

        for target in foreign_targets:
            multiplicity = branching_factor(parent, target, u)
            for child in u.cons(target):
                edges.append(CdgEdge(parent, child, multiplicity))
                if child not in seen:
                    seen.add(child)
                    nodes.append(child)
                    queue.append(child)

    return CDG(u.family_constructors, tuple(nodes), tuple(edges))


def universe_summary(u):
    cdg = build_cdg(u)
    return {
        "root": u.root,
        "family": list(u.family),
        "foreignTypes": list(u.foreign_types),
        "types": len(u.decls),
        "constructors": len(u.constructors),
        "familyConstructors": list(u.family_constructors),
        "terminals": {t: sorted(terminal_constructors(t, u)) for t in u.family},
        "typeGraph": {t: list(targets) for t, targets in u.type_graph.items()},
        "cdgEdges": [
            {"parent": e.parent, "child": e.child, "multiplicity": e.multiplicity}
            for e in cdg.edges
        ],
    }


# Probability maps


def uniform_probmap(u):
    probs = {}
    for decl in u.decls.values():
        for ctor in decl.constructors:
            probs[ctor.id] = 1.0 / len(decl.constructors)
    return probs


def normalize_probmap(u, p, pinned=frozenset(), types=None):
    """Renormalizes every type present in p (or only the given types) over its
    unpinned constructors; pinned entries become exactly 0."""
    result = dict(p)
    if types is None:
        types = {u.type_of(c) for c in p}
    for type_id in types:
        ctors = u.cons(type_id)
        free = [c for c in ctors if c not in pinned]
        total = sum(max(0.0, p.get(c, 0.0)) for c in free)

        if free and total <= 0.0:
            raise ProbMapError(f"Constructors of {type_id} have no probability mass left")

        for c in ctors:
            result[c] = 0.0 if c in pinned else max(0.0, p.get(c, 0.0)) / total
    return result


def validate_probmap(u, p, excluded_types=()):
    for c, value in p.items():
        if c not in u.constructors:
            raise UnknownConstructorError(f"Unknown constructor {c}")
        if not value >= 0.0:
            raise ProbMapError(f"Probability of {c} is negative or not a number")

    for type_id in {u.type_of(c) for c in p}:
        ctors = u.cons(type_id)
        missing = [c for c in ctors if c not in p]
        if missing:
            raise ProbMapError(f"Missing probabilities for {', '.join(missing)}")

        total = sum(p[c] for c in ctors)
        if type_id in excluded_types and total == 0.0:
            continue
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise ProbMapError(f"Probabilities of {type_id} sum to {total}, not 1")

    return p


def complete_probmap(u, p):
    """Adds uniform probabilities for every type p does not mention."""
    result = dict(p)
    covered = {u.type_of(c) for c in p}
    for type_id, decl in u.decls.items():
        if type_id not in covered:
            for ctor in decl.constructors:
                result[ctor.id] = 1.0 / len(decl.constructors)
    return result


def load_probmap(text, u):
    document = json.loads(text)
    if not isinstance(document, dict) or "probabilities" not in document:
        raise ProbMapError("Expected a JSON object with a 'probabilities' member")

    probs = {}
    for name, value in document["probabilities"].items():
        probs[resolve_constructor(u, name)] = float(value)
    return validate_probmap(u, probs)


def dump_probmap(p):
    return json.dumps({"probabilities": p}, indent=2)
