"""In-memory RDF triple store with conjunctive query evaluation.

Supports a small Turtle subset for loading (prefixes, ``a`` shorthand,
``;``/``,`` lists, string and integer literals) and a matching SPARQL subset
(``SELECT [DISTINCT]`` and ``ASK`` over basic graph patterns).
"""
from __future__ import annotations

import enum
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


class KbKind(enum.Enum):
    Resource = "Resource"
    Class = "Class"
    ObjectProperty = "ObjectProperty"
    DatatypeProperty = "DatatypeProperty"


PROPERTY_KINDS = (KbKind.ObjectProperty, KbKind.DatatypeProperty)


@dataclass(frozen=True, order=True)
class KbId:
    namespace: str
    local_name: str
    kind: KbKind = field(default=KbKind.Resource, compare=False, hash=False)

    def __post_init__(self):
        if not self.local_name or any(c.isspace() for c in self.local_name):
            raise ValueError(f"invalid local name: {self.local_name!r}")

    def __str__(self):
        return f"{self.namespace}:{self.local_name}" if self.namespace else f"<{self.local_name}>"

    def with_kind(self, kind: KbKind) -> "KbId":
        return KbId(self.namespace, self.local_name, kind)

    @classmethod
    def parse(cls, text: str, kind: KbKind = KbKind.Resource) -> "KbId":
        if text.startswith("<") and text.endswith(">"):
            return cls("", text[1:-1], kind)
        ns, sep, local = text.partition(":")
        if not sep:
            raise ValueError(f"not a prefixed name: {text!r}")
        return cls(ns, local, kind)


@dataclass(frozen=True, order=True)
class Literal:
    value: Union[str, int]
    lang: str = ""

    def __str__(self):
        if isinstance(self.value, int):
            return str(self.value)
        escaped = self.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"' + (f"@{self.lang}" if self.lang else "")


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self):
        return "?" + self.name


Term = Union[KbId, Literal]
PatternTerm = Union[KbId, Literal, Var]
Pattern = tuple  # (PatternTerm, PatternTerm, PatternTerm)

RDF_TYPE = KbId("rdf", "type", KbKind.ObjectProperty)
RDFS_DOMAIN = KbId("rdfs", "domain", KbKind.ObjectProperty)
RDFS_RANGE = KbId("rdfs", "range", KbKind.ObjectProperty)
RDFS_LABEL = KbId("rdfs", "label", KbKind.DatatypeProperty)
RESERVED = frozenset({RDF_TYPE, RDFS_DOMAIN, RDFS_RANGE, RDFS_LABEL})

DEFAULT_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
    "dbo": "http://dbpedia.org/ontology/",
    "dbr": "http://dbpedia.org/resource/",
}


def _sort_key(term) -> tuple:
    # total order across term types for deterministic output
    if isinstance(term, KbId):
        return (0, str(term))
    if isinstance(term, Literal):
        return (1, 0, term.value, term.lang) if isinstance(term.value, int) else (1, 1, term.value, term.lang)
    return (2, str(term))


@dataclass(frozen=True)
class Triple:
    subject: KbId
    predicate: KbId
    object: Term

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))

    def sort_key(self):
        return (_sort_key(self.subject), _sort_key(self.predicate), _sort_key(self.object))


class QueryForm(enum.Enum):
    Select = "SELECT"
    Ask = "ASK"


class QueryError(ValueError):
    """A query violates the well-formedness contract."""


@dataclass(frozen=True)
class ConjunctiveQuery:
    form: QueryForm
    projection: tuple
    patterns: tuple

    def __post_init__(self):
        object.__setattr__(self, "projection", tuple(self.projection))
        object.__setattr__(self, "patterns", tuple(tuple(p) for p in self.patterns))

    def variables(self) -> set:
        return {t for p in self.patterns for t in p if isinstance(t, Var)}

    def validate(self):
        if not self.patterns:
            raise QueryError("query has no triple patterns")
        if self.form is QueryForm.Ask and self.projection:
            raise QueryError("ASK query cannot project variables")
        if self.form is QueryForm.Select and not self.projection:
            raise QueryError("SELECT query needs at least one projection variable")
        unknown = [v for v in self.projection if v not in self.variables()]
        if unknown:
            raise QueryError("unknown projection variable(s): " + ", ".join(map(str, unknown)))

    def to_sparql(self) -> str:
        body = " ".join(f"{s} {p} {o} ." for s, p, o in self.patterns)
        if self.form is QueryForm.Ask:
            return f"ASK WHERE {{ {body} }}"
        return f"SELECT DISTINCT {' '.join(map(str, self.projection))} WHERE {{ {body} }}"

    def __str__(self):
        return self.to_sparql()

    @classmethod
    def select(cls, projection, patterns) -> "ConjunctiveQuery":
        return cls(QueryForm.Select, tuple(projection), tuple(patterns))

    @classmethod
    def ask(cls, patterns) -> "ConjunctiveQuery":
        return cls(QueryForm.Ask, (), tuple(patterns))


@dataclass(frozen=True)
class ResultSet:
    form: QueryForm
    variables: tuple = ()
    rows: frozenset = frozenset()
    boolean: Optional[bool] = None

    def __bool__(self):
        return bool(self.boolean) if self.form is QueryForm.Ask else bool(self.rows)

    def __len__(self):
        return len(self.rows)

    def answers(self) -> set:
        """Flat answer set: single-column rows unwrapped, ASK as {True/False}."""
        if self.form is QueryForm.Ask:
            return {self.boolean}
        if len(self.variables) == 1:
            return {row[0] for row in self.rows}
        return set(self.rows)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda row: tuple(_sort_key(t) for t in row))


# --------------------------------------------------------------------------
# tokenizer shared by the Turtle and SPARQL readers

class TurtleSyntaxError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<iri><[^<>\s]*>)
  | (?P<string>"(?:[^"\\\n]|\\.)*"(?:@[A-Za-z][A-Za-z0-9-]*)?)
  | (?P<integer>[+-]?\d+(?![\w:]|\.\d))
  | (?P<var>[?$][A-Za-z_][\w]*)
  | (?P<keyword>@prefix|@base)
  | (?P<pname>[A-Za-z][\w-]*:(?:[\w\-]|\.(?=[\w\-]))*|:(?:[\w\-]|\.(?=[\w\-]))*)
  | (?P<word>[A-Za-z]+)
  | (?P<punct>[.;,{}*()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list:
    tokens = []
    pos, line = 0, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise TurtleSyntaxError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
        elif kind not in ("ws", "comment"):
            tokens.append((kind, m.group(), line))
        pos = m.end()
    return tokens


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), body)


class _Reader:
    def __init__(self, text: str, prefixes: Optional[dict] = None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.prefixes = dict(prefixes or {})

    @property
    def line(self) -> int:
        if self.i < len(self.tokens):
            return self.tokens[self.i][2]
        return self.tokens[-1][2] if self.tokens else 1

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, self.line)

    def next(self):
        tok = self.peek()
        if tok[0] is None:
            raise TurtleSyntaxError("unexpected end of input", self.line)
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, line = self.next()
        if text.lower() != value.lower():
            raise TurtleSyntaxError(f"expected {value!r}, got {text!r}", line)

    def at_end(self) -> bool:
        return self.i >= len(self.tokens)

    def declare_prefix(self, name: str, iri: str, line: int):
        if name in self.prefixes and self.prefixes[name] != iri:
            raise TurtleSyntaxError(f"prefix {name!r} redefined with conflicting IRI", line)
        self.prefixes[name] = iri

    def read_prefix_decl(self, turtle_style: bool):
        kind, text, line = self.next()
        if kind != "pname" or not text.endswith(":"):
            raise TurtleSyntaxError(f"expected prefix name, got {text!r}", line)
        iri_kind, iri, _ = self.next()
        if iri_kind != "iri":
            raise TurtleSyntaxError(f"expected IRI, got {iri!r}", line)
        self.declare_prefix(text[:-1], iri[1:-1], line)
        if turtle_style:
            self.expect(".")

    def resolve_iri(self, iri: str) -> KbId:
        # longest matching namespace wins
        best = None
        for name, ns in self.prefixes.items():
            if iri.startswith(ns) and len(iri) > len(ns) and (best is None or len(ns) > len(self.prefixes[best])):
                best = name
        if best is not None:
            return KbId(best, iri[len(self.prefixes[best]):])
        return KbId("", iri)

    def read_term(self, allow_vars: bool):
        kind, text, line = self.next()
        if kind == "pname":
            ns, _, local = text.partition(":")
            if ns not in self.prefixes:
                raise TurtleSyntaxError(f"undeclared prefix {ns!r}", line)
            if not local:
                raise TurtleSyntaxError(f"empty local name in {text!r}", line)
            return KbId(ns, local)
        if kind == "iri":
            return self.resolve_iri(text[1:-1])
        if kind == "word" and text == "a":
            return RDF_TYPE
        if kind == "string":
            body, _, lang = text[1:].rpartition('"')
            return Literal(_unescape(body), lang.lstrip("@"))
        if kind == "integer":
            return Literal(int(text))
        if kind == "var" and allow_vars:
            return Var(text[1:])
        raise TurtleSyntaxError(f"unexpected token {text!r}", line)

    def read_triples_block(self, allow_vars: bool, terminators: tuple) -> list:
        """subject pred obj (, obj)* (; pred obj ...)* up to a terminator."""
        out = []
        subject = self.read_term(allow_vars)
        while True:
            pred = self.read_term(allow_vars)
            while True:
                obj = self.read_term(allow_vars)
                out.append((subject, pred, obj, self.line))
                if self.peek()[1] == ",":
                    self.next()
                    continue
                break
            if self.peek()[1] == ";":
                self.next()
                if self.peek()[1] in terminators:
                    break
                continue
            break
        return out


# --------------------------------------------------------------------------

class TripleStore:
    """Immutable set of triples with SPO/POS/OSP indexes."""

    def __init__(self, triples: Iterable[Triple] = (), prefixes: Optional[dict] = None):
        self.prefixes = dict(DEFAULT_PREFIXES)
        self.prefixes.update(prefixes or {})
        raw = {(t.subject, t.predicate, t.object) for t in triples}
        self._kinds = _infer_kinds(raw)
        self._triples = frozenset(
            Triple(self._with_kind(s), self._with_kind(p), self._with_kind(o)) for s, p, o in raw
        )
        self.spo: dict = defaultdict(lambda: defaultdict(set))
        self.pos: dict = defaultdict(lambda: defaultdict(set))
        self.osp: dict = defaultdict(lambda: defaultdict(set))
        self._domain: dict = {}
        self._range: dict = {}
        self._types: dict = defaultdict(set)
        self._labels: dict = defaultdict(list)
        for s, p, o in self._triples:
            self.spo[s][p].add(o)
            self.pos[p][o].add(s)
            self.osp[o][s].add(p)
            if p == RDFS_DOMAIN:
                self._domain[s] = o
            elif p == RDFS_RANGE:
                self._range[s] = o
            elif p == RDF_TYPE:
                self._types[s].add(o)
            elif p == RDFS_LABEL and isinstance(o, Literal):
                self._labels[s].append(o)

    def _with_kind(self, term):
        if isinstance(term, KbId):
            return term.with_kind(self._kinds.get(term, KbKind.Resource))
        return term

    def __len__(self):
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(sorted(self._triples, key=Triple.sort_key))

    def __contains__(self, triple) -> bool:
        return Triple(*triple) in self._triples

    def triples(self) -> frozenset:
        return self._triples

    def kind_of(self, kb_id: KbId) -> Optional[KbKind]:
        return self._kinds.get(kb_id)

    def resolve(self, kb_id: KbId) -> KbId:
        """Return kb_id carrying the kind inferred from the store, if known."""
        kind = self._kinds.get(kb_id)
        return kb_id.with_kind(kind) if kind else kb_id

    def ids(self, kind: Optional[KbKind] = None) -> list:
        return sorted(k.with_kind(v) for k, v in self._kinds.items() if kind is None or v is kind)

    def types_of(self, kb_id: KbId) -> set:
        return set(self._types.get(kb_id, ()))

    def labels(self, kb_id: KbId, lang: str = "") -> list:
        return [lit.value for lit in self._labels.get(kb_id, ()) if not lang or lit.lang in ("", lang)]

    # ------------------------------------------------------------------

    def match(self, s=None, p=None, o=None) -> Iterator[tuple]:
        """Yield (s, p, o) triples agreeing with the bound positions (None = free)."""
        if s is not None:
            by_p = self.spo.get(s)
            if not by_p:
                return
            preds = [p] if p is not None else list(by_p)
            for pp in preds:
                objs = by_p.get(pp, ())
                if o is not None:
                    if o in objs:
                        yield (s, pp, o)
                else:
                    for oo in objs:
                        yield (s, pp, oo)
        elif p is not None:
            by_o = self.pos.get(p)
            if not by_o:
                return
            objs = [o] if o is not None else list(by_o)
            for oo in objs:
                for ss in by_o.get(oo, ()):
                    yield (ss, p, oo)
        elif o is not None:
            for ss, preds in self.osp.get(o, {}).items():
                for pp in preds:
                    yield (ss, pp, o)
        else:
            for t in self._triples:
                yield (t.subject, t.predicate, t.object)

    def solutions(self, patterns) -> Iterator[dict]:
        """Enumerate variable bindings satisfying every pattern (natural join)."""
        patterns = [tuple(p) for p in patterns]
        yield from self._solve(patterns, {})

    def _solve(self, remaining: list, binding: dict) -> Iterator[dict]:
        if not remaining:
            yield dict(binding)
            return
        # most selective first: fewest positions left unbound under the current binding
        def free(pat):
            return sum(1 for t in pat if isinstance(t, Var) and t not in binding)

        idx = min(range(len(remaining)), key=lambda i: (free(remaining[i]), i))
        pat = remaining[idx]
        rest = remaining[:idx] + remaining[idx + 1:]
        bound = [binding.get(t, None) if isinstance(t, Var) else t for t in pat]
        for triple in self.match(*bound):
            new = dict(binding)
            ok = True
            for term, value in zip(pat, triple):
                if isinstance(term, Var):
                    if term in new and new[term] != value:
                        ok = False
                        break
                    new[term] = value
            if ok:
                yield from self._solve(rest, new)

    def execute(self, query: ConjunctiveQuery) -> ResultSet:
        query.validate()
        if query.form is QueryForm.Ask:
            found = next(self.solutions(query.patterns), None) is not None
            return ResultSet(QueryForm.Ask, boolean=found)
        rows = frozenset(tuple(b[v] for v in query.projection) for b in self.solutions(query.patterns))
        return ResultSet(QueryForm.Select, tuple(query.projection), rows)

    def is_satisfiable(self, patterns) -> bool:
        patterns = [tuple(p) for p in patterns]
        if not patterns:
            raise QueryError("satisfiability check needs at least one pattern")
        for pat in patterns:
            if len(pat) != 3:
                raise QueryError(f"malformed pattern {pat!r}")
        return next(self.solutions(patterns), None) is not None

    def domain_range(self, prop: KbId) -> tuple:
        return self._domain.get(prop), self._range.get(prop)

    # ------------------------------------------------------------------

    def serialize(self) -> str:
        """Prefix header plus one sorted triple per line; reload-stable."""
        used = {t.namespace for triple in self._triples for t in triple if isinstance(t, KbId)}
        lines = [f"@prefix {name}: <{self.prefixes[name]}> ." for name in sorted(used) if name in self.prefixes]
        lines += [f"{s} {p} {o} ." for s, p, o in (tuple(t) for t in self)]
        return "\n".join(lines) + ("\n" if lines else "")


def _infer_kinds(raw) -> dict:
    kinds: dict = {}
    classes, props, datatype_props = set(), set(), set()
    for s, p, o in raw:
        props.add(p)
        if p == RDF_TYPE and isinstance(o, KbId):
            classes.add(o)
        elif p in (RDFS_DOMAIN, RDFS_RANGE):
            props.add(s)
            if isinstance(o, KbId):
                classes.add(o)
        if isinstance(o, Literal) and p not in RESERVED:
            datatype_props.add(p)
    for s, p, o in raw:
        for term in (s, o):
            if isinstance(term, KbId):
                kinds.setdefault(term, KbKind.Resource)
    for c in classes:
        kinds[c] = KbKind.Class
    for p in props:
        if p in RESERVED:
            kinds[p] = RDFS_LABEL.kind if p == RDFS_LABEL else KbKind.ObjectProperty
        else:
            kinds[p] = KbKind.DatatypeProperty if p in datatype_props else KbKind.ObjectProperty
    return kinds


def _read_source(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_turtle(text: str) -> tuple:
    """Parse the supported Turtle subset into (triples, prefixes)."""
    reader = _Reader(text, {})
    triples = []
    while not reader.at_end():
        kind, tok, line = reader.peek()
        if tok == "@prefix" or (kind == "word" and tok.upper() == "PREFIX"):
            reader.next()
            reader.read_prefix_decl(turtle_style=tok == "@prefix")
            continue
        if tok == "@base" or (kind == "word" and tok.upper() == "BASE"):
            raise TurtleSyntaxError("@base is not supported", line)
        for s, p, o, ln in reader.read_triples_block(False, (".",)):
            if not isinstance(s, KbId):
                raise TurtleSyntaxError("literal in subject position", ln)
            if not isinstance(p, KbId):
                raise TurtleSyntaxError("literal in predicate position", ln)
            triples.append(Triple(s, p, o))
        reader.expect(".")
    return triples, reader.prefixes


def load_turtle(source) -> TripleStore:
    """Load a store from a Turtle document (bytes, str, or file object)."""
    triples, prefixes = parse_turtle(_read_source(source))
    return TripleStore(triples, prefixes)


def parse_sparql(text: str, prefixes: Optional[dict] = None) -> ConjunctiveQuery:
    """Parse ``SELECT [DISTINCT] ?v... WHERE { ... }`` or ``ASK [WHERE] { ... }``."""
    reader = _Reader(text, prefixes if prefixes is not None else DEFAULT_PREFIXES)
    while reader.peek()[1] is not None and reader.peek()[1].upper() == "PREFIX":
        reader.next()
        name_tok = reader.peek()
        # SPARQL allows re-declaring a prefix; later wins
        reader.prefixes.pop(name_tok[1][:-1], None)
        reader.read_prefix_decl(turtle_style=False)
    kind, tok, line = reader.next()
    if tok is None or tok.upper() not in ("SELECT", "ASK"):
        raise TurtleSyntaxError(f"expected SELECT or ASK, got {tok!r}", line)
    form = QueryForm.Select if tok.upper() == "SELECT" else QueryForm.Ask
    projection = []
    if form is QueryForm.Select:
        if reader.peek()[1] and reader.peek()[1].upper() == "DISTINCT":
            reader.next()
        while reader.peek()[0] == "var":
            projection.append(Var(reader.next()[1][1:]))
        if not projection:
            raise TurtleSyntaxError("SELECT needs explicit projection variables", reader.line)
    if reader.peek()[1] and reader.peek()[1].upper() == "WHERE":
        reader.next()
    reader.expect("{")
    patterns = []
    while reader.peek()[1] != "}":
        for s, p, o, _ in reader.read_triples_block(True, (".", "}")):
            patterns.append((s, p, o))
        if reader.peek()[1] == ".":
            reader.next()
    reader.expect("}")
    if not reader.at_end():
        raise TurtleSyntaxError(f"trailing input {reader.peek()[1]!r}", reader.line)
    query = ConjunctiveQuery(form, tuple(projection), tuple(patterns))
    query.validate()
    return query


def query_ids(query: ConjunctiveQuery) -> set:
    """KB ids mentioned in a query, excluding the reserved schema vocabulary."""
    return {t for p in query.patterns for t in p if isinstance(t, KbId) and t not in RESERVED}


def load_turtle_file(path) -> TripleStore:
    with open(path, "rb") as fh:
        return load_turtle(fh)


__all__ = [
    "KbKind", "KbId", "Literal", "Var", "Triple", "QueryForm", "ConjunctiveQuery",
    "ResultSet", "QueryError", "TurtleSyntaxError", "TripleStore", "load_turtle",
    "load_turtle_file", "parse_sparql", "parse_turtle", "query_ids", "RDF_TYPE",
    "RDFS_DOMAIN", "RDFS_RANGE", "RDFS_LABEL", "RESERVED",
]
