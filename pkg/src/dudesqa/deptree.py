"""CoNLL-U ingestion, compound merging and traversal filters."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Optional

UPOS_TAGS = frozenset({
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
})
EXPLORED_UPOS = frozenset({"NOUN", "VERB", "ADJ", "PRON", "PROPN", "DET"})
EXPLORED_CLASSES = frozenset({"Core arguments", "Non-core dependents", "Nominal dependents"})
CLOSED_CLASS_UPOS = frozenset({"PRON", "DET"})


class ConlluError(ValueError):
    def __init__(self, message: str, sentence: int, line: Optional[int] = None):
        where = f"sentence {sentence}" + (f", line {line}" if line is not None else "")
        super().__init__(f"{where}: {message}")
        self.sentence = sentence
        self.line = line


@dataclass(frozen=True)
class DepNode:
    node_id: int
    surface: str
    lemma: str
    upos: str
    span: tuple  # original token ids covered, ascending


@dataclass(frozen=True, order=True)
class Edge:
    parent: int
    child: int
    relation: str

    @property
    def base_relation(self) -> str:
        return self.relation.split(":", 1)[0]


@dataclass(frozen=True)
class DepTree:
    nodes: tuple
    edges: frozenset
    root: int
    text: str = ""
    sent_id: str = ""
    lang: str = ""
    _by_id: dict = field(default=None, init=False, compare=False, repr=False, hash=False)
    _kids: dict = field(default=None, init=False, compare=False, repr=False, hash=False)

    def __post_init__(self):
        by_id = {n.node_id: n for n in self.nodes}
        kids: dict = {}
        for e in sorted(self.edges, key=lambda e: by_id[e.child].span[0]):
            kids.setdefault(e.parent, []).append(e)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_kids", kids)

    def node(self, node_id: int) -> DepNode:
        return self._by_id[node_id]

    def children(self, node_id: int) -> list:
        """Outgoing edges of node_id, in span order of the child."""
        return list(self._kids.get(node_id, ()))

    def parent_edge(self, node_id: int) -> Optional[Edge]:
        for e in self.edges:
            if e.child == node_id:
                return e
        return None

    def postorder(self) -> list:
        order = []

        def visit(n):
            for e in self.children(n):
                visit(e.child)
            order.append(n)

        visit(self.root)
        return order

    def with_lang(self, lang: str) -> "DepTree":
        return replace(self, lang=lang)


@lru_cache(maxsize=None)
def relation_classes() -> dict:
    """Bundled UD v2 relation table: relation -> (row, column)."""
    table = {}
    text = (resources.files("dudesqa") / "data" / "ud_relations.tsv").read_text("utf-8")
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        rel, row, col = line.split("\t")
        table[rel] = (row, col)
    return table


@lru_cache(maxsize=None)
def relation_aliases() -> dict:
    table = {}
    text = (resources.files("dudesqa") / "data" / "ud_aliases.tsv").read_text("utf-8")
    for line in text.splitlines():
        if line and not line.startswith("#"):
            old, new = line.split("\t")
            table[old] = new
    return table


def normalize_relation(rel: str) -> str:
    return relation_aliases().get(rel, rel)


def relation_class(rel: str) -> Optional[str]:
    entry = relation_classes().get(rel.split(":", 1)[0])
    return entry[0] if entry else None


def _check_tree(nodes: dict, heads: dict, sent_no: int):
    roots = [n for n, h in heads.items() if h == 0]
    if len(roots) != 1:
        raise ConlluError(f"expected exactly one root, found {len(roots)}", sent_no)
    for n in heads:
        seen = set()
        cur = n
        while cur != 0:
            if cur in seen:
                raise ConlluError(f"cyclic head structure through token {cur}", sent_no)
            seen.add(cur)
            if cur not in heads:
                raise ConlluError(f"head {cur} does not exist", sent_no)
            cur = heads[cur]
    return roots[0]


def _build_tree(rows: list, comments: dict, sent_no: int) -> DepTree:
    nodes, heads, edges = {}, {}, set()
    for line_no, cols in rows:
        tid = int(cols[0])
        form, lemma, upos = cols[1], cols[2], cols[3]
        if lemma == "_":
            lemma = form.lower()
        if upos not in UPOS_TAGS:
            raise ConlluError(f"unknown UPOS tag {upos!r}", sent_no, line_no)
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluError(f"non-integer head {cols[6]!r}", sent_no, line_no) from None
        nodes[tid] = DepNode(tid, form, lemma, upos, (tid,))
        heads[tid] = head
        if head != 0:
            edges.add(Edge(head, tid, normalize_relation(cols[7])))
    root = _check_tree(nodes, heads, sent_no)
    return DepTree(
        tuple(nodes[k] for k in sorted(nodes)),
        frozenset(edges),
        root,
        text=comments.get("text", ""),
        sent_id=comments.get("sent_id", ""),
        lang=comments.get("lang", ""),
    )


def parse_conllu(source, lang: str = "") -> list:
    """Parse CoNLL-U text (str, bytes or file object) into dependency trees."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        source = bytes(source).decode("utf-8")
    trees, rows, comments = [], [], {}
    sent_no = 0

    def flush():
        nonlocal rows, comments, sent_no
        if rows:
            tree = _build_tree(rows, comments, sent_no)
            if lang and not tree.lang:
                tree = tree.with_lang(lang)
            trees.append(tree)
            sent_no += 1
        elif comments:
            sent_no += 1
        rows, comments = [], {}

    for line_no, line in enumerate(source.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                comments[key.strip()] = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"expected 10 tab-separated columns, got {len(cols)}", sent_no, line_no)
        if "-" in cols[0] or "." in cols[0]:
            continue  # multiword token ranges and empty nodes
        if not cols[0].isdigit():
            raise ConlluError(f"bad token id {cols[0]!r}", sent_no, line_no)
        rows.append((line_no, cols))
    flush()
    return trees


def merge_compounds(tree: DepTree) -> DepTree:
    """Collapse every chain of compound edges into one node."""
    compound = [e for e in tree.edges if e.base_relation == "compound"]
    if not compound:
        return tree
    rep = {n.node_id: n.node_id for n in tree.nodes}

    def find(n):
        while rep[n] != n:
            rep[n] = rep[rep[n]]
            n = rep[n]
        return n

    for e in compound:
        # the chain's topmost head represents the merged node
        rep[find(e.child)] = find(e.parent)
    groups: dict = {}
    for n in tree.nodes:
        groups.setdefault(find(n.node_id), []).append(n)
    nodes = []
    for head_id in sorted(groups):
        members = sorted(groups[head_id], key=lambda n: n.span[0])
        head = tree.node(head_id)
        if len(members) == 1:
            nodes.append(head)
            continue
        nodes.append(DepNode(
            head_id,
            " ".join(m.surface for m in members),
            " ".join(m.lemma for m in members),
            head.upos,
            tuple(sorted(t for m in members for t in m.span)),
        ))
    edges = frozenset(
        Edge(find(e.parent), find(e.child), e.relation)
        for e in tree.edges if e.base_relation != "compound"
    )
    return replace(tree, nodes=tuple(nodes), edges=edges, root=find(tree.root))


def preprocess(tree: DepTree) -> DepTree:
    return merge_compounds(tree)


def candidate_nodes(tree: DepTree) -> set:
    return {n.node_id for n in tree.nodes if n.upos in EXPLORED_UPOS}


def traversal_candidates(tree: DepTree) -> tuple:
    """Nodes and edges the inference layers may assign.

    An edge qualifies when its relation is in one of the explored UD classes
    and both of its endpoints are explorable nodes.
    """
    nodes = candidate_nodes(tree)
    edges = {
        e for e in tree.edges
        if relation_class(e.relation) in EXPLORED_CLASSES and e.parent in nodes and e.child in nodes
    }
    return nodes, edges
