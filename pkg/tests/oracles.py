"""Independent reference implementations used as test oracles.

Deliberately naive: full scans, explicit enumeration, no shared indexes.
"""
import itertools

from dudesqa.dudes import CompositionError, DudeKind, apply, make_dude, patterns_of
from dudesqa.kb import Var


def scan_solutions(triples, patterns):
    """All variable bindings satisfying every pattern, by nested full scans."""
    triples = [tuple(t) for t in triples]
    results = [{}]
    for pattern in patterns:
        extended = []
        for binding in results:
            for triple in triples:
                b = dict(binding)
                ok = True
                for term, value in zip(pattern, triple):
                    if isinstance(term, Var):
                        if term in b and b[term] != value:
                            ok = False
                            break
                        b[term] = value
                    elif term != value:
                        ok = False
                        break
                if ok:
                    extended.append(b)
        results = extended
        if not results:
            return []
    return results


def satisfiable(triples, patterns) -> bool:
    return bool(scan_solutions(triples, patterns))


def compose_pair(pkind, pid, ckind, cid, arg):
    """Edge-level patterns: child into the parent's slot, else parent into the child's."""
    try:
        parent, child = make_dude(pkind, pid), make_dude(ckind, cid)
        if parent.slot(arg) is not None:
            d = apply(parent, child, arg)
        elif child.slot(arg) is not None:
            d = apply(child, parent, arg)
        else:
            return None
        return patterns_of(d) or None
    except CompositionError:
        return None


LINK_KINDS = (DudeKind.Resource, DudeKind.Class, DudeKind.Property, DudeKind.RestrictionClass)


def node_options(candidates, tree, node_id, lang):
    node = tree.node(node_id)
    return [(k, c.kb_id, c.score, c.origin) for k in LINK_KINDS
            for c in candidates.candidates(node, k, lang)]


def enumerate_states(tree, candidates, lang, start_state):
    """Every assignment of (alpha, beta) to candidate nodes and gamma to candidate edges,
    QueryVar allowed on closed-class nodes. Yields ParseStates."""
    from dudesqa.deptree import CLOSED_CLASS_UPOS, traversal_candidates

    nodes, edges = traversal_candidates(tree)
    nodes, edges = sorted(nodes), sorted(edges)
    per_node = []
    for n in nodes:
        opts = [None] + node_options(candidates, tree, n, lang)
        if tree.node(n).upos in CLOSED_CLASS_UPOS:
            opts.append((DudeKind.QueryVar, None, 0.0, None))
        per_node.append(opts)
    for node_choice in itertools.product(*per_node):
        assigned = [(n, *opt) for n, opt in zip(nodes, node_choice) if opt is not None]
        for edge_choice in itertools.product((None, 1, 2), repeat=len(edges)):
            gamma = [(e, i) for e, i in zip(edges, edge_choice) if i is not None]
            yield start_state.assign(assigned, gamma)


def space_size(tree, candidates, lang) -> int:
    from dudesqa.deptree import CLOSED_CLASS_UPOS, traversal_candidates

    nodes, edges = traversal_candidates(tree)
    size = 3 ** len(edges)
    for n in nodes:
        size *= 1 + len(node_options(candidates, tree, n, lang)) + (tree.node(n).upos in CLOSED_CLASS_UPOS)
    return size
