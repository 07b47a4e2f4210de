"""DUDES: composable meaning representations and their conversion to queries."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .kb import (
    PROPERTY_KINDS,
    RDF_TYPE,
    ConjunctiveQuery,
    KbId,
    KbKind,
    Literal,
    Var,
)


class DudeKind(enum.Enum):
    Resource = "Resource"
    Class = "Class"
    Property = "Property"
    RestrictionClass = "RestrictionClass"
    QueryVar = "QueryVar"


EQUALS = "="


@dataclass(frozen=True, order=True)
class Restriction:
    """Property-value pair lexicalised by an intersective adjective ("Swedish")."""

    prop: KbId
    value: KbId | Literal

    def __str__(self):
        return f"{self.prop}={self.value}"

    def ids(self) -> set:
        return {t for t in (self.prop, self.value) if isinstance(t, KbId)}


class CompositionError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    predicate: object  # KbId or EQUALS
    args: tuple

    def __str__(self):
        if self.predicate == EQUALS:
            return f"{_fmt(self.args[0])} = {_fmt(self.args[1])}"
        return f"{self.predicate}({', '.join(_fmt(a) for a in self.args)})"


@dataclass(frozen=True)
class Drs:
    label: int
    referents: frozenset
    conditions: tuple


@dataclass(frozen=True)
class Slot:
    variable: str
    anchor: str
    arg_index: int

    def __str__(self):
        return f"({self.variable}, {self.anchor}, {self.arg_index})"


@dataclass(frozen=True)
class Dude:
    kind: DudeKind
    main_variable: Optional[str]
    projection: tuple
    label: int
    drs: Drs
    slots: tuple = field(default=())

    def variables(self) -> set:
        out = set(self.drs.referents) | set(self.projection)
        if self.main_variable:
            out.add(self.main_variable)
        out.update(s.variable for s in self.slots)
        for c in self.drs.conditions:
            out.update(a for a in c.args if isinstance(a, str))
        return out

    def slot(self, arg_index: int) -> Optional[Slot]:
        for s in self.slots:
            if s.arg_index == arg_index:
                return s
        return None

    @property
    def saturated(self) -> bool:
        return not self.slots

    def render(self) -> str:
        """Canonical text form, one tuple component per line."""
        referents = " ".join(sorted(self.drs.referents))
        conditions = ", ".join(str(c) for c in self.drs.conditions)
        return "\n".join([
            f"kind: {self.kind.value}",
            f"v: {self.main_variable or '-'}",
            "vs: {" + ", ".join(self.projection) + "}",
            f"l: {self.label}",
            f"drs: [{referents} | {conditions}]",
            "slots: {" + ", ".join(str(s) for s in self.slots) + "}",
        ])

    def __str__(self):
        return self.render()


def _fmt(arg) -> str:
    return arg if isinstance(arg, str) else str(arg)


def _check_id(kind: DudeKind, kb_id):
    if kind is DudeKind.QueryVar:
        if kb_id is not None:
            raise CompositionError("QueryVar DUDES takes no KB id")
        return
    if kb_id is None:
        raise CompositionError(f"{kind.value} DUDES needs a KB id")
    if kind is DudeKind.RestrictionClass:
        if not isinstance(kb_id, Restriction):
            raise CompositionError("RestrictionClass DUDES needs a property-value restriction")
        return
    if not isinstance(kb_id, KbId):
        raise CompositionError(f"{kind.value} DUDES needs a KB id, got {kb_id!r}")
    allowed = {
        DudeKind.Resource: (KbKind.Resource,),
        DudeKind.Class: (KbKind.Class,),
        DudeKind.Property: PROPERTY_KINDS,
    }[kind]
    if kb_id.kind not in allowed:
        raise CompositionError(f"{kind.value} DUDES cannot be built from {kb_id.kind.value} id {kb_id}")


def make_dude(kind: DudeKind, kb_id=None) -> Dude:
    """Canonical DUDES template for one of the five kinds."""
    _check_id(kind, kb_id)
    if kind is DudeKind.Resource:
        drs = Drs(1, frozenset({"x"}), (Condition(EQUALS, ("x", kb_id)),))
        return Dude(kind, "x", (), 1, drs)
    if kind is DudeKind.Class:
        drs = Drs(1, frozenset({"x"}), (Condition(RDF_TYPE, ("x", kb_id)),))
        return Dude(kind, "x", (), 1, drs)
    if kind is DudeKind.Property:
        drs = Drs(1, frozenset({"x", "y"}), (Condition(kb_id, ("x", "y")),))
        return Dude(kind, None, (), 1, drs, (Slot("x", "a1", 1), Slot("y", "a2", 2)))
    if kind is DudeKind.RestrictionClass:
        drs = Drs(1, frozenset({"x"}), (Condition(kb_id.prop, ("x", kb_id.value)),))
        return Dude(kind, "x", (), 1, drs, (Slot("x", "a1", 1),))
    return Dude(kind, "v", ("v",), 1, Drs(1, frozenset({"v"}), ()))


# --------------------------------------------------------------------------

def _substitute(d: Dude, mapping: dict) -> Dude:
    """Replace variables by variables or constants throughout a DUDES."""

    def sub(a):
        return mapping.get(a, a) if isinstance(a, str) else a

    def sub_var(v):
        if v is None:
            return None
        w = mapping.get(v, v)
        return w if isinstance(w, str) else None

    conditions = tuple(Condition(c.predicate, tuple(sub(a) for a in c.args)) for c in d.drs.conditions)
    referents = frozenset(w for w in (mapping.get(r, r) for r in d.drs.referents) if isinstance(w, str))
    projection = _dedup(w for w in (mapping.get(v, v) for v in d.projection) if isinstance(w, str))
    slots = tuple(Slot(sub_var(s.variable) or s.variable, s.anchor, s.arg_index) for s in d.slots)
    return replace(
        d,
        main_variable=sub_var(d.main_variable),
        projection=projection,
        drs=Drs(d.drs.label, referents, conditions),
        slots=slots,
    )


def _dedup(items) -> tuple:
    seen, out = set(), []
    for x in items:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return tuple(out)


_SUFFIX = re.compile(r"^(.*?)(\d*)$")


def _fresh(name: str, taken: set) -> str:
    base = _SUFFIX.match(name).group(1) or name
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


def rename_apart(d: Dude, reserved) -> Dude:
    """Alpha-rename d so none of its variables occur in reserved."""
    reserved = set(reserved)
    own = d.variables()
    clashes = sorted(own & reserved)
    if not clashes:
        return d
    taken = reserved | own
    mapping = {}
    for v in clashes:
        new = _fresh(v, taken)
        taken.add(new)
        mapping[v] = new
    return _substitute(d, mapping)


def _resolve_equalities(d: Dude) -> Dude:
    # v = constant conditions are eliminated by substitution
    while True:
        eq = next(
            (c for c in d.drs.conditions
             if c.predicate == EQUALS and isinstance(c.args[0], str) and not isinstance(c.args[1], str)),
            None,
        )
        if eq is None:
            return d
        var, const = eq.args
        rest = tuple(c for c in d.drs.conditions if c is not eq)
        d = _substitute(replace(d, drs=Drs(d.drs.label, d.drs.referents, rest)), {var: const})


def apply(functor: Dude, argument: Dude, arg_index: int) -> Dude:
    """Fill the functor's slot ``arg_index`` with argument's main variable."""
    if arg_index not in (1, 2):
        raise CompositionError(f"argument index must be 1 or 2, got {arg_index}")
    slot = functor.slot(arg_index)
    if slot is None:
        raise CompositionError(f"{functor.kind.value} DUDES has no open slot with index {arg_index}")
    argument = rename_apart(argument, functor.variables())
    if argument.main_variable is None:
        raise CompositionError(f"{argument.kind.value} DUDES has no main variable to unify")
    argument = _substitute(argument, {argument.main_variable: slot.variable})
    merged = Dude(
        kind=functor.kind,
        main_variable=functor.main_variable,
        projection=_dedup(functor.projection + argument.projection),
        label=functor.label,
        drs=Drs(
            functor.drs.label,
            functor.drs.referents | argument.drs.referents,
            functor.drs.conditions + argument.drs.conditions,
        ),
        slots=tuple(s for s in functor.slots if s is not slot) + argument.slots,
    )
    return _resolve_equalities(merged)


def _term(arg):
    return Var(arg) if isinstance(arg, str) else arg


def patterns_of(d: Dude) -> tuple:
    """Triple patterns for the DUDES's relational conditions."""
    d = _resolve_equalities(d)
    out = []
    for c in d.drs.conditions:
        if c.predicate == EQUALS:
            continue
        if len(c.args) != 2:
            raise CompositionError(f"cannot express condition {c} as a triple pattern")
        out.append((_term(c.args[0]), c.predicate, _term(c.args[1])))
    return tuple(out)


def to_query(d: Dude) -> ConjunctiveQuery:
    if d.slots:
        raise CompositionError("unsaturated DUDES, open slots: " + ", ".join(str(s) for s in d.slots))
    patterns = patterns_of(d)
    if not patterns:
        raise CompositionError("DUDES has no relational content to query")
    if d.projection:
        query = ConjunctiveQuery.select(tuple(Var(v) for v in d.projection), patterns)
    else:
        query = ConjunctiveQuery.ask(patterns)
    query.validate()
    return query
