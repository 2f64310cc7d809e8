"""Ground congruence closure over a finite term universe."""
from __future__ import annotations

from typing import Iterable

from .syntax import App, Term, term_key


def _subterms(t: Term, out: set) -> None:
    if t in out:
        return
    out.add(t)
    if isinstance(t, App):
        for a in t.args:
            _subterms(a, out)


class CongruenceClosure:
    """Smallest congruence on ``universe`` containing ``equations``.

    The universe is closed under subterms first.  Merging follows the usual
    use-list scheme: when two classes merge, the parents of the absorbed
    class are re-hashed by (symbol, argument classes) and any collision is
    queued as a new equation.
    """

    def __init__(self, universe: Iterable[Term] = (), equations: Iterable[tuple] = ()):
        self.terms: list = []
        self.ids: dict = {}
        self.parent: list = []
        self.rank: list = []
        self.uses: list = []       # class root -> parent term ids
        self.sigtab: dict = {}
        self.pending: list = []
        for t in universe:
            self.add(t)
        for s, t in equations:
            self.merge(s, t)

    def add(self, t: Term) -> int:
        if t in self.ids:
            return self.ids[t]
        if isinstance(t, App):
            arg_ids = [self.add(a) for a in t.args]
        else:
            arg_ids = []
        i = len(self.terms)
        self.terms.append(t)
        self.ids[t] = i
        self.parent.append(i)
        self.rank.append(0)
        self.uses.append([])
        if arg_ids:
            for a in set(self.find_id(x) for x in arg_ids):
                self.uses[a].append(i)
            key = self._sig(i)
            other = self.sigtab.get(key)
            if other is None:
                self.sigtab[key] = i
            else:
                self._union(i, other)
        return i

    def _sig(self, i: int) -> tuple:
        t = self.terms[i]
        return (t.fn, tuple(self.find_id(self.ids[a]) for a in t.args))

    def find_id(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def find(self, t: Term) -> int:
        return self.find_id(self.ids[t])

    def merge(self, s: Term, t: Term) -> None:
        self._union(self.add(s), self.add(t))

    def _union(self, a: int, b: int) -> None:
        self.pending.append((a, b))
        while self.pending:
            x, y = self.pending.pop()
            rx, ry = self.find_id(x), self.find_id(y)
            if rx == ry:
                continue
            if self.rank[rx] > self.rank[ry]:
                rx, ry = ry, rx
            # absorb rx into ry
            self.parent[rx] = ry
            if self.rank[rx] == self.rank[ry]:
                self.rank[ry] += 1
            moved = self.uses[rx]
            self.uses[rx] = []
            for p in moved:
                key = self._sig(p)
                other = self.sigtab.get(key)
                if other is None:
                    self.sigtab[key] = p
                elif self.find_id(other) != self.find_id(p):
                    self.pending.append((p, other))
            self.uses[ry].extend(moved)

    def equivalent(self, s: Term, t: Term) -> bool:
        if s not in self.ids or t not in self.ids:
            return s == t
        return self.find(s) == self.find(t)

    def classes(self, universe: Iterable[Term] | None = None) -> list:
        """Classes as lists sorted by term order, least representative first;
        the list itself is sorted by representative."""
        terms = self.terms if universe is None else list(universe)
        groups: dict = {}
        for t in terms:
            groups.setdefault(self.find(t), []).append(t)
        out = [sorted(set(g), key=term_key) for g in groups.values()]
        return sorted(out, key=lambda g: term_key(g[0]))

    def representative(self, t: Term) -> Term:
        r = self.find(t)
        return min((u for u in self.terms if self.find(u) == r), key=term_key)


def congruence_close(universe: Iterable[Term], equations: Iterable[tuple]) -> CongruenceClosure:
    universe = list(universe)
    closed: set = set()
    for t in universe:
        _subterms(t, closed)
    for s, t in equations:
        _subterms(s, closed)
        _subterms(t, closed)
    return CongruenceClosure(sorted(closed, key=term_key), equations)
