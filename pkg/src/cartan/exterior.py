"""Exterior algebra of scalar-valued p-forms over a chart or rigid coframe.

A p-form stores only strictly increasing basis index tuples; the full
antisymmetric component array is recovered by permutation sign.  The 1/p!
component convention lives exclusively in ``form_to_components`` and
``components_to_form``: the stored coefficient of a sorted tuple equals the
tensor component at those indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

from .expr import ScalarExpr, ZERO, ONE, CoordSymbol


class BasisMismatch(Exception):
    """Operands of a binary form operation live in different bases."""


class IndexOutOfRange(Exception):
    """A frame or tensor index fell outside 0..n-1."""


@dataclass(frozen=True)
class Chart:
    """An ordered list of coordinate names; fixes the dimension."""

    coords: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", tuple(self.coords))
        if len(self.coords) < 1:
            raise ValueError("chart needs at least one coordinate")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError("chart coordinates must be unique")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def coordinate_basis(self) -> BasisTag:
        return BasisTag("coordinate", self)

    def symbol(self, i: int) -> CoordSymbol:
        return CoordSymbol(self.coords[i])

    def index(self, name: str) -> int:
        return self.coords.index(name)


class BasisTag:
    """Identifies the 1-form basis a form is expressed in.

    Either the coordinate differentials of a chart, or the coframe of a
    specific Coframe object (compared by identity: two separately built
    coframes are distinct bases even if numerically equal).
    """

    __slots__ = ("kind", "chart", "coframe")

    def __init__(self, kind: str, chart: Chart, coframe=None):
        if kind not in ("coordinate", "coframe"):
            raise ValueError(f"unknown basis kind {kind!r}")
        if kind == "coframe" and coframe is None:
            raise ValueError("coframe basis needs the coframe object")
        self.kind = kind
        self.chart = chart
        self.coframe = coframe

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BasisTag):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.chart == other.chart
            and self.coframe is other.coframe
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.chart, id(self.coframe)))

    def one_form_name(self, i: int, unicode: bool = False) -> str:
        if self.kind == "coordinate":
            return f"d{self.chart.coords[i]}"
        return f"θ^{i}" if unicode else f"theta^{i}"

    def __repr__(self) -> str:
        return f"BasisTag({self.kind}, {self.chart.coords})"


def _check_same_basis(a: "Form", b: "Form") -> None:
    if a.basis != b.basis:
        raise BasisMismatch(f"{a.basis!r} vs {b.basis!r}")


class Form:
    """A p-form: map from strictly increasing index tuples to scalars."""

    __slots__ = ("degree", "basis", "terms")

    def __init__(
        self,
        degree: int,
        basis: BasisTag,
        terms: dict[tuple[int, ...], ScalarExpr] | None = None,
    ):
        if degree < 0:
            raise ValueError("form degree must be nonnegative")
        n = basis.dim
        clean: dict[tuple[int, ...], ScalarExpr] = {}
        for idx, coeff in (terms or {}).items():
            idx = tuple(idx)
            if len(idx) != degree:
                raise ValueError(f"tuple {idx} has wrong length for degree {degree}")
            if any(not (0 <= i < n) for i in idx):
                raise IndexOutOfRange(f"index tuple {idx} outside 0..{n - 1}")
            if any(idx[k] >= idx[k + 1] for k in range(len(idx) - 1)):
                raise ValueError(f"index tuple {idx} not strictly increasing")
            if not coeff.is_zero():
                clean[idx] = coeff
        self.degree = degree
        self.basis = basis
        self.terms = clean

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(degree: int, basis: BasisTag) -> Form:
        return Form(degree, basis, {})

    @staticmethod
    def from_scalar(value: ScalarExpr, basis: BasisTag) -> Form:
        return Form(0, basis, {(): value})

    @staticmethod
    def basis_one_form(basis: BasisTag, i: int) -> Form:
        if not (0 <= i < basis.dim):
            raise IndexOutOfRange(f"basis index {i} outside 0..{basis.dim - 1}")
        return Form(1, basis, {(i,): ONE})

    # -- ring structure ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, idx: Sequence[int]) -> ScalarExpr:
        return self.terms.get(tuple(idx), ZERO)

    def __add__(self, other: Form) -> Form:
        _check_same_basis(self, other)
        if self.degree != other.degree:
            raise ValueError("cannot add forms of different degree")
        terms = dict(self.terms)
        for idx, c in other.terms.items():
            terms[idx] = terms.get(idx, ZERO) + c
        return Form(self.degree, self.basis, terms)

    def __sub__(self, other: Form) -> Form:
        return self + (-other)

    def __neg__(self) -> Form:
        return Form(self.degree, self.basis, {i: -c for i, c in self.terms.items()})

    def scale(self, s: ScalarExpr | int) -> Form:
        if isinstance(s, int):
            s = ScalarExpr.from_fraction(s)
        return Form(self.degree, self.basis, {i: c * s for i, c in self.terms.items()})

    def __mul__(self, s) -> Form:
        return self.scale(s)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Form):
            return NotImplemented
        if self.degree != other.degree or self.basis != other.basis:
            return False
        keys = set(self.terms) | set(other.terms)
        return all(self.coefficient(k) == other.coefficient(k) for k in keys)

    __hash__ = None

    # -- rendering ---------------------------------------------------------

    def render(self, unicode: bool = False) -> str:
        if self.degree == 0:
            return self.terms.get((), ZERO).render()
        if not self.terms:
            return "0"
        wedge = "∧" if unicode else "/\\"
        parts = []
        for idx in sorted(self.terms):
            basis_str = wedge.join(
                self.basis.one_form_name(i, unicode) for i in idx
            )
            c = self.terms[idx]
            txt = c.render()
            if txt == "1":
                piece = basis_str
            elif txt == "-1":
                piece = f"-{basis_str}"
            elif _needs_parens(c):
                piece = f"({txt})*{basis_str}"
            else:
                piece = f"{txt}*{basis_str}"
            parts.append(piece)
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"Form({self.degree}, {self.render()})"

    def to_json_dict(self) -> dict:
        return {
            "degree": self.degree,
            "basis": self.basis.kind,
            "terms": [
                {"indices": list(idx), "coeff": self.terms[idx].render()}
                for idx in sorted(self.terms)
            ],
        }


def _needs_parens(c: ScalarExpr) -> bool:
    return len(c.num) > 1 or " " in c.render()


# ---------------------------------------------------------------------------
# Products and derivatives
# ---------------------------------------------------------------------------

def _merge_sorted(t1: tuple[int, ...], t2: tuple[int, ...]):
    """Merge two strictly increasing tuples; None if they overlap.

    Returns (merged tuple, sign of the merge permutation).
    """
    out = []
    i = j = 0
    sign = 1
    while i < len(t1) and j < len(t2):
        if t1[i] == t2[j]:
            return None, 0
        if t1[i] < t2[j]:
            out.append(t1[i])
            i += 1
        else:
            # t2[j] jumps over the remaining len(t1) - i entries of t1
            if (len(t1) - i) % 2:
                sign = -sign
            out.append(t2[j])
            j += 1
    out.extend(t1[i:])
    out.extend(t2[j:])
    return tuple(out), sign


def wedge(a: Form, b: Form) -> Form:
    """Graded-anticommutative exterior product."""
    _check_same_basis(a, b)
    if a.degree == 0:
        return b.scale(a.coefficient(()))
    if b.degree == 0:
        return a.scale(b.coefficient(()))
    terms: dict[tuple[int, ...], ScalarExpr] = {}
    for t1, c1 in a.terms.items():
        for t2, c2 in b.terms.items():
            merged, sign = _merge_sorted(t1, t2)
            if merged is None:
                continue
            c = c1 * c2
            if sign < 0:
                c = -c
            terms[merged] = terms.get(merged, ZERO) + c
    return Form(a.degree + b.degree, a.basis, terms)


def exterior_derivative(a: Form) -> Form:
    """d: degree-raising antiderivation with d^2 = 0.

    Coframe-basis forms are routed through the coordinate basis (the
    coframe object converts in both directions).
    """
    if a.basis.kind == "coframe":
        cf = a.basis.coframe
        return cf.frame_form(exterior_derivative(cf.coordinate_form(a)))
    chart = a.basis.chart
    terms: dict[tuple[int, ...], ScalarExpr] = {}
    for idx, c in a.terms.items():
        for mu in range(chart.dim):
            dc = c.partial(chart.coords[mu])
            if dc.is_zero():
                continue
            merged, sign = _merge_sorted((mu,), idx)
            if merged is None:
                continue
            if sign < 0:
                dc = -dc
            terms[merged] = terms.get(merged, ZERO) + dc
    return Form(a.degree + 1, a.basis, terms)


def interior_product(frame_index: int, form: Form) -> Form:
    """Contraction of the dual frame vector with the form's first slot."""
    n = form.basis.dim
    if not (0 <= frame_index < n):
        raise IndexOutOfRange(f"frame index {frame_index} outside 0..{n - 1}")
    if form.degree == 0:
        return Form.zero(0, form.basis)
    terms: dict[tuple[int, ...], ScalarExpr] = {}
    for idx, c in form.terms.items():
        for k, i in enumerate(idx):
            if i != frame_index:
                continue
            rest = idx[:k] + idx[k + 1:]
            val = c if k % 2 == 0 else -c
            terms[rest] = terms.get(rest, ZERO) + val
            break
    return Form(form.degree - 1, form.basis, terms)


def substitute_basis(
    form: Form, replacements: Sequence[Form], target: BasisTag
) -> Form:
    """Rewrite a form by substituting each basis 1-form with a 1-form.

    ``replacements[i]`` is the expansion of the i-th source basis 1-form in
    the target basis.  Degree-0 forms only change their tag.
    """
    if form.degree == 0:
        return Form(0, target, dict(form.terms))
    out = Form.zero(form.degree, target)
    for idx, c in form.terms.items():
        piece = Form.from_scalar(c, target)
        for i in idx:
            piece = wedge(piece, replacements[i])
        out = out + piece
    return out


# ---------------------------------------------------------------------------
# Component arrays, (anti)symmetrization
# ---------------------------------------------------------------------------

class ComponentArray:
    """A rank-k array of scalars over indices 0..n-1, stored sparsely."""

    __slots__ = ("dim", "rank", "entries")

    def __init__(
        self,
        dim: int,
        rank: int,
        entries: dict[tuple[int, ...], ScalarExpr] | None = None,
    ):
        self.dim = dim
        self.rank = rank
        self.entries: dict[tuple[int, ...], ScalarExpr] = {}
        for idx, val in (entries or {}).items():
            idx = tuple(idx)
            if len(idx) != rank:
                raise ValueError(f"index {idx} has wrong rank (expected {rank})")
            if any(not (0 <= i < dim) for i in idx):
                raise IndexOutOfRange(f"index {idx} outside 0..{dim - 1}")
            if not val.is_zero():
                self.entries[idx] = val

    def get(self, idx: Sequence[int]) -> ScalarExpr:
        return self.entries.get(tuple(idx), ZERO)

    def __getitem__(self, idx) -> ScalarExpr:
        if isinstance(idx, int):
            idx = (idx,)
        return self.get(idx)

    def iter_nonzero(self) -> Iterator[tuple[tuple[int, ...], ScalarExpr]]:
        for idx in sorted(self.entries):
            yield idx, self.entries[idx]

    def is_zero(self) -> bool:
        return not self.entries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComponentArray):
            return NotImplemented
        if (self.dim, self.rank) != (other.dim, other.rank):
            return False
        keys = set(self.entries) | set(other.entries)
        return all(self.get(k) == other.get(k) for k in keys)

    __hash__ = None

    def __sub__(self, other: ComponentArray) -> ComponentArray:
        if (self.dim, self.rank) != (other.dim, other.rank):
            raise ValueError("shape mismatch")
        out: dict[tuple[int, ...], ScalarExpr] = dict(self.entries)
        for idx, v in other.entries.items():
            out[idx] = out.get(idx, ZERO) - v
        return ComponentArray(self.dim, self.rank, out)

    def __add__(self, other: ComponentArray) -> ComponentArray:
        if (self.dim, self.rank) != (other.dim, other.rank):
            raise ValueError("shape mismatch")
        out: dict[tuple[int, ...], ScalarExpr] = dict(self.entries)
        for idx, v in other.entries.items():
            out[idx] = out.get(idx, ZERO) + v
        return ComponentArray(self.dim, self.rank, out)

    def scale(self, s: ScalarExpr | int) -> ComponentArray:
        if isinstance(s, int):
            s = ScalarExpr.from_fraction(s)
        return ComponentArray(
            self.dim, self.rank, {i: v * s for i, v in self.entries.items()}
        )

    def map(self, fn: Callable[[tuple[int, ...], ScalarExpr], ScalarExpr]) -> ComponentArray:
        return ComponentArray(
            self.dim, self.rank, {i: fn(i, v) for i, v in self.entries.items()}
        )

    def __repr__(self) -> str:
        inner = ", ".join(f"{i}: {v}" for i, v in self.iter_nonzero())
        return f"ComponentArray(n={self.dim}, rank={self.rank}, {{{inner}}})"


def _permutation_sign(perm: Sequence[int]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _permute_positions(
    t: ComponentArray, positions: Sequence[int], signed: bool
) -> ComponentArray:
    positions = sorted(positions)
    if any(not (0 <= p < t.rank) for p in positions):
        raise IndexOutOfRange(f"positions {positions} outside rank {t.rank}")
    k = len(positions)
    factor = ScalarExpr.from_fraction(1) / ScalarExpr.from_fraction(
        _factorial(k)
    )
    out: dict[tuple[int, ...], ScalarExpr] = {}
    for idx, val in t.entries.items():
        sub = [idx[p] for p in positions]
        for perm in itertools.permutations(range(k)):
            new = list(idx)
            for slot, p in enumerate(positions):
                new[p] = sub[perm[slot]]
            contrib = val
            if signed and _permutation_sign(perm) < 0:
                contrib = -contrib
            key = tuple(new)
            out[key] = out.get(key, ZERO) + contrib
    return ComponentArray(t.dim, t.rank, out).scale(factor)


def _factorial(k: int) -> int:
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def symmetrize(t: ComponentArray, positions: Sequence[int]) -> ComponentArray:
    """Average over all permutations of the chosen index positions."""
    return _permute_positions(t, positions, signed=False)


def alternate(t: ComponentArray, positions: Sequence[int]) -> ComponentArray:
    """Signed average over all permutations of the chosen index positions."""
    return _permute_positions(t, positions, signed=True)


def form_to_components(a: Form) -> ComponentArray:
    """Full antisymmetric component array of a form (1/p! convention)."""
    entries: dict[tuple[int, ...], ScalarExpr] = {}
    for idx, c in a.terms.items():
        for perm in itertools.permutations(range(len(idx))):
            key = tuple(idx[p] for p in perm)
            entries[key] = c if _permutation_sign(perm) > 0 else -c
    return ComponentArray(a.basis.dim, a.degree, entries)


def components_to_form(c: ComponentArray, degree: int, basis: BasisTag) -> Form:
    """Inverse of ``form_to_components``; alternates non-antisymmetric input."""
    if c.rank != degree:
        raise ValueError(f"rank {c.rank} does not match degree {degree}")
    if degree > 0:
        c = alternate(c, range(degree))
    terms: dict[tuple[int, ...], ScalarExpr] = {}
    for idx, val in c.entries.items():
        if all(idx[k] < idx[k + 1] for k in range(len(idx) - 1)):
            terms[idx] = val
    return Form(degree, basis, terms)
