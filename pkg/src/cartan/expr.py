"""Exact symbolic scalars: rational functions over coordinate and derivative atoms.

A scalar is a fraction of multivariate polynomials with exact rational
coefficients.  The variables ("atoms") are either coordinate symbols or
partial derivatives of opaque function symbols; mixed partials are stored
with a sorted derivative multi-index, so H_xy and H_yx are the same atom.
Normalization expands everything into a flat monomial dict, cancels
monomial content, attempts exact polynomial division of numerator by
denominator (and vice versa), and scales the denominator monic under a
graded-lexicographic monomial order.  Zero testing is therefore decidable
(numerator empty); general equality falls back to cross-multiplication.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key
from typing import Iterable, Iterator, Mapping, Union


class ExprError(Exception):
    """Base class for scalar-kernel errors."""


class DivisionByZero(ExprError):
    """Division by an expression that normalizes to zero."""


class UnboundAtom(ExprError):
    """Numeric evaluation hit an atom with no binding."""


class NumericDivisionByZero(ExprError):
    """Numeric evaluation hit a vanishing denominator."""


class DegreeOverflow(ExprError):
    """A product exceeded the active polynomial-degree guard."""


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoordSymbol:
    """A coordinate variable such as ``x`` or ``u``."""

    name: str

    def sort_key(self) -> tuple:
        return (0, self.name, ())

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class FuncDeriv:
    """A partial derivative of an opaque function symbol.

    ``derivs`` is the sorted derivative multi-index; the empty tuple is the
    undifferentiated function itself.  Sorting identifies mixed partials
    (H_xy is H_yx).  Every entry of ``derivs`` must be one of ``args``.
    """

    func: str
    args: tuple[str, ...]
    derivs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "derivs", tuple(sorted(self.derivs)))
        bad = [d for d in self.derivs if d not in self.args]
        if bad:
            raise ExprError(
                f"{self.func} differentiated by non-argument {bad[0]!r} "
                f"(arguments: {', '.join(self.args)})"
            )

    def sort_key(self) -> tuple:
        return (1, self.func, self.derivs)

    def __str__(self) -> str:
        if not self.derivs:
            return self.func
        if all(len(d) == 1 for d in self.derivs):
            return f"{self.func}_{''.join(self.derivs)}"
        return f"{self.func}_{','.join(self.derivs)}"


Atom = Union[CoordSymbol, FuncDeriv]

# A monomial maps atoms to positive integer exponents, stored as a tuple of
# (atom, exponent) pairs sorted by the atom order.  The empty tuple is 1.
Monomial = tuple[tuple[Atom, int], ...]
PolyDict = dict[Monomial, Fraction]

_ONE_MONO: Monomial = ()


def _atom_cmp(a: Atom, b: Atom) -> int:
    ka, kb = a.sort_key(), b.sort_key()
    return -1 if ka < kb else (1 if ka > kb else 0)


def _mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    out: list[tuple[Atom, int]] = []
    i = j = 0
    while i < len(m1) and j < len(m2):
        a1, e1 = m1[i]
        a2, e2 = m2[j]
        c = _atom_cmp(a1, a2)
        if c == 0:
            out.append((a1, e1 + e2))
            i += 1
            j += 1
        elif c < 0:
            out.append(m1[i])
            i += 1
        else:
            out.append(m2[j])
            j += 1
    out.extend(m1[i:])
    out.extend(m2[j:])
    return tuple(out)


def _mono_try_div(m: Monomial, d: Monomial) -> Monomial | None:
    """m / d if d divides m, else None."""
    out: list[tuple[Atom, int]] = []
    i = 0
    for a, e in m:
        if i < len(d) and _atom_cmp(d[i][0], a) < 0:
            return None  # divisor has an atom m lacks
        if i < len(d) and _atom_cmp(d[i][0], a) == 0:
            if d[i][1] > e:
                return None
            if d[i][1] < e:
                out.append((a, e - d[i][1]))
            i += 1
        else:
            out.append((a, e))
    if i < len(d):
        return None
    return tuple(out)


def _mono_cmp(m1: Monomial, m2: Monomial) -> int:
    """Graded lexicographic order; multiplicative, hence usable for division."""
    d1, d2 = _mono_degree(m1), _mono_degree(m2)
    if d1 != d2:
        return -1 if d1 < d2 else 1
    i = j = 0
    while i < len(m1) and j < len(m2):
        a1, e1 = m1[i]
        a2, e2 = m2[j]
        c = _atom_cmp(a1, a2)
        if c < 0:
            return 1  # m1 has an earlier atom with positive exponent
        if c > 0:
            return -1
        if e1 != e2:
            return 1 if e1 > e2 else -1
        i += 1
        j += 1
    if i < len(m1):
        return 1
    if j < len(m2):
        return -1
    return 0


_mono_sort_key = cmp_to_key(_mono_cmp)


# ---------------------------------------------------------------------------
# Polynomial dictionaries
# ---------------------------------------------------------------------------

_guard = threading.local()


@contextmanager
def degree_guard(max_degree: int) -> Iterator[None]:
    """Bound the total degree of any polynomial built inside the block.

    Products whose result exceeds ``max_degree`` raise DegreeOverflow.  Used
    by the CLI as a symbolic-blowup fuse; the library runs unguarded by
    default.  The guard is thread-local.
    """
    prev = getattr(_guard, "max_degree", None)
    _guard.max_degree = max_degree
    try:
        yield
    finally:
        _guard.max_degree = prev


def _check_degree(p: PolyDict) -> PolyDict:
    cap = getattr(_guard, "max_degree", None)
    if cap is not None:
        for m in p:
            if _mono_degree(m) > cap:
                raise DegreeOverflow(
                    f"polynomial degree {_mono_degree(m)} exceeds guard {cap}"
                )
    return p


def _poly_add(a: PolyDict, b: PolyDict) -> PolyDict:
    if not a:
        return dict(b)
    if not b:
        return dict(a)
    out = dict(a)
    for m, c in b.items():
        s = out.get(m)
        if s is None:
            out[m] = c
        else:
            s = s + c
            if s:
                out[m] = s
            else:
                del out[m]
    return out


def _poly_neg(a: PolyDict) -> PolyDict:
    return {m: -c for m, c in a.items()}


def _poly_sub(a: PolyDict, b: PolyDict) -> PolyDict:
    return _poly_add(a, _poly_neg(b))


def _poly_scale(a: PolyDict, c: Fraction) -> PolyDict:
    if not c:
        return {}
    return {m: co * c for m, co in a.items()}


def _poly_mul(a: PolyDict, b: PolyDict) -> PolyDict:
    if not a or not b:
        return {}
    out: PolyDict = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = _mono_mul(m1, m2)
            c = c1 * c2
            s = out.get(m)
            if s is None:
                out[m] = c
            else:
                s = s + c
                if s:
                    out[m] = s
                else:
                    del out[m]
    return _check_degree(out)


def _poly_leading(a: PolyDict) -> tuple[Monomial, Fraction]:
    best: Monomial | None = None
    for m in a:
        if best is None or _mono_cmp(m, best) > 0:
            best = m
    assert best is not None
    return best, a[best]


def _poly_max_degree(a: PolyDict) -> int:
    return max((_mono_degree(m) for m in a), default=0)


def _poly_trailing_mono(a: PolyDict) -> Monomial:
    best: Monomial | None = None
    for m in a:
        if best is None or _mono_cmp(m, best) < 0:
            best = m
    assert best is not None
    return best


def _poly_exact_div(a: PolyDict, b: PolyDict, max_steps: int = 512) -> PolyDict | None:
    """a / b when the division is exact, else None.

    Failure is cheap: the leading and trailing monomials of b must divide
    those of a (the monomial order is multiplicative), and the long
    division bails out after ``max_steps`` eliminations — an aborted
    attempt only means the caller keeps the unreduced fraction.
    """
    if not a:
        return {}
    if _poly_max_degree(a) < _poly_max_degree(b):
        return None
    if _mono_try_div(_poly_trailing_mono(a), _poly_trailing_mono(b)) is None:
        return None
    lb, cb = _poly_leading(b)
    rem = dict(a)
    quo: PolyDict = {}
    steps = 0
    while rem:
        steps += 1
        if steps > max_steps:
            return None
        lm, lc = _poly_leading(rem)
        qm = _mono_try_div(lm, lb)
        if qm is None:
            return None
        qc = lc / cb
        quo[qm] = qc
        for m, c in b.items():
            mm = _mono_mul(qm, m)
            s = rem.get(mm, Fraction(0)) - qc * c
            if s:
                rem[mm] = s
            else:
                rem.pop(mm, None)
    return quo


def _poly_mono_content(a: PolyDict) -> Monomial:
    """Atom-wise minimum exponent over all monomials (gcd of the monomials)."""
    it = iter(a)
    content = dict(next(it))
    for m in it:
        if not content:
            break
        md = dict(m)
        for atom in list(content):
            e = md.get(atom, 0)
            if e == 0:
                del content[atom]
            elif e < content[atom]:
                content[atom] = e
    return tuple(sorted(content.items(), key=lambda p: p[0].sort_key()))


def _poly_partial(a: PolyDict, coord: str) -> PolyDict:
    out: PolyDict = {}
    for m, c in a.items():
        for idx, (atom, e) in enumerate(m):
            d = _atom_partial(atom, coord)
            if d is None:
                continue
            rest = list(m)
            if e == 1:
                del rest[idx]
            else:
                rest[idx] = (atom, e - 1)
            base: Monomial = tuple(rest)
            if isinstance(d, (CoordSymbol, FuncDeriv)):
                term = _mono_mul(base, ((d, 1),))
            else:
                term = base
            s = out.get(term, Fraction(0)) + c * e
            if s:
                out[term] = s
            else:
                out.pop(term, None)
    return out


def _atom_partial(atom: Atom, coord: str):
    """d(atom)/d(coord): None for 0, "one" for 1, or the derivative atom."""
    if isinstance(atom, CoordSymbol):
        return "one" if atom.name == coord else None
    if coord in atom.args:
        return FuncDeriv(atom.func, atom.args, atom.derivs + (coord,))
    return None


def _poly_eval(a: PolyDict, bindings: Mapping[Atom, float]) -> float:
    total = 0.0
    for m, c in a.items():
        v = float(c)
        for atom, e in m:
            if atom not in bindings:
                raise UnboundAtom(f"no binding for atom {atom}")
            v *= float(bindings[atom]) ** e
        total += v
    return total


_P_ONE: PolyDict = {_ONE_MONO: Fraction(1)}


# ---------------------------------------------------------------------------
# ScalarExpr
# ---------------------------------------------------------------------------

class ScalarExpr:
    """An exact rational function of atoms, kept in normal form.

    Instances are immutable; every operation returns a fresh value.  Two
    expressions compare equal iff they are mathematically equal (decided by
    cross-multiplication when the denominators differ).
    """

    __slots__ = ("num", "den")

    def __init__(self, num: PolyDict, den: PolyDict | None = None):
        if den is None:
            den = dict(_P_ONE)
        if not den:
            raise DivisionByZero("denominator normalizes to zero")
        if not num:
            self.num: PolyDict = {}
            self.den: PolyDict = dict(_P_ONE)
            return
        # cancel the shared monomial content
        cn = _poly_mono_content(num)
        cd = _poly_mono_content(den)
        if cn and cd:
            common = _mono_common(cn, cd)
            if common:
                num = {_mono_try_div(m, common): c for m, c in num.items()}
                den = {_mono_try_div(m, common): c for m, c in den.items()}
        if den != _P_ONE:
            q = _poly_exact_div(num, den)
            if q is not None:
                num, den = q, dict(_P_ONE)
            else:
                q = _poly_exact_div(den, num)
                if q is not None:
                    num, den = dict(_P_ONE), q
        # monic denominator under the monomial order
        _, lc = _poly_leading(den)
        if lc != 1:
            num = _poly_scale(num, 1 / lc)
            den = _poly_scale(den, 1 / lc)
        self.num = num
        self.den = den

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_fraction(q: Fraction | int) -> ScalarExpr:
        q = Fraction(q)
        return ScalarExpr({_ONE_MONO: q} if q else {})

    @staticmethod
    def from_atom(atom: Atom) -> ScalarExpr:
        return ScalarExpr({((atom, 1),): Fraction(1)})

    # -- predicates --------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.num

    def is_one(self) -> bool:
        return self.num == _P_ONE and self.den == _P_ONE

    def is_constant(self) -> bool:
        """True when the value is a rational number (no atoms)."""
        return self.den == _P_ONE and (
            not self.num or set(self.num) == {_ONE_MONO}
        )

    def as_fraction(self) -> Fraction:
        if not self.is_constant():
            raise ExprError(f"{self} is not a rational constant")
        return self.num.get(_ONE_MONO, Fraction(0))

    def is_polynomial(self) -> bool:
        return self.den == _P_ONE

    def leading_coefficient(self) -> Fraction:
        """Coefficient of the numerator's leading monomial (0 for zero)."""
        if not self.num:
            return Fraction(0)
        return _poly_leading(self.num)[1]

    def atoms(self) -> set[Atom]:
        out: set[Atom] = set()
        for p in (self.num, self.den):
            for m in p:
                out.update(a for a, _ in m)
        return out

    def max_degree(self) -> int:
        return max(
            (_mono_degree(m) for p in (self.num, self.den) for m in p),
            default=0,
        )

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: ScalarExpr | int | Fraction) -> ScalarExpr:
        other = _coerce(other)
        if self.den == other.den:
            return ScalarExpr(_poly_add(self.num, other.num), dict(self.den))
        # when one denominator divides the other, stay on the larger one
        # (keeps denominator powers from escalating in accumulation chains)
        q = _poly_exact_div(other.den, self.den)
        if q is not None:
            return ScalarExpr(
                _poly_add(_poly_mul(self.num, q), other.num), dict(other.den)
            )
        q = _poly_exact_div(self.den, other.den)
        if q is not None:
            return ScalarExpr(
                _poly_add(self.num, _poly_mul(other.num, q)), dict(self.den)
            )
        return ScalarExpr(
            _poly_add(
                _poly_mul(self.num, other.den), _poly_mul(other.num, self.den)
            ),
            _poly_mul(self.den, other.den),
        )

    def __sub__(self, other: ScalarExpr | int | Fraction) -> ScalarExpr:
        return self + (-_coerce(other))

    def __neg__(self) -> ScalarExpr:
        out = object.__new__(ScalarExpr)
        out.num = _poly_neg(self.num)
        out.den = dict(self.den)
        return out

    def __mul__(self, other: ScalarExpr | int | Fraction) -> ScalarExpr:
        other = _coerce(other)
        return ScalarExpr(
            _poly_mul(self.num, other.num), _poly_mul(self.den, other.den)
        )

    def __truediv__(self, other: ScalarExpr | int | Fraction) -> ScalarExpr:
        other = _coerce(other)
        if other.is_zero():
            raise DivisionByZero("division by zero expression")
        return ScalarExpr(
            _poly_mul(self.num, other.den), _poly_mul(self.den, other.num)
        )

    def __pow__(self, k: int) -> ScalarExpr:
        if not isinstance(k, int):
            raise ExprError("only integer powers are supported")
        if k == 0:
            return ONE
        base = self
        if k < 0:
            if base.is_zero():
                raise DivisionByZero("zero to a negative power")
            base = ONE / base
            k = -k
        out = base
        for _ in range(k - 1):
            out = out * base
        return out

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other: int | Fraction) -> ScalarExpr:
        return _coerce(other) - self

    def __rtruediv__(self, other: int | Fraction) -> ScalarExpr:
        return _coerce(other) / self

    # -- calculus ----------------------------------------------------------

    def partial(self, coord: CoordSymbol | str) -> ScalarExpr:
        """Partial derivative; quotient rule on fractions."""
        name = coord.name if isinstance(coord, CoordSymbol) else coord
        dn = _poly_partial(self.num, name)
        if self.den == _P_ONE:
            return ScalarExpr(dn)
        dd = _poly_partial(self.den, name)
        return ScalarExpr(
            _poly_sub(_poly_mul(dn, self.den), _poly_mul(self.num, dd)),
            _poly_mul(self.den, self.den),
        )

    def eval_numeric(self, bindings: Mapping[Atom, float]) -> float:
        num = _poly_eval(self.num, bindings)
        den = _poly_eval(self.den, bindings)
        if den == 0.0:
            raise NumericDivisionByZero("denominator evaluates to zero")
        return num / den

    def substitute_function(self, func: str, value: ScalarExpr) -> ScalarExpr:
        """Replace a function symbol (and all its derivative atoms) by ``value``.

        Each atom ``func`` differentiated by a multi-index D becomes the
        corresponding iterated partial of ``value``, so substituting before
        the pipeline runs is consistent with the chain rule.
        """
        for atom in value.atoms():
            if isinstance(atom, FuncDeriv) and atom.func == func:
                raise ExprError(f"substitution for {func} mentions {func} itself")
        cache: dict[tuple[str, ...], ScalarExpr] = {(): value}

        def derived(derivs: tuple[str, ...]) -> ScalarExpr:
            if derivs not in cache:
                cache[derivs] = derived(derivs[:-1]).partial(derivs[-1])
            return cache[derivs]

        def subst_poly(p: PolyDict) -> ScalarExpr:
            total = ZERO
            for m, c in p.items():
                term = ScalarExpr.from_fraction(c)
                for atom, e in m:
                    if isinstance(atom, FuncDeriv) and atom.func == func:
                        term = term * derived(atom.derivs) ** e
                    else:
                        term = term * ScalarExpr.from_atom(atom) ** e
                total = total + term
            return total

        return subst_poly(self.num) / subst_poly(self.den)

    # -- comparison & rendering --------------------------------------------

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = ScalarExpr.from_fraction(other)
        if not isinstance(other, ScalarExpr):
            return NotImplemented
        if self.den == other.den:
            return self.num == other.num
        return not _poly_sub(
            _poly_mul(self.num, other.den), _poly_mul(other.num, self.den)
        )

    __hash__ = None  # mathematical equality is coarser than representation

    def render(self) -> str:
        num = _render_poly(self.num)
        if self.den == _P_ONE:
            return num
        den = _render_poly(self.den)
        if len(self.num) > 1:
            num = f"({num})"
        if len(self.den) > 1:
            den = f"({den})"
        return f"{num}/{den}"

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"ScalarExpr({self.render()})"

    def to_sexpr(self) -> str:
        """Debugging dump of the normal form as an s-expression."""
        if self.den == _P_ONE:
            return _sexpr_poly(self.num)
        return f"(/ {_sexpr_poly(self.num)} {_sexpr_poly(self.den)})"


def _coerce(v: ScalarExpr | int | Fraction) -> ScalarExpr:
    if isinstance(v, ScalarExpr):
        return v
    return ScalarExpr.from_fraction(v)


def _mono_common(m1: Monomial, m2: Monomial) -> Monomial:
    d2 = dict(m2)
    out = []
    for a, e in m1:
        e2 = d2.get(a, 0)
        if e2:
            out.append((a, min(e, e2)))
    return tuple(out)


def _render_mono(m: Monomial, c: Fraction) -> str:
    parts = []
    if not m:
        return str(c)
    if c == -1:
        parts.append("-")
    elif c != 1:
        parts.append(f"{c}*")
    body = "*".join(
        str(a) if e == 1 else f"{a}^{e}" for a, e in m
    )
    return "".join(parts) + body


def _render_poly(p: PolyDict) -> str:
    if not p:
        return "0"
    monos = sorted(p, key=_mono_sort_key, reverse=True)
    out = _render_mono(monos[0], p[monos[0]])
    for m in monos[1:]:
        c = p[m]
        if c < 0:
            out += " - " + _render_mono(m, -c)
        else:
            out += " + " + _render_mono(m, c)
    return out


def _sexpr_poly(p: PolyDict) -> str:
    if not p:
        return "0"
    terms = []
    for m in sorted(p, key=_mono_sort_key, reverse=True):
        factors = [str(p[m])]
        for a, e in m:
            factors.append(str(a) if e == 1 else f"(^ {a} {e})")
        terms.append(factors[0] if len(factors) == 1 else "(* " + " ".join(factors) + ")")
    return terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"


ZERO = ScalarExpr.from_fraction(0)
ONE = ScalarExpr.from_fraction(1)


def integer(k: int) -> ScalarExpr:
    return ScalarExpr.from_fraction(k)


def rational(p: int, q: int = 1) -> ScalarExpr:
    return ScalarExpr.from_fraction(Fraction(p, q))


def coordinate(name: str) -> ScalarExpr:
    return ScalarExpr.from_atom(CoordSymbol(name))


def function(name: str, args: Iterable[str]) -> ScalarExpr:
    return ScalarExpr.from_atom(FuncDeriv(name, tuple(args)))


def func_deriv(name: str, args: Iterable[str], derivs: Iterable[str]) -> ScalarExpr:
    return ScalarExpr.from_atom(FuncDeriv(name, tuple(args), tuple(derivs)))
