"""Line-oriented metric-definition language (``.cartan`` files).

A document declares a chart, optional opaque functions, and exactly one of
a coframe block (with a constant ``frame_metric``) or a coordinate
``metric`` block; sparse ``torsion`` entries and ``let`` substitutions are
optional.  Parsing is total: every failure becomes a spanned Diagnostic
and parsing continues, up to a cap.

    # wave metric
    chart u v x y
    function H(x, y, u)

    coframe
      theta0 = H*du + dv
      theta1 = du
      theta2 = dx
      theta3 = dy

    frame_metric
      0  1  0  0
      1  0  0  0
      0  0 -1  0
      0  0  0 -1

    let H = x^2 - y^2
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import (
    CoordSymbol,
    DivisionByZero,
    ExprError,
    FuncDeriv,
    ScalarExpr,
    ZERO,
    ONE,
)
from .exterior import Chart, ComponentArray
from .geometry import (
    Coframe,
    FrameMetric,
    Metric,
    SingularCoframe,
    SingularMetric,
    Torsion,
)

MAX_DIAGNOSTICS = 50


@dataclass(frozen=True)
class Span:
    """1-based line and column range inside the source text."""

    line: int
    col: int
    end_col: int

    def __str__(self) -> str:
        return f"line {self.line}, col {self.col}-{self.end_col}"


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    span: Span
    message: str
    note: str | None = None

    def render(self) -> str:
        out = f"{self.severity}: {self.span}: {self.message}"
        if self.note:
            out += f" ({self.note})"
        return out


@dataclass
class MetricDocument:
    """Parsed and semantically checked metric definition."""

    chart: Chart
    functions: dict[str, tuple[str, ...]]
    coframe_rows: list[list[ScalarExpr]] | None  # A^a_mu
    frame_metric: list[list[Fraction]] | None
    metric: list[list[ScalarExpr]] | None
    torsion_entries: dict[tuple[int, int, int], ScalarExpr]
    lets: dict[str, ScalarExpr]

    def has_coframe(self) -> bool:
        return self.coframe_rows is not None


@dataclass
class ParseResult:
    document: MetricDocument | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.document is not None and not any(
            d.severity == "error" for d in self.diagnostics
        )


_KEYWORDS = {"chart", "function", "coframe", "frame_metric", "metric", "torsion", "let"}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[+\-*/^(),=_]))"
)


@dataclass
class _Token:
    kind: str  # "num" | "ident" | "op" | "end"
    text: str
    col: int  # 1-based


def _tokenize(line: str, lineno: int, diags: list[Diagnostic]) -> list[_Token] | None:
    tokens: list[_Token] = []
    pos = 0
    body = line.split("#", 1)[0]
    while pos < len(body):
        if body[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(body, pos)
        if m is None or m.end() == pos:
            diags.append(
                Diagnostic(
                    "error",
                    Span(lineno, pos + 1, pos + 2),
                    f"unexpected character {body[pos]!r}",
                )
            )
            return None
        for kind in ("num", "ident", "op"):
            text = m.group(kind)
            if text is not None:
                tokens.append(_Token(kind, text, m.start(kind) + 1))
                break
        pos = m.end()
    tokens.append(_Token("end", "", len(body) + 1))
    return tokens


class _ExprParser:
    """Recursive-descent parser for scalar/1-form expressions.

    Values are pairs (scalar, vector-or-None): a plain scalar, or a 1-form
    as a coefficient vector over coordinate differentials.  Differentials
    are only legal where ``allow_differentials`` is set (coframe rows).
    """

    def __init__(
        self,
        tokens: list[_Token],
        start: int,
        lineno: int,
        chart: Chart | None,
        functions: dict[str, tuple[str, ...]],
        diags: list[Diagnostic],
        allow_differentials: bool = False,
        coords_only: bool = False,
    ):
        self.tokens = tokens
        self.pos = start
        self.lineno = lineno
        self.chart = chart
        self.functions = functions
        self.diags = diags
        self.allow_differentials = allow_differentials
        self.coords_only = coords_only
        self.failed = False

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        t = self.tokens[self.pos]
        if t.kind != "end":
            self.pos += 1
        return t

    def error(self, tok: _Token, message: str, note: str | None = None):
        if not self.failed:
            self.diags.append(
                Diagnostic(
                    "error",
                    Span(self.lineno, tok.col, tok.col + max(1, len(tok.text))),
                    message,
                    note,
                )
            )
        self.failed = True

    # value representation: (scalar, vector | None)

    def parse(self):
        val = self.parse_sum()
        if self.failed:
            return None
        tok = self.peek()
        if tok.kind != "end":
            self.error(tok, f"unexpected trailing {tok.text!r}")
            return None
        return val

    def parse_sum(self):
        left = self.parse_product()
        while not self.failed and self.peek().text in ("+", "-"):
            op = self.take().text
            right = self.parse_product()
            if self.failed:
                return left
            left = self._combine_add(left, right, op)
        return left

    def parse_product(self):
        left = self.parse_unary()
        while not self.failed and self.peek().text in ("*", "/"):
            op = self.take()
            right = self.parse_unary()
            if self.failed:
                return left
            left = self._combine_mul(left, right, op)
        return left

    def parse_unary(self):
        tok = self.peek()
        if tok.text == "-":
            self.take()
            val = self.parse_unary()
            if self.failed:
                return val
            s, v = val
            return (-s, [(-c) for c in v] if v is not None else None)
        if tok.text == "+":
            self.take()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.failed:
            return base
        if self.peek().text == "^":
            op = self.take()
            sign = 1
            if self.peek().text == "-":
                self.take()
                sign = -1
            exp_tok = self.take()
            if exp_tok.kind != "num":
                self.error(exp_tok, "exponent must be an integer")
                return base
            s, v = base
            if v is not None:
                self.error(op, "differentials cannot be raised to a power")
                return base
            try:
                return (s ** (sign * int(exp_tok.text)), None)
            except DivisionByZero:
                self.error(op, "zero raised to a negative power")
                return base
        return base

    def parse_atom(self):
        tok = self.take()
        if tok.kind == "num":
            return (ScalarExpr.from_fraction(int(tok.text)), None)
        if tok.text == "(":
            val = self.parse_sum()
            close = self.take()
            if close.text != ")":
                self.error(close, "expected ')'")
            return val
        if tok.kind == "ident":
            return self._resolve_ident(tok)
        self.error(tok, f"expected a value, found {tok.text or 'end of line'!r}")
        return (ZERO, None)

    def _resolve_ident(self, tok: _Token):
        name = tok.text
        chart = self.chart
        if chart is not None and name in chart.coords:
            return (ScalarExpr.from_atom(CoordSymbol(name)), None)
        if (
            chart is not None
            and name.startswith("d")
            and name[1:] in chart.coords
        ):
            if not self.allow_differentials:
                self.error(tok, f"differential {name!r} is only allowed in coframe rows")
                return (ZERO, None)
            vec = [ZERO] * chart.dim
            vec[chart.index(name[1:])] = ONE
            return (ONE, vec)
        if name in self.functions:
            if self.coords_only:
                self.error(
                    tok,
                    f"function {name!r} not allowed here",
                    "substitution bodies may use chart coordinates only",
                )
                return (ZERO, None)
            if self.peek().text == "(":
                self.take()
                args = []
                while True:
                    a = self.take()
                    if a.kind != "ident":
                        self.error(a, "expected a coordinate name in the argument list")
                        return (ZERO, None)
                    args.append(a)
                    sep = self.take()
                    if sep.text == ")":
                        break
                    if sep.text != ",":
                        self.error(sep, "expected ',' or ')'")
                        return (ZERO, None)
                declared = self.functions[name]
                for a in args:
                    if a.text not in declared:
                        self.error(
                            a,
                            f"{name} applied to undeclared argument {a.text!r}",
                            f"declared arguments: {', '.join(declared)}",
                        )
                        return (ZERO, None)
            return (
                ScalarExpr.from_atom(FuncDeriv(name, self.functions[name])),
                None,
            )
        self.error(tok, f"unknown coordinate or function {name!r}")
        return (ZERO, None)

    def _combine_add(self, left, right, op: str):
        ls, lv = left
        rs, rv = right
        if (lv is None) != (rv is None):
            self.error(self.peek(), "cannot add a scalar and a differential")
            return left
        if lv is None:
            return (ls + rs if op == "+" else ls - rs, None)
        if op == "+":
            return (ONE, [a + b for a, b in zip(lv, rv)])
        return (ONE, [a - b for a, b in zip(lv, rv)])

    def _combine_mul(self, left, right, op: _Token):
        ls, lv = left
        rs, rv = right
        if op.text == "/":
            if rv is not None:
                self.error(op, "cannot divide by a differential")
                return left
            if rs.is_zero():
                self.error(op, "division by zero")
                return left
            if lv is None:
                return (ls / rs, None)
            return (ONE, [c / rs for c in lv])
        if lv is not None and rv is not None:
            self.error(op, "cannot multiply two differentials", "the grammar is linear in d<coord>")
            return left
        if lv is not None:
            return (ONE, [c * rs for c in lv])
        if rv is not None:
            return (ONE, [c * ls for c in rv])
        return (ls * rs, None)


def _scalar_value(val) -> ScalarExpr | None:
    if val is None:
        return None
    s, v = val
    return None if v is not None else s


class _Parser:
    def __init__(self, source: str):
        self.lines = source.splitlines()
        self.diags: list[Diagnostic] = []
        self.chart: Chart | None = None
        self.chart_span: Span | None = None
        self.functions: dict[str, tuple[str, ...]] = {}
        self.coframe_rows: list[list[ScalarExpr]] | None = None
        self.coframe_span: Span | None = None
        self.frame_metric: list[list[Fraction]] | None = None
        self.metric: list[list[ScalarExpr]] | None = None
        self.torsion: dict[tuple[int, int, int], ScalarExpr] = {}
        self.lets: dict[str, ScalarExpr] = {}
        self.saw_metric_block = False
        self.idx = 0

    def diag(self, severity: str, span: Span, message: str, note: str | None = None):
        if len(self.diags) < MAX_DIAGNOSTICS:
            self.diags.append(Diagnostic(severity, span, message, note))

    def error(self, span: Span, message: str, note: str | None = None):
        self.diag("error", span, message, note)

    # -- driver --------------------------------------------------------

    def parse(self) -> ParseResult:
        while self.idx < len(self.lines):
            lineno = self.idx + 1
            raw = self.lines[self.idx]
            self.idx += 1
            tokens = _tokenize(raw, lineno, self.diags)
            if tokens is None or tokens[0].kind == "end":
                continue
            head = tokens[0]
            if head.kind != "ident" or head.text not in _KEYWORDS:
                self.error(
                    Span(lineno, head.col, head.col + max(1, len(head.text))),
                    f"expected a keyword, found {head.text!r}",
                    "keywords: " + ", ".join(sorted(_KEYWORDS)),
                )
                continue
            getattr(self, f"_stmt_{head.text}")(tokens, lineno)
        doc = self._finish()
        return ParseResult(doc, self.diags)

    def _finish(self) -> MetricDocument | None:
        if self.chart is None:
            self.error(Span(1, 1, 2), "missing chart declaration")
            return None
        have_frame = self.coframe_rows is not None or self.frame_metric is not None
        have_coord = self.metric is not None
        if have_frame and have_coord:
            self.error(
                Span(1, 1, 2),
                "document mixes a coframe block with a coordinate metric",
                "declare exactly one of {coframe + frame_metric, metric}",
            )
            return None
        if self.coframe_rows is not None and self.frame_metric is None:
            self.error(Span(1, 1, 2), "coframe block without a frame_metric block")
            return None
        if self.frame_metric is not None and self.coframe_rows is None:
            self.error(Span(1, 1, 2), "frame_metric block without a coframe block")
            return None
        if not have_frame and not have_coord and not self.saw_metric_block:
            self.error(Span(1, 1, 2), "document defines no metric")
            return None
        if self.coframe_rows is not None:
            try:
                Coframe(self.chart, self.coframe_rows)
            except SingularCoframe:
                self.error(
                    self.coframe_span or Span(1, 1, 2),
                    "coframe 1-forms are not independent",
                    "the coframe matrix must be invertible",
                )
                return None
        if self.torsion and have_frame:
            self.error(
                self.coframe_span or Span(1, 1, 2),
                "torsion entries require a coordinate metric document",
                "the rigid-coframe route is torsion-free; declare a 'metric' block instead",
            )
            return None
        if any(d.severity == "error" for d in self.diags):
            return None
        return MetricDocument(
            chart=self.chart,
            functions=dict(self.functions),
            coframe_rows=self.coframe_rows,
            frame_metric=self.frame_metric,
            metric=self.metric,
            torsion_entries=dict(self.torsion),
            lets=dict(self.lets),
        )

    # -- statements ------------------------------------------------------

    def _stmt_chart(self, tokens: list[_Token], lineno: int):
        names = []
        for t in tokens[1:]:
            if t.kind == "end":
                break
            if t.kind != "ident":
                self.error(Span(lineno, t.col, t.col + 1), "chart expects coordinate names")
                return
            names.append(t)
        if not names:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 5), "chart needs at least one coordinate")
            return
        seen = set()
        for t in names:
            if t.text in seen:
                self.error(
                    Span(lineno, t.col, t.col + len(t.text)),
                    f"duplicate coordinate {t.text!r}",
                )
                return
            seen.add(t.text)
        if self.chart is not None:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 5), "chart declared twice")
            return
        self.chart = Chart(tuple(t.text for t in names))
        self.chart_span = Span(lineno, tokens[0].col, names[-1].col + len(names[-1].text))

    def _stmt_function(self, tokens: list[_Token], lineno: int):
        # function H(x, y, u)
        if len(tokens) < 3 or tokens[1].kind != "ident":
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 8), "function expects a name")
            return
        name = tokens[1]
        if self.chart is None:
            self.error(Span(lineno, name.col, name.col + len(name.text)), "function declared before chart")
            return
        if name.text in self.functions or name.text in self.chart.coords:
            self.error(
                Span(lineno, name.col, name.col + len(name.text)),
                f"name {name.text!r} already in use",
            )
            return
        if name.text.startswith("d") and name.text[1:] in self.chart.coords:
            self.error(
                Span(lineno, name.col, name.col + len(name.text)),
                f"name {name.text!r} shadows the differential of {name.text[1:]!r}",
            )
            return
        args: list[_Token] = []
        pos = 2
        if pos >= len(tokens) or tokens[pos].text != "(":
            self.error(Span(lineno, name.col, name.col + len(name.text)), "expected '(' after the function name")
            return
        pos += 1
        expecting = "ident"
        while pos < len(tokens) and tokens[pos].kind != "end":
            t = tokens[pos]
            if expecting == "ident":
                if t.kind != "ident":
                    self.error(Span(lineno, t.col, t.col + 1), "expected a coordinate name")
                    return
                args.append(t)
                expecting = "sep"
            else:
                if t.text == ")":
                    pos += 1
                    break
                if t.text != ",":
                    self.error(Span(lineno, t.col, t.col + 1), "expected ',' or ')'")
                    return
                expecting = "ident"
            pos += 1
        else:
            self.error(Span(lineno, tokens[-2].col, tokens[-2].col + 1), "unterminated argument list")
            return
        for a in args:
            if a.text not in self.chart.coords:
                self.error(
                    Span(lineno, a.col, a.col + len(a.text)),
                    f"unknown coordinate {a.text!r} in argument list",
                    "function arguments must be chart coordinates",
                )
                return
        self.functions[name.text] = tuple(a.text for a in args)

    def _block_lines(self, lineno: int, want: int) -> list[tuple[int, list[_Token]]]:
        """Consume up to ``want`` non-empty lines that do not open a new statement."""
        rows: list[tuple[int, list[_Token]]] = []
        while self.idx < len(self.lines) and len(rows) < want:
            peek_no = self.idx + 1
            tokens = _tokenize(self.lines[self.idx], peek_no, self.diags)
            if tokens is None:
                self.idx += 1
                continue
            if tokens[0].kind == "end":
                self.idx += 1
                continue
            if tokens[0].kind == "ident" and tokens[0].text in _KEYWORDS:
                break
            self.idx += 1
            rows.append((peek_no, tokens))
        return rows

    def _stmt_coframe(self, tokens: list[_Token], lineno: int):
        self.saw_metric_block = True
        if self.chart is None:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 7), "coframe before chart")
            return
        n = self.chart.dim
        rows = self._block_lines(lineno, n)
        if len(rows) != n:
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 7),
                f"coframe block needs {n} rows, found {len(rows)}",
            )
            return
        matrix: list[list[ScalarExpr] | None] = [None] * n
        for row_no, row_tokens in rows:
            head = row_tokens[0]
            m = re.fullmatch(r"theta(\d+)", head.text) if head.kind == "ident" else None
            if m is None:
                self.error(
                    Span(row_no, head.col, head.col + max(1, len(head.text))),
                    "coframe rows look like 'theta<i> = <expr>'",
                )
                continue
            i = int(m.group(1))
            if i >= n:
                self.error(
                    Span(row_no, head.col, head.col + len(head.text)),
                    f"coframe index {i} outside 0..{n - 1}",
                    "dimension mismatch",
                )
                continue
            if len(row_tokens) < 2 or row_tokens[1].text != "=":
                self.error(Span(row_no, head.col, head.col + len(head.text)), "expected '=' after theta<i>")
                continue
            p = _ExprParser(
                row_tokens, 2, row_no, self.chart, self.functions, self.diags,
                allow_differentials=True,
            )
            val = p.parse()
            if val is None:
                continue
            s, v = val
            if v is None:
                self.error(
                    Span(row_no, head.col, head.col + len(head.text)),
                    "coframe row has no differential part",
                )
                continue
            if matrix[i] is not None:
                self.error(
                    Span(row_no, head.col, head.col + len(head.text)),
                    f"theta{i} defined twice",
                )
                continue
            matrix[i] = v
        if any(r is None for r in matrix):
            missing = [str(i) for i, r in enumerate(matrix) if r is None]
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 7),
                "incomplete coframe block, missing theta " + ", ".join(missing),
            )
            return
        self.coframe_rows = matrix  # type: ignore[assignment]
        self.coframe_span = Span(lineno, tokens[0].col, tokens[0].col + 7)

    def _stmt_frame_metric(self, tokens: list[_Token], lineno: int):
        self.saw_metric_block = True
        if self.chart is None:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 12), "frame_metric before chart")
            return
        n = self.chart.dim
        rows = self._block_lines(lineno, n)
        if len(rows) != n:
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 12),
                f"frame_metric needs {n} rows, found {len(rows)}",
                "dimension mismatch",
            )
            return
        matrix: list[list[Fraction]] = []
        for row_no, row_tokens in rows:
            entries: list[Fraction] = []
            pos = 0
            toks = [t for t in row_tokens if t.kind != "end" and t.text != ","]
            while pos < len(toks):
                sign = 1
                while toks[pos].text in ("-", "+"):
                    if toks[pos].text == "-":
                        sign = -sign
                    pos += 1
                    if pos >= len(toks):
                        break
                if pos >= len(toks) or toks[pos].kind != "num":
                    t = toks[min(pos, len(toks) - 1)]
                    self.error(
                        Span(row_no, t.col, t.col + max(1, len(t.text))),
                        "frame_metric entries must be rational numbers",
                    )
                    entries = []
                    break
                value = Fraction(int(toks[pos].text))
                pos += 1
                if pos < len(toks) and toks[pos].text == "/":
                    pos += 1
                    if pos >= len(toks) or toks[pos].kind != "num":
                        t = toks[min(pos, len(toks) - 1)]
                        self.error(Span(row_no, t.col, t.col + 1), "expected a denominator")
                        entries = []
                        break
                    value /= int(toks[pos].text)
                    pos += 1
                entries.append(sign * value)
            if entries and len(entries) != n:
                first = row_tokens[0]
                self.error(
                    Span(row_no, first.col, first.col + max(1, len(first.text))),
                    f"row has {len(entries)} entries, expected {n}",
                    "dimension mismatch",
                )
                return
            if not entries:
                return
            matrix.append(entries)
        self.frame_metric = matrix

    def _stmt_metric(self, tokens: list[_Token], lineno: int):
        self.saw_metric_block = True
        if self.chart is None:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 6), "metric before chart")
            return
        n = self.chart.dim
        rows = self._block_lines(lineno, n)
        if len(rows) != n:
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 6),
                f"metric needs {n} rows, found {len(rows)}",
                "dimension mismatch",
            )
            return
        matrix: list[list[ScalarExpr]] = []
        failed = False
        for row_no, row_tokens in rows:
            # split on commas at depth 0
            groups: list[list[_Token]] = [[]]
            depth = 0
            for t in row_tokens:
                if t.kind == "end":
                    break
                if t.text == "(":
                    depth += 1
                elif t.text == ")":
                    depth -= 1
                elif t.text == "," and depth == 0:
                    groups.append([])
                    continue
                groups[-1].append(t)
            if len(groups) != n:
                first = row_tokens[0]
                self.error(
                    Span(row_no, first.col, first.col + max(1, len(first.text))),
                    f"row has {len(groups)} entries, expected {n}",
                    "dimension mismatch; separate metric entries with commas",
                )
                failed = True
                continue
            entries = []
            for group in groups:
                if not group:
                    self.error(Span(row_no, 1, 2), "empty metric entry")
                    failed = True
                    continue
                group = group + [_Token("end", "", group[-1].col + len(group[-1].text))]
                p = _ExprParser(group, 0, row_no, self.chart, self.functions, self.diags)
                val = p.parse()
                if val is None:
                    failed = True
                    continue
                s = _scalar_value(val)
                if s is None:
                    self.error(Span(row_no, group[0].col, group[0].col + 1), "metric entries are scalars")
                    failed = True
                    continue
                entries.append(s)
            matrix.append(entries)
        if failed:
            return
        for i in range(n):
            for j in range(i + 1, n):
                if not matrix[i][j] == matrix[j][i]:
                    self.error(
                        Span(lineno, tokens[0].col, tokens[0].col + 6),
                        f"metric not symmetric at ({i},{j})",
                    )
                    return
        self.metric = matrix

    def _stmt_torsion(self, tokens: list[_Token], lineno: int):
        # torsion T^a_b_c = <expr>
        if self.chart is None:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 7), "torsion before chart")
            return
        n = self.chart.dim
        body = tokens[1:]
        # expect: ident "T" op "^" num a op "_"? -- the tokenizer has no "_",
        # so accept the compact spelling T^a_b_c as an identifier-free shape:
        # T ^ a ... but '_' is not a token; instead indices come as T^a_b_c in
        # one identifier-ish clump.  Simplest robust shape: T ^ <a> <b> <c>.
        raw = self.lines[lineno - 1].split("#", 1)[0]
        m = re.search(r"torsion\s+T\^(\d+)_(\d+)_(\d+)\s*=\s*(.+)$", raw)
        if m is None:
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 7),
                "torsion lines look like 'torsion T^a_b_c = <expr>'",
            )
            return
        a, b, c = (int(m.group(k)) for k in (1, 2, 3))
        for label, v in (("a", a), ("b", b), ("c", c)):
            if v >= n:
                self.error(
                    Span(lineno, tokens[0].col, tokens[0].col + 7),
                    f"torsion index {label}={v} outside 0..{n - 1}",
                )
                return
        if b == c:
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 7),
                "torsion is antisymmetric: T^a_b_b vanishes identically",
            )
            return
        expr_src = m.group(4)
        offset = m.start(4)
        toks = _tokenize(expr_src, lineno, self.diags)
        if toks is None:
            return
        for t in toks:
            t.col += offset
        p = _ExprParser(toks, 0, lineno, self.chart, self.functions, self.diags)
        val = p.parse()
        if val is None:
            return
        s = _scalar_value(val)
        if s is None:
            self.error(Span(lineno, offset + 1, offset + 2), "torsion entries are scalars")
            return
        key, skey = (a, b, c), (a, c, b)
        if key in self.torsion or skey in self.torsion:
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 7),
                f"torsion entry T^{a}_{b}_{c} already fixed",
                "the antisymmetric partner is filled in automatically",
            )
            return
        self.torsion[key] = s
        self.torsion[skey] = -s

    def _stmt_let(self, tokens: list[_Token], lineno: int):
        if self.chart is None:
            self.error(Span(lineno, tokens[0].col, tokens[0].col + 3), "let before chart")
            return
        if len(tokens) < 3 or tokens[1].kind != "ident" or tokens[2].text != "=":
            self.error(
                Span(lineno, tokens[0].col, tokens[0].col + 3),
                "let lines look like 'let H = <expr>'",
            )
            return
        name = tokens[1]
        if name.text not in self.functions:
            self.error(
                Span(lineno, name.col, name.col + len(name.text)),
                f"let target {name.text!r} is not a declared function",
            )
            return
        p = _ExprParser(
            tokens, 3, lineno, self.chart, self.functions, self.diags,
            coords_only=True,
        )
        val = p.parse()
        if val is None:
            return
        s = _scalar_value(val)
        if s is None:
            self.error(Span(lineno, name.col, name.col + len(name.text)), "substitutions are scalar expressions")
            return
        extra = {
            a.name
            for a in s.atoms()
            if isinstance(a, CoordSymbol) and a.name not in self.functions.get(name.text, ())
        }
        if extra:
            self.error(
                Span(lineno, name.col, name.col + len(name.text)),
                f"substitution uses {sorted(extra)[0]!r}, not an argument of {name.text}",
                f"declared arguments: {', '.join(self.functions[name.text])}",
            )
            return
        if name.text in self.lets:
            self.error(
                Span(lineno, name.col, name.col + len(name.text)),
                f"{name.text} substituted twice",
            )
            return
        self.lets[name.text] = s


def parse(source: str) -> ParseResult:
    """Parse a metric document; never raises on malformed input."""
    try:
        return _Parser(source).parse()
    except RecursionError:
        return ParseResult(
            None,
            [Diagnostic("error", Span(1, 1, 2), "expression nesting too deep")],
        )


def parse_let(statement: str, document: MetricDocument) -> tuple[str, ScalarExpr] | Diagnostic:
    """Parse a command-line 'NAME = expr' substitution against a document."""
    m = re.match(r"\s*([A-Za-z][A-Za-z0-9]*)\s*=\s*(.+)$", statement)
    if m is None:
        return Diagnostic("error", Span(1, 1, 2), "substitutions look like 'H = x^2 - y^2'")
    name, body = m.group(1), m.group(2)
    if name not in document.functions:
        return Diagnostic("error", Span(1, 1, 2), f"{name!r} is not a declared function")
    diags: list[Diagnostic] = []
    toks = _tokenize(body, 1, diags)
    if toks is None:
        return diags[0]
    p = _ExprParser(toks, 0, 1, document.chart, document.functions, diags, coords_only=True)
    val = p.parse()
    if val is None:
        return diags[0]
    s = _scalar_value(val)
    if s is None:
        return Diagnostic("error", Span(1, 1, 2), "substitutions are scalar expressions")
    return name, s


def render(document: MetricDocument) -> str:
    """Deterministic re-rendering; the output reparses to an equal document."""
    lines = ["chart " + " ".join(document.chart.coords)]
    for name, args in sorted(document.functions.items()):
        lines.append(f"function {name}({', '.join(args)})")
    if document.coframe_rows is not None:
        lines.append("")
        lines.append("coframe")
        for i, row in enumerate(document.coframe_rows):
            parts = []
            for mu, coeff in enumerate(row):
                if coeff.is_zero():
                    continue
                d = "d" + document.chart.coords[mu]
                txt = coeff.render()
                if txt == "1":
                    parts.append(d)
                elif txt == "-1":
                    parts.append(f"-{d}")
                elif " " in txt:
                    parts.append(f"({txt})*{d}")
                else:
                    parts.append(f"{txt}*{d}")
            body = " + ".join(parts).replace("+ -", "- ") if parts else "0"
            lines.append(f"  theta{i} = {body}")
        lines.append("")
        lines.append("frame_metric")
        for row in document.frame_metric:
            lines.append("  " + "  ".join(str(v) for v in row))
    if document.metric is not None:
        lines.append("")
        lines.append("metric")
        for row in document.metric:
            lines.append("  " + ", ".join(e.render() for e in row))
    for (a, b, c), v in sorted(document.torsion_entries.items()):
        if b < c:
            lines.append(f"torsion T^{a}_{b}_{c} = {v.render()}")
    for name, v in sorted(document.lets.items()):
        lines.append(f"let {name} = {v.render()}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Document -> geometry
# ---------------------------------------------------------------------------

@dataclass
class BuiltGeometry:
    chart: Chart
    coframe: Coframe | None
    frame_metric: FrameMetric | None
    coordinate_metric: Metric | None
    torsion: Torsion | None


def build_geometry(
    document: MetricDocument,
    extra_lets: dict[str, ScalarExpr] | None = None,
) -> BuiltGeometry | Diagnostic:
    """Apply substitutions and construct the geometric objects.

    Substitutions (document ``let`` lines plus any command-line ones) are
    applied to every scalar before differentiation, then the coframe or
    metric is built; construction failures come back as Diagnostics.
    """
    lets = dict(document.lets)
    lets.update(extra_lets or {})

    def subst(e: ScalarExpr) -> ScalarExpr:
        for name, value in lets.items():
            e = e.substitute_function(name, value)
        return e

    chart = document.chart
    n = chart.dim
    try:
        if document.has_coframe():
            rows = [[subst(e) for e in row] for row in document.coframe_rows]
            coframe = Coframe(chart, rows)
            fm = FrameMetric(
                [[ScalarExpr.from_fraction(v) for v in row] for row in document.frame_metric],
                coframe,
            )
            torsion = _document_torsion(document, subst, n)
            return BuiltGeometry(chart, coframe, fm, None, torsion)
        matrix = [[subst(e) for e in row] for row in document.metric]
        metric = Metric(matrix, chart.coordinate_basis())
        torsion = _document_torsion(document, subst, n)
        return BuiltGeometry(chart, None, None, metric, torsion)
    except SingularCoframe:
        return Diagnostic("error", Span(1, 1, 2), "coframe 1-forms are not independent")
    except SingularMetric:
        return Diagnostic("error", Span(1, 1, 2), "metric is degenerate (det = 0)")
    except ExprError as exc:
        return Diagnostic("error", Span(1, 1, 2), str(exc))


def _document_torsion(document, subst, n: int) -> Torsion | None:
    if not document.torsion_entries:
        return None
    entries = {
        idx: subst(v) for idx, v in document.torsion_entries.items()
    }
    return Torsion(ComponentArray(n, 3, entries))
