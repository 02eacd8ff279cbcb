"""Truncated power series in three variables with exact rational coefficients.

A :class:`Jet` stores the coefficients of a polynomial in ``x1, x2, x3`` up
to a fixed total degree.  In ``exact`` mode every coefficient is a rational
number and all arithmetic is exact; ``float`` mode uses ordinary floats and
exists for interoperation with grid code.  :class:`MapJet` and
:class:`JetMatrix` are thin aggregates used for vector-valued maps and for
metric/inverse-metric algebra.
"""

from __future__ import annotations

import math
from fractions import Fraction

try:  # gmpy2.mpq is a drop-in rational, roughly 5x faster than Fraction
    from gmpy2 import mpq as _mpq

    def _rational(num, den=1):
        return _mpq(num, den)

except ImportError:  # pragma: no cover - gmpy2 is normally available
    def _rational(num, den=1):
        return Fraction(num, den)

NVARS = 3


class JetError(ValueError):
    """Raised on mode/degree mismatches and invalid series operations."""


def _check_compatible(a, b):
    if a.degree != b.degree:
        raise JetError(f"degree mismatch: {a.degree} != {b.degree}")
    if a.mode != b.mode:
        raise JetError(f"mode mismatch: {a.mode} != {b.mode}")


def _coerce(value, mode):
    if mode == "exact":
        if isinstance(value, float):
            raise JetError("float coefficient in exact mode")
        return _rational(value) if isinstance(value, int) else value
    return float(value)


class Jet:
    """Polynomial in three variables truncated at total degree ``degree``."""

    __slots__ = ("degree", "mode", "terms")

    def __init__(self, degree, mode="exact", terms=None):
        if degree < 0:
            raise JetError("degree must be nonnegative")
        if mode not in ("exact", "float"):
            raise JetError(f"unknown mode {mode!r}")
        self.degree = degree
        self.mode = mode
        self.terms = {}
        if terms:
            for exp, val in terms.items():
                self._set(exp, _coerce(val, mode))

    def _set(self, exp, val):
        a, b, c = exp
        if a < 0 or b < 0 or c < 0:
            raise JetError("negative exponent")
        if a + b + c > self.degree:
            raise JetError("term exceeds truncation degree")
        if val:
            self.terms[exp] = val
        else:
            self.terms.pop(exp, None)

    # ------------------------------------------------------------ constructors
    @classmethod
    def zero(cls, degree, mode="exact"):
        return cls(degree, mode)

    @classmethod
    def constant(cls, value, degree, mode="exact"):
        return cls(degree, mode, {(0, 0, 0): value})

    @classmethod
    def variable(cls, axis, degree, mode="exact"):
        exp = tuple(1 if i == axis else 0 for i in range(NVARS))
        return cls(degree, mode, {exp: 1})

    @classmethod
    def monomial(cls, exp, value, degree, mode="exact"):
        return cls(degree, mode, {tuple(exp): value})

    # ---------------------------------------------------------------- helpers
    def copy(self):
        out = Jet(self.degree, self.mode)
        out.terms = dict(self.terms)
        return out

    def coefficient(self, exp):
        exp = tuple(exp)
        if self.mode == "exact":
            return self.terms.get(exp, _rational(0))
        return self.terms.get(exp, 0.0)

    def is_zero(self):
        return not self.terms

    def truncate(self, degree):
        """Drop terms of total degree above ``degree`` (must not exceed K)."""
        if degree > self.degree:
            raise JetError("cannot truncate upward; use extend()")
        out = Jet(degree, self.mode)
        for exp, val in self.terms.items():
            if sum(exp) <= degree:
                out.terms[exp] = val
        return out

    def extend(self, degree):
        """Reinterpret as a jet of higher truncation degree.

        Only valid when the extra coefficients are genuinely zero, e.g. for
        polynomials built exactly rather than truncated from unknown series.
        """
        if degree < self.degree:
            raise JetError("extend() cannot lower the degree")
        out = Jet(degree, self.mode)
        out.terms = dict(self.terms)
        return out

    def to_float(self):
        out = Jet(self.degree, "float")
        for exp, val in self.terms.items():
            out.terms[exp] = float(val)
        return out

    # ------------------------------------------------------------- arithmetic
    def __neg__(self):
        out = Jet(self.degree, self.mode)
        out.terms = {e: -v for e, v in self.terms.items()}
        return out

    def __add__(self, other):
        if not isinstance(other, Jet):
            other = Jet.constant(other, self.degree, self.mode)
        _check_compatible(self, other)
        out = self.copy()
        for exp, val in other.terms.items():
            new = out.terms.get(exp, 0) + val
            if new:
                out.terms[exp] = new
            else:
                out.terms.pop(exp, None)
        return out

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -_coerce(other, self.mode))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor):
        factor = _coerce(factor, self.mode)
        out = Jet(self.degree, self.mode)
        if factor:
            out.terms = {e: v * factor for e, v in self.terms.items()}
        return out

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.scale(other)
        _check_compatible(self, other)
        K = self.degree
        out = Jet(K, self.mode)
        acc = out.terms
        items = sorted(other.terms.items(), key=lambda t: sum(t[0]))
        for (a1, b1, c1), v1 in self.terms.items():
            d1 = a1 + b1 + c1
            for (a2, b2, c2), v2 in items:
                if d1 + a2 + b2 + c2 > K:
                    break
                exp = (a1 + a2, b1 + b2, c1 + c2)
                prev = acc.get(exp)
                acc[exp] = v1 * v2 if prev is None else prev + v1 * v2
        for exp in [e for e, v in acc.items() if not v]:
            del acc[exp]
        return out

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, n):
        if n < 0 or n != int(n):
            raise JetError("only nonnegative integer powers")
        out = Jet.constant(1, self.degree, self.mode)
        base = self
        n = int(n)
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        return (
            self.degree == other.degree
            and self.mode == other.mode
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.degree, self.mode, frozenset(self.terms.items())))

    def __repr__(self):
        parts = []
        for exp in sorted(self.terms, key=lambda e: (sum(e), e)):
            parts.append(f"{self.terms[exp]}*x^{exp}")
        body = " + ".join(parts) if parts else "0"
        return f"Jet<{self.degree},{self.mode}>({body})"

    # ---------------------------------------------------------------- calculus
    def partial(self, axis):
        """Formal partial derivative; the result has degree K-1."""
        out = Jet(max(self.degree - 1, 0), self.mode)
        for exp, val in self.terms.items():
            e = exp[axis]
            if e:
                new = list(exp)
                new[axis] = e - 1
                out.terms[tuple(new)] = val * e
        return out

    def integrate(self, axis):
        """Antiderivative along ``axis`` vanishing on {x_axis = 0}; degree K+1."""
        out = Jet(self.degree + 1, self.mode)
        for exp, val in self.terms.items():
            new = list(exp)
            new[axis] = exp[axis] + 1
            if self.mode == "exact":
                out.terms[tuple(new)] = val * _rational(1, new[axis])
            else:
                out.terms[tuple(new)] = val / new[axis]
        return out

    def restrict_zero(self, axis=0):
        """Set ``x_axis = 0``: keep only terms with zero exponent on that axis."""
        out = Jet(self.degree, self.mode)
        for exp, val in self.terms.items():
            if exp[axis] == 0:
                out.terms[exp] = val
        return out

    def axis_slice(self, k, axis=0):
        """Coefficient of ``x_axis**k`` as a jet in the remaining variables."""
        out = Jet(self.degree, self.mode)
        for exp, val in self.terms.items():
            if exp[axis] == k:
                new = list(exp)
                new[axis] = 0
                out.terms[tuple(new)] = val
        return out

    def shift_axis(self, k, axis=0):
        """Multiply by ``x_axis**k`` (degree bound must accommodate it)."""
        out = Jet(self.degree, self.mode)
        for exp, val in self.terms.items():
            new = list(exp)
            new[axis] = exp[axis] + k
            out._set(tuple(new), val)
        return out

    # -------------------------------------------------------------- inversion
    def reciprocal(self):
        """Multiplicative inverse; requires an invertible constant term."""
        c = self.coefficient((0, 0, 0))
        if not c:
            raise JetError("reciprocal requires nonzero constant term")
        if self.mode == "exact":
            cinv = _rational(1) / c
        else:
            cinv = 1.0 / c
        # Newton iteration y <- y(2 - a y), doubling the correct degree.
        y = Jet.constant(cinv, self.degree, self.mode)
        two = Jet.constant(2, self.degree, self.mode)
        correct = 1
        while correct <= self.degree:
            y = y * (two - self * y)
            correct *= 2
        return y

    def sqrt(self):
        """Formal square root via Newton iteration.

        Exact mode requires the constant term to be a positive rational with
        rational square root.
        """
        c = self.coefficient((0, 0, 0))
        if self.mode == "exact":
            if c <= 0:
                raise JetError("sqrt requires positive constant term")
            num, den = int(c.numerator), int(c.denominator)
            rn, rd = math.isqrt(num), math.isqrt(den)
            if rn * rn != num or rd * rd != den:
                raise JetError("constant term has no rational square root")
            root0 = _rational(rn, rd)
            half = _rational(1, 2)
        else:
            if c <= 0:
                raise JetError("sqrt requires positive constant term")
            root0 = math.sqrt(c)
            half = 0.5
        y = Jet.constant(root0, self.degree, self.mode)
        correct = 1
        while correct <= self.degree:
            y = (y + self * y.reciprocal()).scale(half)
            correct *= 2
        return y

    # -------------------------------------------------------------- evaluation
    @staticmethod
    def _horner(groups, var):
        total = None
        prev = None
        for key in sorted(groups, reverse=True):
            val = groups[key]
            if total is None:
                total = val
            else:
                total = total * var ** (prev - key) + val
            prev = key
        if total is None:
            return 0
        return total * var**prev if prev else total

    def eval(self, point):
        """Evaluate at a point, Horner-style in x1/x2/x3 nested."""
        x1, x2, x3 = point
        by_a = {}
        for (a, b, c), val in self.terms.items():
            by_a.setdefault(a, {}).setdefault(b, {})[c] = val
        outer = {}
        for a, bs in by_a.items():
            outer[a] = self._horner(
                {b: self._horner(cs, x3) for b, cs in bs.items()}, x2
            )
        return self._horner(outer, x1)

    def eval_naive(self, point):
        """Direct term-by-term summation (oracle for eval)."""
        x1, x2, x3 = point
        total = 0
        for (a, b, c), val in self.terms.items():
            total += val * x1**a * x2**b * x3**c
        return total

    def eval_batch(self, points):
        """Vectorized float evaluation at an (..., 3) array of points."""
        import numpy as np

        pts = np.asarray(points, dtype=float)
        if not self.terms:
            return np.zeros(pts.shape[:-1])
        exps = np.array(list(self.terms.keys()))
        coeffs = np.array([float(v) for v in self.terms.values()])
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 3)
        pows = []
        for a in range(3):
            kmax = int(exps[:, a].max())
            table = np.empty((kmax + 1, flat.shape[0]))
            table[0] = 1.0
            for e in range(1, kmax + 1):
                table[e] = table[e - 1] * flat[:, a]
            pows.append(table)
        prods = pows[0][exps[:, 0]] * pows[1][exps[:, 1]] * pows[2][exps[:, 2]]
        return (coeffs @ prods).reshape(shape)

    # ------------------------------------------------------------ serialization
    def to_json(self):
        terms = []
        for exp in sorted(self.terms, key=lambda e: (sum(e), e)):
            val = self.terms[exp]
            if self.mode == "exact":
                num, den = str(val.numerator), str(val.denominator)
            else:
                num, den = repr(float(val)), "1"
            terms.append({"exp": list(exp), "num": num, "den": den})
        return {"degree": self.degree, "mode": self.mode, "terms": terms}

    @classmethod
    def from_json(cls, data):
        out = cls(data["degree"], data["mode"])
        for term in data["terms"]:
            exp = tuple(term["exp"])
            if data["mode"] == "exact":
                out._set(exp, _rational(int(term["num"]), int(term["den"])))
            else:
                out._set(exp, float(term["num"]) / float(term["den"]))
        return out


def rational(num, den=1):
    """Exact rational constant usable as a Jet coefficient."""
    return _rational(num, den)


def parse_rational(text):
    """Parse 'p/q' or 'p' into an exact rational."""
    s = str(text).strip()
    if "/" in s:
        p, q = s.split("/", 1)
        return _rational(int(p), int(q))
    return _rational(int(s))


class MapJet:
    """A vector-valued map whose components are jets of a common degree/mode."""

    __slots__ = ("components",)

    def __init__(self, components):
        components = list(components)
        if not components:
            raise JetError("MapJet needs at least one component")
        deg, mode = components[0].degree, components[0].mode
        for c in components[1:]:
            if c.degree != deg or c.mode != mode:
                raise JetError("MapJet components must share degree and mode")
        self.components = components

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    @property
    def degree(self):
        return self.components[0].degree

    @property
    def mode(self):
        return self.components[0].mode

    def gradient(self):
        """m x n JetMatrix of partials, entry (alpha, i) = d_i u^alpha."""
        rows = [[c.partial(i) for i in range(NVARS)] for c in self.components]
        return JetMatrix(rows)

    def truncate(self, degree):
        return MapJet([c.truncate(degree) for c in self.components])

    def to_float(self):
        return MapJet([c.to_float() for c in self.components])

    def eval(self, point):
        return [c.eval(point) for c in self.components]

    def eval_batch(self, points):
        import numpy as np

        return np.stack([c.eval_batch(points) for c in self.components], axis=-1)

    def to_json(self):
        return {"components": [c.to_json() for c in self.components]}

    @classmethod
    def from_json(cls, data):
        return cls([Jet.from_json(c) for c in data["components"]])


class JetMatrix:
    """Rectangular grid of jets sharing degree and mode."""

    __slots__ = ("rows",)

    def __init__(self, rows):
        rows = [list(r) for r in rows]
        if not rows or not rows[0]:
            raise JetError("JetMatrix must be nonempty")
        width = len(rows[0])
        deg, mode = rows[0][0].degree, rows[0][0].mode
        for r in rows:
            if len(r) != width:
                raise JetError("ragged JetMatrix")
            for entry in r:
                if entry.degree != deg or entry.mode != mode:
                    raise JetError("JetMatrix entries must share degree and mode")
        self.rows = rows

    @property
    def shape(self):
        return (len(self.rows), len(self.rows[0]))

    @property
    def degree(self):
        return self.rows[0][0].degree

    @property
    def mode(self):
        return self.rows[0][0].mode

    def __getitem__(self, idx):
        i, j = idx
        return self.rows[i][j]

    @classmethod
    def identity(cls, n, degree, mode="exact"):
        one = Jet.constant(1, degree, mode)
        zero = Jet.zero(degree, mode)
        return cls([[one if i == j else zero for j in range(n)] for i in range(n)])

    def transpose(self):
        m, n = self.shape
        return JetMatrix([[self.rows[i][j] for i in range(m)] for j in range(n)])

    def __add__(self, other):
        m, n = self.shape
        if other.shape != (m, n):
            raise JetError("shape mismatch")
        return JetMatrix(
            [[self.rows[i][j] + other.rows[i][j] for j in range(n)] for i in range(m)]
        )

    def __sub__(self, other):
        m, n = self.shape
        if other.shape != (m, n):
            raise JetError("shape mismatch")
        return JetMatrix(
            [[self.rows[i][j] - other.rows[i][j] for j in range(n)] for i in range(m)]
        )

    def __mul__(self, other):
        if isinstance(other, JetMatrix):
            m, k = self.shape
            k2, n = other.shape
            if k != k2:
                raise JetError("shape mismatch in matrix product")
            out = []
            for i in range(m):
                row = []
                for j in range(n):
                    acc = self.rows[i][0] * other.rows[0][j]
                    for t in range(1, k):
                        acc = acc + self.rows[i][t] * other.rows[t][j]
                    row.append(acc)
                out.append(row)
            return JetMatrix(out)
        return self.map(lambda e: e * other)

    def map(self, fn):
        return JetMatrix([[fn(e) for e in r] for r in self.rows])

    def truncate(self, degree):
        return self.map(lambda e: e.truncate(degree))

    def to_float(self):
        return self.map(lambda e: e.to_float())

    def det(self):
        m, n = self.shape
        if m != n:
            raise JetError("determinant of non-square matrix")
        if n == 1:
            return self.rows[0][0]
        if n == 2:
            a, b = self.rows[0]
            c, d = self.rows[1]
            return a * d - b * c
        if n == 3:
            (a, b, c), (d, e, f), (g, h, i) = self.rows
            return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
        # cofactor expansion along the first row for n = 4 (sizes here are tiny)
        total = None
        for j in range(n):
            minor = JetMatrix(
                [[self.rows[r][s] for s in range(n) if s != j] for r in range(1, n)]
            )
            term = self.rows[0][j] * minor.det()
            if j % 2:
                term = -term
            total = term if total is None else total + term
        return total

    def adjugate(self):
        m, n = self.shape
        if m != n:
            raise JetError("adjugate of non-square matrix")
        if n == 1:
            return JetMatrix([[Jet.constant(1, self.degree, self.mode)]])
        cof = []
        for i in range(n):
            row = []
            for j in range(n):
                minor = JetMatrix(
                    [
                        [self.rows[r][s] for s in range(n) if s != j]
                        for r in range(n)
                        if r != i
                    ]
                )
                entry = minor.det()
                if (i + j) % 2:
                    entry = -entry
                row.append(entry)
            cof.append(row)
        return JetMatrix(cof).transpose()

    def inverse(self):
        """Exact two-sided inverse up to the truncation degree."""
        d = self.det()
        if not d.coefficient((0, 0, 0)):
            raise JetError("matrix has singular constant term")
        dinv = d.reciprocal()
        return self.adjugate().map(lambda e: e * dinv)

    def eval(self, point):
        return [[e.eval(point) for e in r] for r in self.rows]

    def eval_batch(self, points):
        import numpy as np

        m, n = self.shape
        arrs = [[self.rows[i][j].eval_batch(points) for j in range(n)] for i in range(m)]
        return np.stack([np.stack(r, axis=-1) for r in arrs], axis=-2)
