"""Exact polynomial oracle.

Commuting polynomials in (q, p) and words in the canonical pair (Q, P) with
[Q, P] = i hbar, with coefficients kept as sympy expressions in ``hbar`` and
``lambda`` so that identities can be checked by exact coefficient comparison.
"""

from __future__ import annotations

import re
from math import comb, factorial

import numpy as np
import sympy as sp

HBAR = sp.Symbol("hbar", positive=True)
LAM = sp.Symbol("lambda")
I = sp.I
MU = I * HBAR / 2
MAX_DEGREE = 8


def _coef(c):
    if isinstance(c, sp.Basic):
        return sp.expand(c)
    if isinstance(c, complex):
        return sp.expand(sp.nsimplify(c.real) + I * sp.nsimplify(c.imag))
    if isinstance(c, float):
        return sp.nsimplify(c)
    return sp.sympify(c)


def _is_zero(c) -> bool:
    return sp.expand(c) == 0


class CPolynomial:
    """sum c[n, m] q^n p^m with exact coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        clean = {}
        for (n, m), c in (terms or {}).items():
            if n < 0 or m < 0:
                raise ValueError(f"negative exponent ({n}, {m})")
            c = _coef(c)
            if not _is_zero(c):
                clean[(int(n), int(m))] = c
        self.terms = clean

    @classmethod
    def monomial(cls, n: int, m: int, c=1) -> "CPolynomial":
        return cls({(n, m): c})

    @classmethod
    def const(cls, c) -> "CPolynomial":
        return cls({(0, 0): c})

    def degree(self) -> int:
        return max((n + m for n, m in self.terms), default=0)

    def __add__(self, other):
        other = _lift(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return CPolynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return CPolynomial({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        out = {}
        for (a, b), c in self.terms.items():
            for (e, f), d in other.terms.items():
                k = (a + e, b + f)
                out[k] = out.get(k, 0) + c * d
        return CPolynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = CPolynomial.const(1)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        try:
            other = _lift(other)
        except TypeError:
            return NotImplemented
        return not (self - other).terms

    def __hash__(self):
        return hash(tuple(sorted(self.terms)))

    def diff(self, nq: int = 0, np_: int = 0) -> "CPolynomial":
        out = {}
        for (n, m), c in self.terms.items():
            if n >= nq and m >= np_:
                f = sp.Integer(factorial(n) // factorial(n - nq)) * (factorial(m) // factorial(m - np_))
                out[(n - nq, m - np_)] = c * f
        return CPolynomial(out)

    def subs(self, **values) -> "CPolynomial":
        rep = {HBAR: values.get("hbar", HBAR), LAM: values.get("lam", LAM)}
        return CPolynomial({k: sp.sympify(c).subs(rep) for k, c in self.terms.items()})

    def hbar_limit(self) -> "CPolynomial":
        """Coefficientwise hbar -> 0."""
        return CPolynomial({k: sp.sympify(c).subs(HBAR, 0) for k, c in self.terms.items()})

    def conj(self) -> "CPolynomial":
        """Complex conjugate for real q, p (hbar real)."""
        return CPolynomial({k: sp.conjugate(c) for k, c in self.terms.items()})

    def numeric(self, hbar: float = 1.0, lam: complex = 0.0) -> dict:
        """{(n, m): complex coefficient} with hbar and lambda substituted."""
        return {k: complex(sp.sympify(c).subs({HBAR: hbar, LAM: lam}).evalf())
                for k, c in self.terms.items()}

    def evaluate(self, q, p, hbar: float = 1.0, lam: complex = 0.0) -> np.ndarray:
        q = np.asarray(q, dtype=complex)
        p = np.asarray(p, dtype=complex)
        out = np.zeros(np.broadcast(q, p).shape, dtype=complex)
        for (n, m), val in self.numeric(hbar, lam).items():
            out = out + val * q**n * p**m
        return out

    def __repr__(self):
        return f"CPolynomial({format_cpoly(self)})"

    def __str__(self):
        return format_cpoly(self)


def _lift(x) -> CPolynomial:
    if isinstance(x, CPolynomial):
        return x
    if isinstance(x, NCPolynomial):
        raise TypeError("cannot combine commuting and noncommuting polynomials")
    return CPolynomial.const(x)


def _fmt_coef(c) -> str:
    s = sp.sstr(sp.sympify(c))
    return s if re.fullmatch(r"[-\w.]+", s) else f"({s})"


def format_cpoly(f: CPolynomial) -> str:
    if not f.terms:
        return "0"
    parts = []
    for (n, m) in sorted(f.terms, key=lambda k: (-(k[0] + k[1]), -k[0])):
        c = f.terms[(n, m)]
        mono = "*".join(([f"q^{n}" if n > 1 else "q"] if n else []) + ([f"p^{m}" if m > 1 else "p"] if m else []))
        if not mono:
            parts.append(_fmt_coef(c))
        elif c == 1:
            parts.append(mono)
        else:
            parts.append(f"{_fmt_coef(c)}*{mono}")
    return " + ".join(parts)


Q_ = CPolynomial.monomial(1, 0)
P_ = CPolynomial.monomial(0, 1)


# ---------------------------------------------------------------- operators

def _check_word(word):
    if len(word) > MAX_DEGREE:
        raise ValueError(f"operator word of length {len(word)} exceeds the degree cap {MAX_DEGREE}")


class NCPolynomial:
    """sum c[w] w over words w in {'Q', 'P'}; products concatenate words."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        clean = {}
        for w, c in (terms or {}).items():
            w = tuple(w)
            if any(s not in ("Q", "P") for s in w):
                raise ValueError(f"bad word {w!r}")
            _check_word(w)
            c = _coef(c)
            if not _is_zero(c):
                clean[w] = clean.get(w, 0) + c
        self.terms = {w: c for w, c in clean.items() if not _is_zero(c)}

    @classmethod
    def word(cls, w: str, c=1) -> "NCPolynomial":
        return cls({tuple(w): c})

    @classmethod
    def const(cls, c) -> "NCPolynomial":
        return cls({(): c})

    @classmethod
    def qp(cls, n: int, m: int, c=1) -> "NCPolynomial":
        """c Q^n P^m."""
        return cls({("Q",) * n + ("P",) * m: c})

    def __add__(self, other):
        other = _lift_nc(other)
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0) + c
        return NCPolynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial({w: -c for w, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_lift_nc(other))

    def __mul__(self, other):
        if not isinstance(other, NCPolynomial):
            return NCPolynomial({w: c * _coef(other) for w, c in self.terms.items()})
        out = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                w = w1 + w2
                out[w] = out.get(w, 0) + c1 * c2
        return NCPolynomial(out)

    def __rmul__(self, other):
        return NCPolynomial({w: _coef(other) * c for w, c in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, (NCPolynomial, int, float, complex, sp.Basic)):
            return NotImplemented
        d = normal_order(self - _lift_nc(other))
        return not d.terms

    def __hash__(self):
        return hash(tuple(sorted(self.terms)))

    def adjoint(self) -> "NCPolynomial":
        return NCPolynomial({tuple(reversed(w)): sp.conjugate(c) for w, c in self.terms.items()})

    def is_normal(self) -> bool:
        return all("".join(w) == "Q" * w.count("Q") + "P" * w.count("P") for w in self.terms)

    def normal_terms(self) -> dict:
        """{(n, m): c} of the normal-ordered form."""
        return {(w.count("Q"), w.count("P")): c for w, c in normal_order(self).terms.items()}

    def subs(self, **values) -> "NCPolynomial":
        rep = {HBAR: values.get("hbar", HBAR), LAM: values.get("lam", LAM)}
        return NCPolynomial({w: sp.sympify(c).subs(rep) for w, c in self.terms.items()})

    def __repr__(self):
        return f"NCPolynomial({format_ncpoly(self)})"

    def __str__(self):
        return format_ncpoly(self)


def _lift_nc(x) -> NCPolynomial:
    if isinstance(x, NCPolynomial):
        return x
    if isinstance(x, CPolynomial):
        raise TypeError("cannot combine commuting and noncommuting polynomials")
    return NCPolynomial.const(x)


def format_ncpoly(x: NCPolynomial) -> str:
    if not x.terms:
        return "0"
    parts = []
    for w in sorted(x.terms, key=lambda w: (-len(w), w)):
        c = x.terms[w]
        mono = "".join(w)
        mono = re.sub(r"(Q{2,}|P{2,})", lambda m: f"{m.group(0)[0]}^{len(m.group(0))}", mono)
        if not w:
            parts.append(_fmt_coef(c))
        elif c == 1:
            parts.append(mono)
        else:
            parts.append(f"{_fmt_coef(c)}*{mono}")
    return " + ".join(parts)


def _mul_normal(a: int, b: int, c: int, d: int):
    """Q^a P^b Q^c P^d = sum_k k! C(b,k) C(c,k) (-i hbar)^k Q^(a+c-k) P^(b+d-k)."""
    for k in range(min(b, c) + 1):
        yield (a + c - k, b + d - k), factorial(k) * comb(b, k) * comb(c, k) * (-I * HBAR) ** k


def _normal_dict(x: NCPolynomial) -> dict:
    out = {}
    for w, coef in x.terms.items():
        acc = {(0, 0): sp.Integer(1)}
        for s in w:
            step = (1, 0) if s == "Q" else (0, 1)
            nxt = {}
            for (a, b), c in acc.items():
                for key, f in _mul_normal(a, b, *step):
                    nxt[key] = nxt.get(key, 0) + c * f
            acc = nxt
        for key, c in acc.items():
            out[key] = out.get(key, 0) + coef * c
    return out


def normal_order(x: NCPolynomial) -> NCPolynomial:
    """Rewrite every word into the form Q^n P^m using PQ = QP - i hbar."""
    return NCPolynomial({("Q",) * n + ("P",) * m: c for (n, m), c in _normal_dict(x).items()})


def _check_degree(n: int, m: int):
    if n < 0 or m < 0:
        raise ValueError(f"exponents must be non-negative, got ({n}, {m})")
    if n + m > MAX_DEGREE:
        raise ValueError(f"degree {n + m} exceeds the cap {MAX_DEGREE}")


def weyl_order(n: int, m: int) -> NCPolynomial:
    """2^-n sum_k C(n,k) Q^k P^m Q^(n-k), normal ordered."""
    _check_degree(n, m)
    terms = {}
    for k in range(n + 1):
        w = ("Q",) * k + ("P",) * m + ("Q",) * (n - k)
        terms[w] = terms.get(w, 0) + sp.Rational(comb(n, k), 2**n)
    return normal_order(NCPolynomial(terms))


def lambda_order(n: int, m: int, lam=LAM) -> NCPolynomial:
    """Operator of q^n p^m under the weight exp(lam eta xi):
    sum_l (-lam)^l C(n,l) C(m,l) l! weyl_order(n-l, m-l)."""
    _check_degree(n, m)
    lam = _coef(lam)
    out = NCPolynomial()
    for l in range(min(n, m) + 1):
        out = out + weyl_order(n - l, m - l) * ((-lam) ** l * comb(n, l) * comb(m, l) * factorial(l))
    return out


# ------------------------------------------------- weights on polynomials

def _family_params(w):
    """(lam, kappa) exponents for a weight given as a WeightFunction, 'weyl',
    or a ('lambda', lam) / ('gauss', kappa) / ('product', lam, kappa) tuple."""
    if w is None or w == "weyl":
        return sp.Integer(0), sp.Integer(0)
    if isinstance(w, tuple):
        kind = w[0]
        if kind == "lambda":
            return _coef(w[1]), sp.Integer(0)
        if kind == "gauss":
            return sp.Integer(0), _coef(w[1])
        if kind == "product":
            return _coef(w[1]), _coef(w[2])
        raise ValueError(f"unknown family {kind!r}")
    from .orderings import WeightFunction

    if isinstance(w, WeightFunction):
        return _coef(w.lam_eff), _coef(w.kappa_eff)
    raise TypeError(f"cannot interpret {w!r} as a weight")


def u_poly(f: CPolynomial, w, inverse: bool = False) -> CPolynomial:
    """Weight applied on the symbol side: exp(-lam d_q d_p - kappa (d_q^2 + d_p^2)) f.

    Multiplying the spectrum by Omega is this finite-order differential operator
    on polynomials; ``inverse`` flips the sign of the exponent.
    """
    lam, kappa = _family_params(w)
    s = 1 if inverse else -1
    out = f
    if lam != 0:
        acc, term, k = f, f, 0
        while term.terms:
            k += 1
            term = term.diff(1, 1) * (s * lam / k)
            acc = acc + term
        out = acc
    if kappa != 0:
        gen = lambda g: (g.diff(2, 0) + g.diff(0, 2)) * (s * kappa)
        acc, term, k = out, out, 0
        while term.terms:
            k += 1
            term = gen(term) * sp.Rational(1, k)
            acc = acc + term
        out = acc
    return out


def quantize_poly(f: CPolynomial, w="weyl") -> NCPolynomial:
    """Normal-ordered operator of the symbol f under weight w."""
    g = u_poly(f, w)
    out = NCPolynomial()
    for (n, m), c in g.terms.items():
        out = out + weyl_order(n, m) * c
    return out


def dequantize_poly(x: NCPolynomial, w="weyl") -> CPolynomial:
    """Inverse of quantize_poly, by peeling leading normal-ordered terms."""
    rest = dict(_normal_dict(x))
    rest = {k: c for k, c in rest.items() if not _is_zero(c)}
    sym = CPolynomial()
    while rest:
        n, m = max(rest, key=lambda k: (k[0] + k[1], k[0]))
        c = rest[(n, m)]
        sym = sym + CPolynomial.monomial(n, m, c)
        for k, d in _normal_dict(weyl_order(n, m)).items():
            rest[k] = sp.expand(rest.get(k, 0) - c * d)
        rest = {k: v for k, v in rest.items() if not _is_zero(v)}
    return u_poly(sym, w, inverse=True)


def _star_kernel(f: CPolynomial, g: CPolynomial, a, b) -> CPolynomial:
    """sum_{j,k} a^j b^k / (j! k!) (d_q^j d_p^k f)(d_p^j d_q^k g)."""
    out = CPolynomial()
    nf = max((n for n, _ in f.terms), default=0)
    mf = max((m for _, m in f.terms), default=0)
    for j in range(nf + 1):
        for k in range(mf + 1):
            left = f.diff(j, k)
            if not left.terms:
                continue
            right = g.diff(k, j)
            if not right.terms:
                continue
            out = out + left * right * (a**j * b**k / (factorial(j) * factorial(k)))
    return out


def star_poly(f: CPolynomial, g: CPolynomial, w="weyl", nu=None) -> CPolynomial:
    """Exact star product of polynomial symbols.

    Weyl and lambda weights use the bidifferential kernel
    exp((lam + nu) d_q d_p' + (lam - nu) d_p d_q') with nu = i hbar / 2 by default;
    other weights go through the symbol-side weight map.
    """
    f, g = _lift(f), _lift(g)
    lam, kappa = _family_params(w)
    nu = MU if nu is None else _coef(nu)
    if kappa == 0:
        return _star_kernel(f, g, lam + nu, lam - nu)
    uf, ug = u_poly(f, w), u_poly(g, w)
    return u_poly(_star_kernel(uf, ug, nu, -nu), w, inverse=True)


def bracket_poly(f: CPolynomial, g: CPolynomial, w="weyl") -> CPolynomial:
    """(f * g - g * f) / (2 mu)."""
    return (star_poly(f, g, w) - star_poly(g, f, w)) * (1 / (2 * MU))


def poisson(f: CPolynomial, g: CPolynomial) -> CPolynomial:
    return f.diff(1, 0) * g.diff(0, 1) - f.diff(0, 1) * g.diff(1, 0)


# ------------------------------------------------------------------ parser

class PolySyntaxError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} at offset {offset}")
        self.offset = offset


_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?|\.\d+)(i?)|(hbar|lambda|q|p|i)\b|([-+*/^()]))")


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            off = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise PolySyntaxError(f"unexpected character {text[off]!r}", off)
        start = m.start() + len(m.group(0)) - len(m.group(0).lstrip())
        if m.group(1) is not None:
            val = sp.Rational(m.group(1)) if "." in m.group(1) else sp.Integer(m.group(1))
            out.append(("num", val * (I if m.group(2) else 1), start))
        elif m.group(3) is not None:
            out.append(("name", m.group(3), start))
        else:
            out.append(("op", m.group(4), start))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expr(self):
        sign = 1
        if self.peek()[:2] in (("op", "+"), ("op", "-")):
            sign = -1 if self.take()[1] == "-" else 1
        acc = self.term() * sign
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            t = self.term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term(self):
        acc = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            _, op, off = self.take()
            rhs = self.factor()
            if op == "*":
                acc = acc * rhs
                continue
            if set(rhs.terms) - {(0, 0)} or not rhs.terms:
                raise PolySyntaxError("division only by a nonzero constant", off)
            acc = acc * CPolynomial.const(1 / rhs.terms[(0, 0)])
        return acc

    def factor(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            kind, val, off = self.take()
            if kind != "num" or not (isinstance(val, sp.Integer) and val >= 0):
                raise PolySyntaxError("exponent must be a non-negative integer", off)
            base = base ** int(val)
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return CPolynomial.const(val)
        if kind == "name":
            return {"q": Q_, "p": P_, "i": CPolynomial.const(I),
                    "hbar": CPolynomial.const(HBAR), "lambda": CPolynomial.const(LAM)}[val]
        if (kind, val) == ("op", "("):
            inner = self.expr()
            k2, v2, o2 = self.take()
            if (k2, v2) != ("op", ")"):
                raise PolySyntaxError("expected ')'", o2)
            return inner
        if kind == "end":
            raise PolySyntaxError("unexpected end of input", off)
        raise PolySyntaxError(f"unexpected {val!r}", off)


def parse_poly(text: str) -> CPolynomial:
    """Parse e.g. ``"3*q^2*p - i*p^3 + (1+2i)*hbar"`` into a CPolynomial."""
    parser = _Parser(text)
    out = parser.expr()
    kind, val, off = parser.peek()
    if kind != "end":
        raise PolySyntaxError(f"unexpected {val!r}", off)
    if out.degree() > MAX_DEGREE:
        raise PolySyntaxError(f"degree {out.degree()} exceeds the cap {MAX_DEGREE}", 0)
    return out


# ------------------------------------------------------- numeric bridge

def realize_matrix(x: NCPolynomial, basis):
    """Substitute the discretized position and momentum operators into x.

    Q is diagonal in the position basis and P = -i hbar d/dx uses the spectral
    derivative on the periodic position grid.
    """
    from .transforms import OperatorMatrix

    xs = basis.x
    n = len(xs)
    k = 2 * np.pi * np.fft.fftfreq(n, d=basis.dx)
    k[n // 2] = 0.0  # Nyquist mode has no signed derivative
    D = np.fft.ifft(1j * k[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
    hbar = basis.hbar
    Qm = np.diag(xs).astype(complex)
    Pm = -1j * hbar * D
    out = np.zeros((n, n), dtype=complex)
    for w, c in x.terms.items():
        if len(w) > MAX_DEGREE:
            raise ValueError(f"word length {len(w)} exceeds the cap {MAX_DEGREE}")
        val = complex(sp.sympify(c).subs({HBAR: hbar}).evalf())
        mat = np.eye(n, dtype=complex)
        for s in w:
            mat = mat @ (Qm if s == "Q" else Pm)
        out += val * mat
    return OperatorMatrix.from_action(basis, out)
