"""Composable stationary kernels and the kernel expression mini-language.

Grammar (``*`` binds tighter than ``+``, both left-associative)::

    expr    := term ('+' term)*
    term    := factor ('*' factor)*
    factor  := '(' expr ')' | C(v) | RBF(l=v) | M(l=v, nu=v) | RQ(l=v, a=v)

Every kernel here depends on its inputs only through the squared Euclidean
distance, so kernels can be evaluated from a precomputed distance matrix.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

MATERN_NUS = (0.5, 1.5, 2.5)


def sq_dists(X, Z=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    same = Z is None
    Z = X if same else np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if not same and np.shares_memory(X, Z):
        # X @ X.T takes numpy's symmetric BLAS path, which rounds differently.
        Z = Z.copy()
    if X.shape[1] != Z.shape[1]:
        raise ValidationError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]} columns")
    xx = np.einsum("ij,ij->i", X, X)
    zz = xx if same else np.einsum("ij,ij->i", Z, Z)
    d2 = xx[:, None] + zz[None, :] - 2.0 * (X @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    if same:
        d2 = 0.5 * (d2 + d2.T)
        np.fill_diagonal(d2, 0.0)
    return d2


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValidationError(f"{name} must be positive and finite, got {value}")
    return value


class Kernel:
    """Base class; subclasses are frozen dataclasses."""

    def __call__(self, X, Z=None) -> np.ndarray:
        return self.from_sqdist(sq_dists(X, Z))

    def from_sqdist(self, d2: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diag_value(self) -> float:
        """k(x, x), identical for every x since all kernels are stationary."""
        return float(self.from_sqdist(np.zeros((1, 1)))[0, 0])

    def __add__(self, other):
        return Sum(self, other)

    def __mul__(self, other):
        return Product(self, other)

    # Hyperparameters as a flat vector in tree order (Matern nu is fixed).
    def params(self) -> list[float]:
        raise NotImplementedError

    def with_params(self, values) -> "Kernel":
        values = list(values)
        out = self._rebuild(values)
        if values:
            raise ValidationError("too many hyperparameter values")
        return out

    def _rebuild(self, values: list) -> "Kernel":
        raise NotImplementedError

    def param_names(self) -> list[str]:
        raise NotImplementedError

    def __str__(self):
        return to_expression(self)


@dataclass(frozen=True)
class Constant(Kernel):
    value: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "value", _positive("constant value", self.value))

    def from_sqdist(self, d2):
        return np.full(np.shape(d2), self.value)

    def params(self):
        return [self.value]

    def param_names(self):
        return ["c"]

    def _rebuild(self, values):
        return replace(self, value=values.pop(0))


@dataclass(frozen=True)
class RBF(Kernel):
    length_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "length_scale", _positive("length scale", self.length_scale))

    def from_sqdist(self, d2):
        return np.exp(-0.5 * np.asarray(d2) / self.length_scale**2)

    def params(self):
        return [self.length_scale]

    def param_names(self):
        return ["l"]

    def _rebuild(self, values):
        return replace(self, length_scale=values.pop(0))


@dataclass(frozen=True)
class Matern(Kernel):
    length_scale: float = 1.0
    nu: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "length_scale", _positive("length scale", self.length_scale))
        if float(self.nu) not in MATERN_NUS:
            raise ValidationError(f"Matern nu must be one of {MATERN_NUS}, got {self.nu}")
        object.__setattr__(self, "nu", float(self.nu))

    def from_sqdist(self, d2):
        r = np.sqrt(np.asarray(d2)) / self.length_scale
        if self.nu == 0.5:
            return np.exp(-r)
        if self.nu == 1.5:
            s = math.sqrt(3.0) * r
            return (1.0 + s) * np.exp(-s)
        s = math.sqrt(5.0) * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)

    def params(self):
        return [self.length_scale]

    def param_names(self):
        return ["l"]

    def _rebuild(self, values):
        return replace(self, length_scale=values.pop(0))


@dataclass(frozen=True)
class RationalQuadratic(Kernel):
    length_scale: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "length_scale", _positive("length scale", self.length_scale))
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))

    def from_sqdist(self, d2):
        base = np.asarray(d2) / (2.0 * self.alpha * self.length_scale**2)
        # log1p keeps the alpha -> infinity limit accurate.
        return np.exp(-self.alpha * np.log1p(base))

    def params(self):
        return [self.length_scale, self.alpha]

    def param_names(self):
        return ["l", "a"]

    def _rebuild(self, values):
        return replace(self, length_scale=values.pop(0), alpha=values.pop(0))


@dataclass(frozen=True)
class Sum(Kernel):
    left: Kernel
    right: Kernel

    def from_sqdist(self, d2):
        return self.left.from_sqdist(d2) + self.right.from_sqdist(d2)

    def params(self):
        return self.left.params() + self.right.params()

    def param_names(self):
        return self.left.param_names() + self.right.param_names()

    def _rebuild(self, values):
        return Sum(self.left._rebuild(values), self.right._rebuild(values))


@dataclass(frozen=True)
class Product(Kernel):
    left: Kernel
    right: Kernel

    def from_sqdist(self, d2):
        return self.left.from_sqdist(d2) * self.right.from_sqdist(d2)

    def params(self):
        return self.left.params() + self.right.params()

    def param_names(self):
        return self.left.param_names() + self.right.param_names()

    def _rebuild(self, values):
        return Product(self.left._rebuild(values), self.right._rebuild(values))


def kernel_eval(spec: Kernel, X, Z=None) -> np.ndarray:
    return spec(X, Z)


# -- expression printing -------------------------------------------------------


def _num(v: float) -> str:
    return repr(float(v))


def to_expression(k: Kernel, _parent: int = 0) -> str:
    """Print a kernel tree so that parsing the text rebuilds the same tree."""
    if isinstance(k, Constant):
        return f"C({_num(k.value)})"
    if isinstance(k, RBF):
        return f"RBF(l={_num(k.length_scale)})"
    if isinstance(k, Matern):
        return f"M(l={_num(k.length_scale)},nu={_num(k.nu)})"
    if isinstance(k, RationalQuadratic):
        return f"RQ(l={_num(k.length_scale)},a={_num(k.alpha)})"
    if isinstance(k, (Sum, Product)):
        prec = 1 if isinstance(k, Sum) else 2
        op = "+" if prec == 1 else "*"
        # Left-associative: a right child of equal precedence needs brackets.
        text = to_expression(k.left, prec) + op + to_expression(k.right, prec + 1)
        return f"({text})" if _parent > prec else text
    raise TypeError(f"not a kernel: {k!r}")


# -- expression parsing --------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]+)|(?P<op>[()+*,=]))")


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValidationError(f"kernel expression: unexpected character at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


_PRIMITIVES = {
    "C": ((), ("c",)),
    "RBF": (("l",), ()),
    "M": (("l", "nu"), ()),
    "RQ": (("l", "a"), ()),
}


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            raise ValidationError(f"kernel expression {self.text!r}: expected {want}, got {tok[1]!r}")
        self.i += 1
        return tok[1]

    def parse(self) -> Kernel:
        if not self.tokens:
            raise ValidationError("kernel expression is empty")
        node = self.expr()
        if self.i != len(self.tokens):
            raise ValidationError(f"kernel expression {self.text!r}: trailing input at {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+"):
            self.take()
            node = Sum(node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*"):
            self.take()
            node = Product(node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        name = self.take("name")
        key = name.upper()
        if key not in _PRIMITIVES:
            raise ValidationError(f"kernel expression: unknown kernel {name!r}")
        self.take("op", "(")
        args = self.arguments()
        self.take("op", ")")
        return self.build(key, args)

    def arguments(self):
        positional, named = [], {}
        if self.peek() == ("op", ")"):
            return positional, named
        while True:
            if self.peek()[0] == "name":
                key = self.take("name").lower()
                self.take("op", "=")
                if key in named:
                    raise ValidationError(f"kernel expression: argument {key!r} given twice")
                named[key] = float(self.take("num"))
            else:
                positional.append(float(self.take("num")))
            if self.peek() == ("op", ","):
                self.take()
                continue
            return positional, named

    def build(self, key, args):
        positional, named = args
        aliases = {"length_scale": "l", "alpha": "a", "value": "c"}
        named = {aliases.get(k, k): v for k, v in named.items()}
        required, optional = _PRIMITIVES[key]
        names = required + optional
        for name, value in zip(names, positional):
            if name in named:
                raise ValidationError(f"kernel expression: argument {name!r} given twice")
            named[name] = value
        if len(positional) > len(names):
            raise ValidationError(f"kernel expression: too many arguments for {key}")
        unknown = set(named) - set(names)
        if unknown:
            raise ValidationError(f"kernel expression: unknown argument(s) {sorted(unknown)} for {key}")
        missing = [n for n in required if n not in named]
        if missing:
            raise ValidationError(f"kernel expression: {key} needs {', '.join(missing)}")
        if key == "C":
            return Constant(named.get("c", 1.0))
        if key == "RBF":
            return RBF(named["l"])
        if key == "M":
            return Matern(named["l"], named["nu"])
        return RationalQuadratic(named["l"], named["a"])


def parse_kernel(text: str) -> Kernel:
    return _Parser(text).parse()
