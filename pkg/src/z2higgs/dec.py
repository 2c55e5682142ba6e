"""Cells, chains and Z2 forms on a finite box in Z^m.

The complex is the cubical complex of a box [l1,h1] x ... x [lm,hm] with free
boundary: cells outside the box do not exist and the coboundary is clipped
accordingly.  The boundary sign convention is the standard cubical alternating
one; only d(d(.)) = 0 and boundary/coboundary duality are load-bearing, and
both are covered by tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .errors import DimensionError


def rho(z):
    """Representation of Z2 in the multiplicative group: rho(0)=1, rho(1)=-1."""
    return 1 - 2 * (z & 1)


@dataclass(frozen=True)
class BoxSpec:
    """A box in Z^m given by closed integer intervals per axis."""

    extents: tuple

    def __post_init__(self):
        ext = tuple((int(lo), int(hi)) for lo, hi in self.extents)
        object.__setattr__(self, "extents", ext)
        if self.m < 2:
            raise DimensionError("box dimension must be at least 2")
        for lo, hi in ext:
            if hi < lo:
                raise ValueError("empty interval in box extents")

    @property
    def m(self):
        return len(self.extents)

    def vertices(self):
        ranges = [range(lo, hi + 1) for lo, hi in self.extents]
        for v in itertools.product(*ranges):
            yield v

    def cells(self, k):
        """All positive k-cells, ordered by (base, dirs)."""
        if not 0 <= k <= self.m:
            raise DimensionError(f"no cells of dimension {k} in dimension {self.m}")
        for base in self.vertices():
            for dirs in itertools.combinations(range(self.m), k):
                c = Cell(k, base, dirs, 1)
                if self.contains(c):
                    yield c

    def contains(self, cell):
        if len(cell.base) != self.m:
            return False
        for d, (x, (lo, hi)) in enumerate(zip(cell.base, self.extents)):
            top = hi - 1 if d in cell.dirs else hi
            if not lo <= x <= top:
                return False
        return True

    def count_cells(self, k):
        return sum(1 for _ in self.cells(k))


@dataclass(frozen=True)
class Cell:
    """An oriented k-cell: lowest corner, sorted spanning directions, sign."""

    k: int
    base: tuple
    dirs: tuple
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(int(x) for x in self.base))
        object.__setattr__(self, "dirs", tuple(int(d) for d in self.dirs))
        if self.k != len(self.dirs) or list(self.dirs) != sorted(set(self.dirs)):
            raise ValueError("cell directions must be k distinct sorted axes")
        if self.sign not in (1, -1):
            raise ValueError("cell sign must be +1 or -1")

    def __neg__(self):
        return replace(self, sign=-self.sign)

    def positive(self):
        return self if self.sign == 1 else -self

    def sort_key(self):
        return (self.k, self.base, self.dirs, self.sign)

    def to_text(self):
        """Canonical text form "k:(x1,..,xm):d1d2..dk:±" with 1-based axes."""
        coords = ",".join(str(x) for x in self.base)
        dirs = "".join(str(d + 1) for d in self.dirs)
        return f"{self.k}:({coords}):{dirs}:{'+' if self.sign == 1 else '-'}"

    @staticmethod
    def from_text(text):
        k_s, coords_s, dirs_s, sign_s = text.split(":")
        base = tuple(int(x) for x in coords_s.strip("()").split(",")) if coords_s != "()" else ()
        dirs = tuple(int(ch) - 1 for ch in dirs_s)
        return Cell(int(k_s), base, dirs, 1 if sign_s == "+" else -1)


class Chain:
    """A Z-valued k-chain, stored as a sparse map on positive cells."""

    __slots__ = ("k", "coeffs")

    def __init__(self, k, coeffs=None):
        self.k = k
        self.coeffs = {}
        if coeffs:
            for cell, n in coeffs.items():
                self._add(cell, n)

    def _add(self, cell, n):
        if cell.sign == -1:
            cell, n = -cell, -n
        new = self.coeffs.get(cell, 0) + n
        if new:
            self.coeffs[cell] = new
        else:
            self.coeffs.pop(cell, None)

    def __getitem__(self, cell):
        if cell.sign == -1:
            return -self.coeffs.get(-cell, 0)
        return self.coeffs.get(cell, 0)

    def __add__(self, other):
        if self.k != other.k:
            raise DimensionError("chain dimensions differ")
        out = Chain(self.k, dict(self.coeffs))
        for cell, n in other.coeffs.items():
            out._add(cell, n)
        return out

    def __neg__(self):
        return Chain(self.k, {c: -n for c, n in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        return isinstance(other, Chain) and self.k == other.k and self.coeffs == other.coeffs

    def __len__(self):
        return len(self.coeffs)

    def support(self):
        return frozenset(self.coeffs)

    def is_zero(self):
        return not self.coeffs

    def items(self):
        return self.coeffs.items()

    def __repr__(self):
        terms = sorted(self.coeffs.items(), key=lambda it: it[0].sort_key())
        body = " ".join(f"{n:+d}*{c.to_text()}" for c, n in terms)
        return f"Chain(k={self.k}, {body or '0'})"


def boundary(cell):
    """Oriented boundary of a k-cell as a (k-1)-chain, k >= 1."""
    if cell.k < 1:
        raise DimensionError("boundary undefined for 0-cells")
    out = Chain(cell.k - 1)
    for i, d in enumerate(cell.dirs):
        sub = tuple(x for x in cell.dirs if x != d)
        sgn = cell.sign * (-1) ** i
        upper = list(cell.base)
        upper[d] += 1
        out._add(Cell(cell.k - 1, tuple(upper), sub, 1), sgn)
        out._add(Cell(cell.k - 1, cell.base, sub, 1), -sgn)
    return out


def chain_boundary(chain):
    """Linear extension of the boundary to chains."""
    out = Chain(chain.k - 1)
    for cell, n in chain.items():
        for face, s in boundary(cell).items():
            out._add(face, n * s)
    return out


def coboundary(cell, box):
    """Oriented coboundary, clipped to the box (free boundary)."""
    if cell.k >= box.m:
        raise DimensionError("coboundary undefined for top cells")
    pos = cell.positive()
    out = Chain(cell.k + 1)
    for d in range(box.m):
        if d in pos.dirs:
            continue
        dirs = tuple(sorted(pos.dirs + (d,)))
        lower = list(pos.base)
        lower[d] -= 1
        for base in (pos.base, tuple(lower)):
            parent = Cell(cell.k + 1, base, dirs, 1)
            if box.contains(parent):
                out._add(parent, cell.sign * boundary(parent)[pos])
    return out


@dataclass(frozen=True)
class Z2Form:
    """A Z2-valued k-form: the set of positive cells carrying value 1.

    Z2 symmetry (omega(c) = omega(-c)) is built in by storing positive
    representatives only.
    """

    box: BoxSpec
    k: int
    support: frozenset

    def __post_init__(self):
        cells = frozenset(c.positive() for c in self.support)
        object.__setattr__(self, "support", cells)
        for c in cells:
            if c.k != self.k:
                raise DimensionError("form support has mixed dimensions")
            if not self.box.contains(c):
                raise ValueError(f"cell {c.to_text()} outside box")

    def __call__(self, cell):
        return 1 if cell.positive() in self.support else 0

    def __len__(self):
        return len(self.support)


def evaluate(form, chain):
    """Pair a k-form with a k-chain: sum of coeff*value reduced mod 2."""
    if form.k != chain.k:
        raise DimensionError("form/chain dimensions differ")
    total = 0
    for cell, n in chain.items():
        if cell in form.support:
            total += n
    return total & 1


def differential(form):
    """d(omega)(c) := omega(boundary c), a (k+1)-form; requires k <= m-1."""
    if form.k >= form.box.m:
        raise DimensionError("differential undefined for top-dimensional forms")
    hit = []
    for c in form.box.cells(form.k + 1):
        if evaluate(form, boundary(c)):
            hit.append(c)
    return Z2Form(form.box, form.k + 1, frozenset(hit))
