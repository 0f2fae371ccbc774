"""Forward-mode automatic differentiation with fixed-width dual numbers.

A :class:`Dual` carries a float value and a vector of partial derivatives
with respect to a fixed set of seed directions.  Arithmetic propagates the
partials; comparisons and branches look only at the value, so float code
that branches keeps working when fed duals.  Vectors of duals live in numpy
object arrays, which keeps elementwise numpy arithmetic (and ufuncs such as
``np.exp``, which dispatch to the methods below) usable unchanged.

Dual scalars deliberately do not define ``__float__``: silently dropping
partials is the classic forward-mode bug, and an eager ``float()`` somewhere
deep in library code would do exactly that.  Use :func:`value` /
:func:`values` to extract float parts explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DualWidthError(ValueError):
    """Two duals with different partial widths met in one operation."""


class _Diagnostics:
    """Counters for derivative edge cases hit while propagating duals."""

    def __init__(self):
        self.abs_at_zero = 0

    def reset(self):
        self.abs_at_zero = 0


diagnostics = _Diagnostics()


def _pow_base_coeff(v, g):
    """d(v**g)/dv, with the v == 0 limits spelled out explicitly.

    A literal ``g * v**(g-1)`` at v == 0 either raises (negative exponent
    on a Python float) or yields inf; the true one-sided derivative there
    is 0 for g > 1 (and for the constant g == 0), 1 for g == 1, and +inf
    otherwise.
    """
    if v == 0.0:
        if g == 0.0 or g > 1.0:
            return 0.0
        if g == 1.0:
            return 1.0
        return np.inf
    return g * v ** (g - 1.0)


def _scale_partials(coeff, parts):
    """``coeff * parts``, but an infinite slope leaves zero partials zero.

    Zero partials mean no dependence on the inputs at all, so even a
    vertical tangent contributes nothing; entries that do depend come out
    infinite, which is the honest answer.
    """
    if np.isfinite(coeff):
        return coeff * parts
    out = np.zeros_like(parts)
    nz = parts != 0.0
    out[nz] = coeff * parts[nz]
    return out


class Dual:
    """A float value plus a fixed-width vector of partial derivatives."""

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = float(value)
        self.partials = np.asarray(partials, dtype=float)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.partials.tolist()!r})"

    def _check(self, other):
        if self.partials.shape != other.partials.shape:
            raise DualWidthError(
                f"partial widths differ: {self.partials.shape[0]} vs "
                f"{other.partials.shape[0]}"
            )

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            return Dual(self.value + other.value, self.partials + other.partials)
        if isinstance(other, np.ndarray):
            return NotImplemented  # let numpy broadcast elementwise
        return Dual(self.value + float(other), self.partials)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            return Dual(self.value - other.value, self.partials - other.partials)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(self.value - float(other), self.partials)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Dual(float(other) - self.value, -self.partials)

    def __mul__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            return Dual(
                self.value * other.value,
                self.value * other.partials + other.value * self.partials,
            )
        if isinstance(other, np.ndarray):
            return NotImplemented
        c = float(other)
        return Dual(self.value * c, c * self.partials)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            q = self.value / other.value
            return Dual(q, (self.partials - q * other.partials) / other.value)
        if isinstance(other, np.ndarray):
            return NotImplemented
        c = float(other)
        return Dual(self.value / c, self.partials / c)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        q = float(other) / self.value
        return Dual(q, (-q / self.value) * self.partials)

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def __pos__(self):
        return self

    def __pow__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            v, g = self.value, other.value
            val = v ** g
            out = _scale_partials(_pow_base_coeff(v, g), self.partials)
            # d/dg part: x^g*ln(x) -> 0 in the limit x -> 0+ with g > 0.
            if v > 0.0:
                out = out + (val * np.log(v)) * other.partials
            return Dual(val, out)
        if isinstance(other, np.ndarray):
            return NotImplemented
        g = float(other)
        if g == 0.0:
            return Dual(1.0, np.zeros_like(self.partials))
        v = self.value
        return Dual(v ** g, _scale_partials(_pow_base_coeff(v, g), self.partials))

    def __rpow__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        b = float(other)
        val = b ** self.value
        if b > 0.0:
            return Dual(val, (val * np.log(b)) * self.partials)
        return Dual(val, np.zeros_like(self.partials))

    def __abs__(self):
        if self.value > 0.0:
            return self
        if self.value < 0.0:
            return Dual(-self.value, -self.partials)
        diagnostics.abs_at_zero += 1
        return Dual(0.0, np.zeros_like(self.partials))

    # -- elementary functions (numpy ufuncs dispatch to these) ------------

    def exp(self):
        e = np.exp(self.value)
        return Dual(e, e * self.partials)

    def log(self):
        return Dual(np.log(self.value), self.partials / self.value)

    def sin(self):
        return Dual(np.sin(self.value), np.cos(self.value) * self.partials)

    def cos(self):
        return Dual(np.cos(self.value), -np.sin(self.value) * self.partials)

    def sqrt(self):
        s = np.sqrt(self.value)
        if s == 0.0:
            return Dual(s, _scale_partials(np.inf, self.partials))
        return Dual(s, self.partials / (2.0 * s))

    def fabs(self):
        return self.__abs__()

    # -- comparisons look only at values ----------------------------------

    def __lt__(self, other):
        return self.value < value(other)

    def __le__(self, other):
        return self.value <= value(other)

    def __gt__(self, other):
        return self.value > value(other)

    def __ge__(self, other):
        return self.value >= value(other)

    def __eq__(self, other):
        return self.value == value(other)

    def __ne__(self, other):
        return self.value != value(other)

    __hash__ = None


def value(x):
    """Float value of a scalar that may be a dual."""
    if isinstance(x, Dual):
        return x.value
    return float(x)


def values(u):
    """Float values of a vector that may hold duals."""
    u = np.asarray(u)
    if u.dtype == object:
        return np.array([value(x) for x in u.ravel()], dtype=float).reshape(u.shape)
    return u.astype(float, copy=False)


def width_of(u):
    """Partial width of the first dual found in ``u`` (0 if none)."""
    u = np.asarray(u)
    if u.dtype == object:
        for x in u.ravel():
            if isinstance(x, Dual):
                return x.partials.shape[0]
    return 0


def partials(x, width):
    """Partials vector of a scalar, zeros if it is a plain float."""
    if isinstance(x, Dual):
        if x.partials.shape[0] != width:
            raise DualWidthError(
                f"expected width {width}, got {x.partials.shape[0]}"
            )
        return x.partials
    return np.zeros(width)


def partials_matrix(u, width):
    """(n, width) matrix of partials of a vector that may hold duals."""
    u = np.asarray(u)
    out = np.zeros((u.shape[0], width))
    if u.dtype == object:
        for i, x in enumerate(u):
            if isinstance(x, Dual):
                if x.partials.shape[0] != width:
                    raise DualWidthError(
                        f"expected width {width}, got {x.partials.shape[0]}"
                    )
                out[i] = x.partials
    return out


def dual_array(vals, mat):
    """Object array of duals from values ``vals`` and partials rows ``mat``."""
    vals = np.asarray(vals, dtype=float)
    mat = np.asarray(mat, dtype=float)
    out = np.empty(vals.shape[0], dtype=object)
    for i in range(vals.shape[0]):
        out[i] = Dual(vals[i], mat[i])
    return out


def seed_array(vals, width, slots):
    """Object array of duals seeding unit directions.

    ``slots[i]`` gives the seed slot of element ``i`` (a column in the
    partials space of width ``width``); ``-1`` leaves the element with zero
    partials.
    """
    vals = np.asarray(vals, dtype=float)
    out = np.empty(vals.shape[0], dtype=object)
    for i in range(vals.shape[0]):
        p = np.zeros(width)
        if slots[i] >= 0:
            p[slots[i]] = 1.0
        out[i] = Dual(vals[i], p)
    return out


@dataclass(frozen=True)
class SeedPlan:
    """One chunk of a seeding sweep over ``total_params`` directions.

    Chunking trades sweeps for memory: each sweep propagates duals of width
    ``chunk_size``, so peak storage scales with the chunk while the total
    work is essentially unchanged.
    """

    total_params: int
    chunk_size: int
    chunk_index: int = 0

    def __post_init__(self):
        if self.total_params < 1:
            raise ValueError("total_params must be positive")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be at least 1")
        if self.chunk_index * self.chunk_size >= self.total_params:
            raise ValueError("chunk_index beyond the last chunk")

    @property
    def start(self):
        return self.chunk_index * self.chunk_size

    @property
    def stop(self):
        return min(self.start + self.chunk_size, self.total_params)

    @property
    def width(self):
        return self.stop - self.start

    @property
    def n_chunks(self):
        return -(-self.total_params // self.chunk_size)


def plan_chunks(total, chunk=None):
    """All SeedPlans covering ``total`` directions, ``chunk`` at a time."""
    size = total if chunk is None else min(chunk, total)
    first = SeedPlan(total, size, 0)
    return [
        SeedPlan(total, size, i) for i in range(first.n_chunks)
    ]


def _jvp_vector(f, x, v):
    """``J(x) @ v`` for a vector function of one vector, one width-1 sweep."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    xs = np.empty(x.shape[0], dtype=object)
    for i in range(x.shape[0]):
        xs[i] = Dual(x[i], v[i : i + 1])
    y = f(xs)
    return partials_matrix(np.asarray(y), 1)[:, 0]


def _jacobian_vector(f, x, chunk=None):
    """Dense Jacobian of a vector function of one vector, chunked sweeps.

    The result is bitwise independent of the chunking because each partial
    slot propagates independently.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    out = None
    for plan in plan_chunks(n, chunk):
        w = plan.width
        slots = [
            (i - plan.start) if plan.start <= i < plan.stop else -1
            for i in range(n)
        ]
        y = np.asarray(f(seed_array(x, w, slots)))
        cols = partials_matrix(y, w)
        if out is None:
            out = np.zeros((y.shape[0], n))
        out[:, plan.start : plan.stop] = cols
    return out


def jvp(f, u, p, t, v):
    """Directional derivative ``(df/du) @ v`` of an RHS ``f(u, p, t)``.

    One dual-seeded evaluation; no Jacobian is materialized.  ``p`` and
    ``t`` are held at their float values.
    """
    pv = values(np.asarray(p))
    tv = value(t)
    return _jvp_vector(lambda uu: f(uu, pv, tv), values(np.asarray(u)), v)


def jacobian(f, u, p, t, wrt="state", chunk=None):
    """Dense ``df/du`` or ``df/dp`` of an RHS ``f(u, p, t)`` by forward AD.

    ``chunk`` bounds the dual width per sweep (default one full sweep); the
    assembled matrix is bitwise independent of the chunking.
    """
    uv = values(np.asarray(u))
    pv = values(np.asarray(p))
    tv = value(t)
    if wrt == "state":
        return _jacobian_vector(lambda uu: f(uu, pv, tv), uv, chunk)
    if wrt == "params":
        return _jacobian_vector(lambda pp: f(uv, pp, tv), pv, chunk)
    raise ValueError("wrt must be 'state' or 'params'")
