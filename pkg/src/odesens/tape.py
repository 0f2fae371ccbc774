"""Reverse-mode automatic differentiation for single function calls.

:func:`record` runs a right-hand-side ``f(u, p, t)`` once on traced scalars
and captures the straight-line operation sequence.  :func:`vjp` then pulls a
cotangent vector back through that sequence, and :func:`reuse_tape` replays
it on new inputs without re-tracing.

Value-dependent branches make a recorded sequence valid only on the side of
the branch it was recorded on.  Comparisons against traced scalars are
therefore recorded as guards; a replay that lands on the other side raises
:class:`TapeBranchError` so the caller can re-record instead of silently
computing the wrong function.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .dual import _pow_base_coeff


def _pow_pullback(seed, x, e):
    """seed * d(x**e)/dx with the x == 0 limits handled explicitly."""
    c = _pow_base_coeff(x, e)
    if seed == 0.0 and not np.isfinite(c):
        return 0.0
    return seed * c


class TapeBranchError(RuntimeError):
    """A replay crossed a value-dependent branch recorded the other way."""


class VJPStrategy(enum.Enum):
    """How vector-Jacobian products are formed in adjoint computations."""

    USER = "user"
    AD_JACOBIAN = "ad-jac"
    AD_VJP = "ad-vjp"


class Traced:
    """Scalar wrapper that records every operation onto its tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape.vals[self.idx]

    def __repr__(self):
        return f"Traced({self.value!r})"

    def _operand(self, other):
        """Return ('t', idx) for a traced operand, ('c', float) otherwise.

        Arrays come back as ('a', None): the caller returns NotImplemented
        so numpy broadcasts the operation elementwise.
        """
        if isinstance(other, Traced):
            if other.tape is not self.tape:
                raise ValueError("cannot mix scalars from different tapes")
            return "t", other.idx
        if isinstance(other, np.ndarray):
            return "a", None
        return "c", float(other)

    def _emit(self, op, a, b, v):
        return Traced(self.tape, self.tape.emit(op, a, b, v))

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        kind, o = self._operand(other)
        if kind == "t":
            return self._emit("add", self.idx, o, self.value + self.tape.vals[o])
        if kind == "a":
            return NotImplemented
        return self._emit("addc", self.idx, o, self.value + o)

    __radd__ = __add__

    def __sub__(self, other):
        kind, o = self._operand(other)
        if kind == "t":
            return self._emit("sub", self.idx, o, self.value - self.tape.vals[o])
        if kind == "a":
            return NotImplemented
        return self._emit("addc", self.idx, -o, self.value - o)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        c = float(other)
        return self._emit("csub", self.idx, c, c - self.value)

    def __mul__(self, other):
        kind, o = self._operand(other)
        if kind == "t":
            return self._emit("mul", self.idx, o, self.value * self.tape.vals[o])
        if kind == "a":
            return NotImplemented
        return self._emit("mulc", self.idx, o, self.value * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        kind, o = self._operand(other)
        if kind == "t":
            return self._emit("div", self.idx, o, self.value / self.tape.vals[o])
        if kind == "a":
            return NotImplemented
        return self._emit("mulc", self.idx, 1.0 / o, self.value / o)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        c = float(other)
        return self._emit("cdiv", self.idx, c, c / self.value)

    def __neg__(self):
        return self._emit("neg", self.idx, None, -self.value)

    def __pos__(self):
        return self

    def __pow__(self, other):
        kind, o = self._operand(other)
        if kind == "t":
            return self._emit(
                "powt", self.idx, o, self.value ** self.tape.vals[o]
            )
        if kind == "a":
            return NotImplemented
        return self._emit("powc", self.idx, o, self.value ** o)

    def __rpow__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        c = float(other)
        return self._emit("cpow", self.idx, c, c ** self.value)

    def __abs__(self):
        return self._emit("abs", self.idx, None, abs(self.value))

    fabs = __abs__

    # -- elementary functions (numpy ufuncs dispatch to these) ------------

    def exp(self):
        return self._emit("exp", self.idx, None, np.exp(self.value))

    def log(self):
        return self._emit("log", self.idx, None, np.log(self.value))

    def sin(self):
        return self._emit("sin", self.idx, None, np.sin(self.value))

    def cos(self):
        return self._emit("cos", self.idx, None, np.cos(self.value))

    def sqrt(self):
        return self._emit("sqrt", self.idx, None, np.sqrt(self.value))

    # -- comparisons record branch guards ---------------------------------

    def _guard(self, op, other):
        kind, o = self._operand(other)
        return self.tape.guard(op, self.idx, kind, o)

    def __lt__(self, other):
        return self._guard("lt", other)

    def __le__(self, other):
        return self._guard("le", other)

    def __gt__(self, other):
        return self._guard("gt", other)

    def __ge__(self, other):
        return self._guard("ge", other)

    def __eq__(self, other):
        return self._guard("eq", other)

    def __ne__(self, other):
        return self._guard("ne", other)

    __hash__ = None


_COMPARE = {
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
}


class Tape:
    """Recorded straight-line trace of one ``f(u, p, t)`` evaluation.

    Inputs occupy the first ``n_state + n_params + 1`` value slots (state,
    then parameters, then time).  ``vals`` always reflects the most recent
    forward pass, so :func:`vjp` differentiates at the last recorded or
    replayed point.
    """

    def __init__(self, n_state, n_params):
        self.n_state = n_state
        self.n_params = n_params
        self.vals = []
        self.instr = []
        self.guards = []
        self.outputs = None

    @property
    def n_inputs(self):
        return self.n_state + self.n_params + 1

    def emit(self, op, a, b, v):
        idx = len(self.vals)
        self.vals.append(v)
        self.instr.append((op, idx, a, b))
        return idx

    def guard(self, op, idx, kind, o):
        rhs = self.vals[o] if kind == "t" else o
        outcome = _COMPARE[op](self.vals[idx], rhs)
        self.guards.append((len(self.instr), op, idx, kind, o, outcome))
        return outcome

    def output_values(self):
        return np.array([self.vals[i] for i in self.outputs], dtype=float)


def record(f, u, p, t):
    """Run ``f(u, p, t)`` on traced scalars and return the tape."""
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    tape = Tape(u.shape[0], p.shape[0])
    for v in u:
        tape.emit("input", None, None, float(v))
    for v in p:
        tape.emit("input", None, None, float(v))
    tape.emit("input", None, None, float(t))
    tu = np.array([Traced(tape, i) for i in range(tape.n_state)], dtype=object)
    tp = np.array(
        [Traced(tape, tape.n_state + i) for i in range(tape.n_params)],
        dtype=object,
    )
    tt = Traced(tape, tape.n_state + tape.n_params)
    out = f(tu, tp, tt)
    idxs = []
    for y in np.asarray(out, dtype=object):
        if isinstance(y, Traced):
            idxs.append(y.idx)
        else:
            # constant output component, e.g. a state with zero derivative
            idxs.append(tape.emit("addc", None, float(y), float(y)))
    tape.outputs = idxs
    return tape


def reuse_tape(tape, u, p, t):
    """Replay the tape on new inputs and return the output values.

    Raises :class:`TapeBranchError` if any recorded branch guard resolves
    differently at the new point.
    """
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    if u.shape[0] != tape.n_state or p.shape[0] != tape.n_params:
        raise ValueError("input sizes do not match the recorded tape")
    vals = tape.vals
    new_inputs = list(map(float, u)) + list(map(float, p)) + [float(t)]
    vals[: tape.n_inputs] = new_inputs
    guards = tape.guards
    gi = 0
    ng = len(guards)
    for k, (op, idx, a, b) in enumerate(tape.instr):
        while gi < ng and guards[gi][0] <= k:
            _, gop, gidx, gkind, go, outcome = guards[gi]
            rhs = vals[go] if gkind == "t" else go
            if _COMPARE[gop](vals[gidx], rhs) != outcome:
                raise TapeBranchError(
                    f"branch guard '{gop}' at value slot {gidx} flipped"
                )
            gi += 1
        if op == "input":
            continue
        x = vals[a] if a is not None else None
        if op == "add":
            vals[idx] = x + vals[b]
        elif op == "addc":
            vals[idx] = (x + b) if a is not None else b
        elif op == "sub":
            vals[idx] = x - vals[b]
        elif op == "csub":
            vals[idx] = b - x
        elif op == "mul":
            vals[idx] = x * vals[b]
        elif op == "mulc":
            vals[idx] = x * b
        elif op == "div":
            vals[idx] = x / vals[b]
        elif op == "cdiv":
            vals[idx] = b / x
        elif op == "neg":
            vals[idx] = -x
        elif op == "powc":
            vals[idx] = x ** b
        elif op == "powt":
            vals[idx] = x ** vals[b]
        elif op == "cpow":
            vals[idx] = b ** x
        elif op == "abs":
            vals[idx] = abs(x)
        elif op == "exp":
            vals[idx] = np.exp(x)
        elif op == "log":
            vals[idx] = np.log(x)
        elif op == "sin":
            vals[idx] = np.sin(x)
        elif op == "cos":
            vals[idx] = np.cos(x)
        elif op == "sqrt":
            vals[idx] = np.sqrt(x)
        else:  # pragma: no cover - opcode set is closed
            raise RuntimeError(f"unknown opcode {op}")
    while gi < ng:
        _, gop, gidx, gkind, go, outcome = guards[gi]
        rhs = vals[go] if gkind == "t" else go
        if _COMPARE[gop](vals[gidx], rhs) != outcome:
            raise TapeBranchError(
                f"branch guard '{gop}' at value slot {gidx} flipped"
            )
        gi += 1
    return tape.output_values()


class VJPResult(NamedTuple):
    wrt_state: np.ndarray
    wrt_params: np.ndarray
    wrt_time: float


def vjp(tape, v):
    """Pull cotangent ``v`` back through the tape at its current point.

    Returns ``v @ J`` split into state, parameter, and time components,
    where ``J`` is the Jacobian of the recorded function at the point of the
    last :func:`record` or :func:`reuse_tape` call.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != len(tape.outputs):
        raise ValueError("cotangent length does not match tape outputs")
    vals = tape.vals
    adj = np.zeros(len(vals))
    for i, w in zip(tape.outputs, v):
        adj[i] += w
    for op, idx, a, b in reversed(tape.instr):
        g = adj[idx]
        if g == 0.0 or op == "input":
            continue
        if op == "add":
            adj[a] += g
            adj[b] += g
        elif op == "addc":
            if a is not None:
                adj[a] += g
        elif op == "sub":
            adj[a] += g
            adj[b] -= g
        elif op == "csub":
            adj[a] -= g
        elif op == "mul":
            adj[a] += g * vals[b]
            adj[b] += g * vals[a]
        elif op == "mulc":
            adj[a] += g * b
        elif op == "div":
            adj[a] += g / vals[b]
            adj[b] -= g * vals[idx] / vals[b]
        elif op == "cdiv":
            adj[a] -= g * vals[idx] / vals[a]
        elif op == "neg":
            adj[a] -= g
        elif op == "powc":
            adj[a] += _pow_pullback(g, vals[a], b)
        elif op == "powt":
            x, e = vals[a], vals[b]
            adj[a] += _pow_pullback(g, x, e)
            if x > 0.0:
                adj[b] += g * vals[idx] * np.log(x)
        elif op == "cpow":
            if b > 0.0:
                adj[a] += g * vals[idx] * np.log(b)
        elif op == "abs":
            x = vals[a]
            if x > 0.0:
                adj[a] += g
            elif x < 0.0:
                adj[a] -= g
        elif op == "exp":
            adj[a] += g * vals[idx]
        elif op == "log":
            adj[a] += g / vals[a]
        elif op == "sin":
            adj[a] += g * np.cos(vals[a])
        elif op == "cos":
            adj[a] -= g * np.sin(vals[a])
        elif op == "sqrt":
            s = vals[idx]
            if s == 0.0:
                adj[a] += 0.0 if g == 0.0 else np.inf * g
            else:
                adj[a] += g / (2.0 * s)
        else:  # pragma: no cover - opcode set is closed
            raise RuntimeError(f"unknown opcode {op}")
    n, m = tape.n_state, tape.n_params
    return VJPResult(adj[:n].copy(), adj[n : n + m].copy(), adj[n + m])
