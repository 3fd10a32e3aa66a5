"""Periodic graph profiles stored as finite trigonometric series."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class GratingProfile:
    """Graph ``x2 = f(x1)`` with

    ``f(x) = offset + sum_j cos[j] cos(2 pi j x / L) + sin[j] sin(2 pi j x / L)``,
    ``j = 1..D``.
    """

    period: float
    cos: tuple = ()
    sin: tuple = ()
    offset: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.period) or self.period <= 0:
            raise ValidationError("profile period must be positive")
        c = tuple(float(v) for v in self.cos)
        s = tuple(float(v) for v in self.sin)
        D = max(len(c), len(s))
        c = c + (0.0,) * (D - len(c))
        s = s + (0.0,) * (D - len(s))
        object.__setattr__(self, "cos", c)
        object.__setattr__(self, "sin", s)
        object.__setattr__(self, "offset", float(self.offset))
        x = np.linspace(0, self.period, 64 * (D + 1), endpoint=False)
        y = self(x)
        object.__setattr__(self, "_fmin", float(y.min()))
        object.__setattr__(self, "_fmax", float(y.max()))

    @classmethod
    def flat(cls, height=0.0, period=2 * np.pi):
        return cls(period, (), (), height)

    @classmethod
    def from_params(cls, period, params, degree):
        """Inverse of :meth:`params`: ``[offset, cos_1..cos_D, sin_1..sin_D]``."""
        p = np.asarray(params, dtype=float)
        return cls(period, tuple(p[1:1 + degree]), tuple(p[1 + degree:1 + 2 * degree]), p[0])

    def params(self, degree=None):
        D = self.degree if degree is None else degree
        c = list(self.cos[:D]) + [0.0] * (D - len(self.cos[:D]))
        s = list(self.sin[:D]) + [0.0] * (D - len(self.sin[:D]))
        return np.array([self.offset] + c + s)

    @property
    def degree(self):
        return len(self.cos)

    @property
    def wavenumbers(self):
        return 2 * np.pi * np.arange(1, self.degree + 1) / self.period

    def __call__(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.degree == 0:
            return np.full_like(x1, self.offset)
        arg = np.multiply.outer(x1, self.wavenumbers)
        return self.offset + np.cos(arg) @ np.array(self.cos) + np.sin(arg) @ np.array(self.sin)

    def derivative(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.degree == 0:
            return np.zeros_like(x1)
        q = self.wavenumbers
        arg = np.multiply.outer(x1, q)
        return np.cos(arg) @ (q * np.array(self.sin)) - np.sin(arg) @ (q * np.array(self.cos))

    def shifted(self, s):
        """Profile ``x1 -> f(x1 - s)``, i.e. translated right by `s`."""
        if self.degree == 0:
            return self
        arg = self.wavenumbers * s
        c, d = np.array(self.cos), np.array(self.sin)
        return GratingProfile(self.period, tuple(c * np.cos(arg) - d * np.sin(arg)),
                              tuple(c * np.sin(arg) + d * np.cos(arg)), self.offset)

    @property
    def fmin(self):
        return self._fmin

    @property
    def fmax(self):
        return self._fmax

    def to_text(self):
        lines = [f"period = {self.period!r}", f"offset = {self.offset!r}"]
        lines += [f"cos[{j}] = {v!r}" for j, v in enumerate(self.cos, 1)]
        lines += [f"sin[{j}] = {v!r}" for j, v in enumerate(self.sin, 1)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        """Parse ``key = value`` lines with keys ``period``, ``offset``, ``cos[j]``, ``sin[j]``.

        Blank lines and ``#`` comments are ignored; unknown keys are rejected.
        ``pi`` may appear in values (e.g. ``period = 2*pi``).
        """
        vals = {}
        cos, sin = {}, {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"malformed profile line: {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            v = parse_number(value)
            if key in ("period", "offset"):
                vals[key] = v
            elif key.startswith(("cos[", "sin[")) and key.endswith("]"):
                try:
                    j = int(key[4:-1])
                except ValueError:
                    raise ValidationError(f"bad harmonic index in {key!r}") from None
                if j < 1:
                    raise ValidationError("harmonic indices start at 1")
                (cos if key[0] == "c" else sin)[j] = v
            else:
                raise ValidationError(f"unknown profile key {key!r}")
        if "period" not in vals:
            raise ValidationError("profile needs a period")
        D = max(list(cos) + list(sin) + [0])
        return cls(vals["period"], tuple(cos.get(j, 0.0) for j in range(1, D + 1)),
                   tuple(sin.get(j, 0.0) for j in range(1, D + 1)), vals.get("offset", 0.0))


def parse_number(text):
    """Float literal, optionally written with ``pi`` (``2*pi``, ``pi/2``, ``-pi/6``)."""
    t = text.strip().replace(" ", "")
    try:
        return float(t)
    except ValueError:
        pass
    m = re.fullmatch(r"([+-]?[0-9.eE+-]*?)\*?pi(?:/([0-9.eE+-]+))?", t)
    if not m:
        raise ValidationError(f"cannot parse number {text!r}")
    head, den = m.groups()
    if head in ("", "+"):
        a = 1.0
    elif head == "-":
        a = -1.0
    else:
        a = float(head)
    return a * np.pi / (float(den) if den else 1.0)
