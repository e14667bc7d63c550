"""Magnetic material laws: reluctivity nu(|B|) of the conductive steel.

All curves are evaluated on |B| taken from an already known field state;
nothing here is ever differentiated or iterated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MU0 = 4e-7 * math.pi
NU0 = 1.0 / MU0  # reluctivity of vacuum, m/H


class BHCurve:
    """Base class. Subclasses implement :meth:`h` and :meth:`nu`."""

    is_linear = False

    def h(self, b):
        raise NotImplementedError

    def nu(self, b):
        raise NotImplementedError


@dataclass(frozen=True)
class LinearCurve(BHCurve):
    nu_value: float

    is_linear = True

    def __post_init__(self):
        if not (self.nu_value > 0 and math.isfinite(self.nu_value)):
            raise ValueError(f"reluctivity must be positive, got {self.nu_value}")

    def h(self, b):
        return self.nu_value * np.asarray(b, dtype=float)

    def nu(self, b):
        return np.full_like(np.asarray(b, dtype=float), self.nu_value)


@dataclass(frozen=True)
class BrauerCurve(BHCurve):
    """H(B) = (k1 exp(k2 B^2) + k3) B, with nu capped at the vacuum value.

    The exponential overtakes 1/mu0 a little above 2.3 T for the default
    parameters; past that point the curve continues with vacuum slope.
    """

    k1: float = 3.8
    k2: float = 2.17
    k3: float = 396.2

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.k3 < 0 or self.k1 + self.k3 <= 0:
            raise ValueError(f"invalid Brauer parameters {(self.k1, self.k2, self.k3)}")

    def nu(self, b):
        b = np.asarray(b, dtype=float)
        with np.errstate(over="ignore"):
            raw = self.k1 * np.exp(self.k2 * b * b) + self.k3
        return np.minimum(raw, NU0)

    def h(self, b):
        b = np.asarray(b, dtype=float)
        return self.nu(b) * b


@dataclass(frozen=True)
class TableCurve(BHCurve):
    """Piecewise-linear H(B) through (B, H) knots, vacuum slope past the last knot.

    A leading (0, 0) knot is inserted when missing. Monotonicity is not
    enforced here; :func:`saturation_check` reports violations.
    """

    b: tuple[float, ...]
    hv: tuple[float, ...]

    def __post_init__(self):
        b = [float(x) for x in self.b]
        h = [float(x) for x in self.hv]
        if len(b) != len(h) or len(b) < 1:
            raise ValueError("B and H columns must be nonempty and of equal length")
        if b[0] != 0.0:
            b.insert(0, 0.0)
            h.insert(0, 0.0)
        if h[0] != 0.0:
            raise ValueError("table must satisfy H(0) = 0")
        if len(b) < 2:
            raise ValueError("table needs at least one knot with B > 0")
        if any(b1 <= b0 for b0, b1 in zip(b[:-1], b[1:])):
            raise ValueError("B values must be strictly increasing")
        object.__setattr__(self, "b", tuple(b))
        object.__setattr__(self, "hv", tuple(h))

    def h(self, b):
        b = np.asarray(b, dtype=float)
        kb = np.asarray(self.b)
        kh = np.asarray(self.hv)
        inner = np.interp(b, kb, kh)
        return np.where(b > kb[-1], kh[-1] + NU0 * (b - kb[-1]), inner)

    def nu(self, b):
        b = np.asarray(b, dtype=float)
        slope0 = (self.hv[1] - self.hv[0]) / (self.b[1] - self.b[0])
        safe = np.where(b > 0, b, 1.0)
        return np.where(b > 0, self.h(safe) / safe, slope0)


def reluctivity(curve: BHCurve, b_magnitude):
    """nu(|B|) in m/H; accepts scalars or arrays."""
    arr = np.asarray(b_magnitude, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("flux density magnitude must be finite and non-negative")
    out = curve.nu(arr)
    return float(out) if np.ndim(out) == 0 else out


def saturation_check(curve: BHCurve, b_max: float = 3.0, n: int = 1000) -> list[str]:
    """Return human-readable violations of monotone H and nu <= 1/mu0 on [0, b_max]."""
    problems: list[str] = []
    if isinstance(curve, TableCurve):
        for k in range(len(curve.b) - 1):
            if curve.hv[k + 1] <= curve.hv[k]:
                problems.append(f"H not increasing on B in [{curve.b[k]}, {curve.b[k + 1]}]: "
                                f"H {curve.hv[k]} -> {curve.hv[k + 1]}")
    bs = np.linspace(0.0, b_max, n)
    hs = curve.h(bs)
    dh = np.diff(hs)
    for k in np.flatnonzero(dh <= 0):
        msg = f"H not increasing between B={bs[k]:.4g} and B={bs[k + 1]:.4g}"
        if not any(msg == p for p in problems):
            problems.append(msg)
        if len(problems) > 20:
            break
    nus = curve.nu(bs)
    over = np.flatnonzero(nus > NU0 * (1 + 1e-12))
    if over.size:
        problems.append(f"reluctivity exceeds 1/mu0 for B in [{bs[over[0]]:.4g}, {bs[over[-1]]:.4g}] "
                        f"(max nu = {nus[over].max():.6g})")
    if not np.all(np.isfinite(nus)) or np.any(nus <= 0):
        problems.append("reluctivity not finite and positive on the sample grid")
    return problems


def load_table_curve(path: str | Path) -> TableCurve:
    """Read whitespace-separated ``B H`` lines (``#`` comments) and validate the curve."""
    bs, hs = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns 'B H', got {raw!r}")
        try:
            bs.append(float(parts[0]))
            hs.append(float(parts[1]))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry {raw!r}") from None
    curve = TableCurve(tuple(bs), tuple(hs))
    problems = saturation_check(curve)
    if problems:
        raise ValueError(f"{path}: invalid B-H table: " + "; ".join(problems))
    return curve
