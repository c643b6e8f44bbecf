"""Model parameters for the two-type Moran model under moderate selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


def log_n(x: float, N: int) -> float:
    return math.log(x) / math.log(N)


def log_n_plus(x: float, N: int) -> float:
    """Positive part of the base-N logarithm, with ``log_n_plus(0) == 0``."""
    if x <= 1:
        return 0.0
    return math.log(x) / math.log(N)


@dataclass(frozen=True)
class ModelParams:
    """Population size ``N``, selective strength ``a`` and scaling factor ``phi``.

    The selective advantage of the mutant is ``s = a * phi``. The exponent
    ``b = -log_N(phi)`` is derived, never stored separately.
    """

    N: int
    a: float
    phi: float
    rule: str = field(default="custom", compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"population size must be an integer >= 2, got {self.N}")
        if not (0.0 < self.phi <= 1.0):
            raise ValueError(f"scaling factor must lie in (0, 1], got {self.phi}")
        if self.a < 0:
            raise ValueError(f"selective strength must be >= 0, got {self.a}")
        if self.b >= 1.0:
            raise ValueError(f"phi={self.phi} gives exponent b={self.b} >= 1 (weak selection)")

    @classmethod
    def power(cls, N: int, a: float, b: float) -> "ModelParams":
        """``phi = N**-b``: moderate selection for ``0 < b < 1``."""
        return cls(int(N), float(a), float(N) ** (-float(b)), "power")

    @classmethod
    def inverse_log(cls, N: int, a: float) -> "ModelParams":
        """``phi = 1/log N``: quasi-strong selection (``b -> 0``)."""
        return cls(int(N), float(a), min(1.0, 1.0 / math.log(N)), "inverse_log")

    @classmethod
    def strong(cls, N: int, a: float) -> "ModelParams":
        return cls(int(N), float(a), 1.0, "strong")

    @property
    def b(self) -> float:
        return -math.log(self.phi) / math.log(self.N)

    @property
    def s(self) -> float:
        """Selective advantage ``a * phi``."""
        return self.a * self.phi

    @property
    def log_N(self) -> float:
        return math.log(self.N)

    @property
    def time_scale(self) -> float:
        """Sweep time unit ``log N / phi``."""
        return math.log(self.N) / self.phi

    @property
    def regime(self) -> str:
        if self.phi == 1.0:
            return "strong"
        if self.rule == "inverse_log":
            return "quasi-strong"
        return "moderate"

    def require_selection(self) -> None:
        if not self.a > 0:
            raise ValueError("this operation requires a > 0")

    # Levels used by the phase decomposition of a sweep.
    @property
    def level_drift(self) -> int:
        """``floor(log N / phi)``: end of the drift-dominated first phase."""
        return int(math.floor(math.log(self.N) / self.phi))

    @property
    def level_23(self) -> int:
        """``floor(N / log N)``."""
        return int(math.floor(self.N / math.log(self.N)))

    @property
    def level_low(self) -> int:
        """``floor(N / sqrt(log N))``."""
        return int(math.floor(self.N / math.sqrt(math.log(self.N))))

    @property
    def level_34(self) -> int:
        """``floor(N (1 - 1/sqrt(log N)))``."""
        return int(math.floor(self.N * (1.0 - 1.0 / math.sqrt(math.log(self.N)))))
