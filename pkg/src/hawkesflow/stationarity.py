"""Kernel-mass matrix and its spectral radius.

The bivariate process is stationary when the matrix of kernel L1 masses,
evaluated at reference marks, has spectral radius below one.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameters, MixedKernelForms
from .kernels import kernel_l1_mass


@dataclass(frozen=True, eq=False)
class QMatrix:
    entries: np.ndarray
    reference_marks: tuple = (0.0, 0.0)

    def __post_init__(self):
        q = np.array(self.entries, dtype=float)
        if q.shape != (2, 2):
            raise InvalidParameters(f"Q must be 2x2, got shape {q.shape}")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise InvalidParameters("Q entries must be finite and >= 0")
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)
        object.__setattr__(self, "reference_marks", tuple(float(v) for v in self.reference_marks))

    def __eq__(self, other) -> bool:
        if not isinstance(other, QMatrix):
            return NotImplemented
        return (np.array_equal(self.entries, other.entries)
                and self.reference_marks == other.reference_marks)

    def __hash__(self):
        return hash((self.entries.tobytes(), self.reference_marks))


@dataclass(frozen=True)
class StationarityReport:
    q: QMatrix
    spectral_radius: float

    @property
    def stationary(self) -> bool:
        return self.spectral_radius < 1.0

    def to_dict(self) -> dict:
        return {"q": self.q.entries.tolist(),
                "reference_marks": list(self.q.reference_marks),
                "spectral_radius": self.spectral_radius,
                "stationary": self.stationary}

    @classmethod
    def from_dict(cls, d: dict) -> "StationarityReport":
        return cls(QMatrix(np.array(d["q"]), tuple(d["reference_marks"])),
                   float(d["spectral_radius"]))


def build_q(model, reference_marks=(30.0, 32.0)) -> QMatrix:
    """``q[i][j]`` is the mass of the kernel from source ``j`` to target ``i``,
    with the mark factor taken at the source's reference mark."""
    thetas = tuple(model)
    if len(thetas) != 2:
        raise InvalidParameters("expected a (buy, sell) pair of ModelTheta")
    if thetas[0].form is not thetas[1].form:
        raise MixedKernelForms("buy and sell thetas use different kernel forms")
    marks = tuple(float(v) for v in reference_marks)
    q = [[kernel_l1_mass(th.kernels[j], marks[j]) for j in range(2)] for th in thetas]
    return QMatrix(np.array(q), marks)


def spectral_radius(q) -> float:
    """Largest eigenvalue modulus of a 2x2 matrix from its characteristic polynomial."""
    m = q.entries if isinstance(q, QMatrix) else np.asarray(q, dtype=float)
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = cmath.sqrt(tr * tr / 4.0 - det)
    return max(abs(tr / 2.0 + disc), abs(tr / 2.0 - disc))


def check_stationarity(model, reference_marks=(30.0, 32.0)) -> StationarityReport:
    q = build_q(model, reference_marks)
    return StationarityReport(q, spectral_radius(q))
