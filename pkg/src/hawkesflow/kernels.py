"""Parametric excitation kernels.

Two shapes are supported, both built from a slow and a fast exponential with
a mark factor ``exp(b * v)``:

* difference form: ``k e^{bv} (e^{-alpha u} - e^{-beta u})`` -- zero at the
  origin, rises to a single peak and fades out;
* sum form: ``k e^{bv} (e^{-alpha u} + e^{-beta u})`` -- monotone, with the
  value at ``u = 0`` pinned to zero.

Volume marks are in lots (100 shares).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameters, WrongKernelForm


class KernelForm(str, enum.Enum):
    DIFFERENCE = "difference"
    SUM = "sum"

    @property
    def sign(self) -> float:
        """Sign applied to the fast exponential."""
        return -1.0 if self is KernelForm.DIFFERENCE else 1.0

    @classmethod
    def parse(cls, value: "KernelForm | str") -> "KernelForm":
        if isinstance(value, cls):
            return value
        aliases = {"diff": cls.DIFFERENCE, "difference": cls.DIFFERENCE, "sum": cls.SUM}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise InvalidParameters(f"unknown kernel form {value!r}") from None


@dataclass(frozen=True)
class KernelParams:
    """Parameters of one (target, source) excitation channel.

    Validity is checked once here, never inside evaluation.
    """

    k: float
    b: float
    alpha: float
    beta: float
    form: KernelForm = KernelForm.DIFFERENCE

    def __post_init__(self):
        object.__setattr__(self, "form", KernelForm.parse(self.form))
        for name in ("k", "b", "alpha", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameters(f"{name} must be finite")
        if self.k <= 0 or self.alpha <= 0 or self.beta <= 0:
            raise InvalidParameters(
                f"k, alpha, beta must be > 0 (got k={self.k}, alpha={self.alpha}, beta={self.beta})"
            )
        if self.form is KernelForm.DIFFERENCE and not self.beta > self.alpha:
            raise InvalidParameters(
                f"difference kernel needs beta > alpha (got alpha={self.alpha}, beta={self.beta})"
            )

    def to_dict(self) -> dict:
        return {"k": self.k, "b": self.b, "alpha": self.alpha, "beta": self.beta,
                "form": self.form.value}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        return cls(k=float(d["k"]), b=float(d["b"]), alpha=float(d["alpha"]),
                   beta=float(d["beta"]), form=KernelForm.parse(d.get("form", "difference")))


def mark_factor(params: KernelParams, v):
    return np.exp(params.b * np.asarray(v, dtype=float))


def kernel_eval(params: KernelParams, u, v=0.0):
    """Contribution of one past event, ``u`` seconds ago with mark ``v`` lots.

    Accepts scalars or arrays (broadcast together). Returns a float for
    scalar input.
    """
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    shape = params.form.sign
    val = params.k * np.exp(params.b * v_arr) * (
        np.exp(-params.alpha * u_arr) + shape * np.exp(-params.beta * u_arr))
    # the sum form is defined as 0 at the origin; the difference form already is
    val = np.where(u_arr == 0.0, 0.0, val)
    if val.ndim == 0:
        return float(val)
    return val


def kernel_l1_mass(params: KernelParams, v=0.0) -> float:
    """Integral of ``|phi(u)|`` over ``[0, inf)`` at mark ``v``."""
    shape = params.form.sign
    return float(params.k * math.exp(params.b * v) * (1.0 / params.alpha + shape / params.beta))


def kernel_peak_time(params: KernelParams) -> float:
    """Lag at which a difference kernel reaches its maximum."""
    if params.form is not KernelForm.DIFFERENCE:
        raise WrongKernelForm("peak time is only defined for the difference form")
    a, b = params.alpha, params.beta
    return math.log(b / a) / (b - a)
