"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class FiniteDiffReport:
    """Outcome of comparing analytic gradients against central differences.

    ``max_rel_err`` uses a unit-floored relative error,
    |analytic - numeric| / max(1, |analytic|, |numeric|), so near-zero
    gradients are judged on absolute scale.
    """

    name: str
    tol: float
    n_checked: int = 0
    max_rel_err: float = 0.0
    failures: list = field(default_factory=list)  # (index, analytic, numeric, err)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "ok" if self.ok else f"FAIL ({len(self.failures)} entries)"
        return (
            f"{self.name}: max rel err {self.max_rel_err:.3e} over "
            f"{self.n_checked} entries, tol {self.tol:.1e}: {status}"
        )


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    tol: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    name: str = "f",
) -> FiniteDiffReport:
    """Compare d f(x) / d x against central finite differences.

    ``f`` must be scalar-valued. Central steps use h = 1e-5 * max(1, |x_i|)
    per entry. When ``max_entries`` is given, a random subset of entries is
    checked (for large tensors). ``x`` is restored bit-exactly afterwards.
    """
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    if out.size != 1:
        raise ValueError(f"finite_diff_check: f must be scalar-valued, got shape {out.shape}")
    out.backward()
    if x.grad is None:
        raise RuntimeError("finite_diff_check: f does not depend on x (no gradient)")
    analytic = x.grad.copy()

    flat = x.data.reshape(-1)
    n = flat.size
    if max_entries is not None and max_entries < n:
        rng = rng or np.random.default_rng(0)
        idxs = rng.choice(n, size=max_entries, replace=False)
    else:
        idxs = np.arange(n)

    report = FiniteDiffReport(name=name, tol=tol)
    aflat = analytic.reshape(-1)
    with no_grad():
        for i in idxs:
            orig = flat[i]
            h = 1e-5 * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = f(x).item()
            flat[i] = orig - h
            fm = f(x).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = aflat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            report.n_checked += 1
            if err > report.max_rel_err:
                report.max_rel_err = err
            if err > tol:
                report.failures.append(
                    (np.unravel_index(int(i), x.shape), float(a), float(numeric), float(err))
                )
    return report
