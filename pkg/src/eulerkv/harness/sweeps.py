"""
Parameter sweeps: the incompressible limit in ``K`` and the vanishing
transport regularization ``epsilon``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..dynamics import Scenario, run
from ..errors import ConfigError, NumericalError


class SweepAborted(NumericalError):
    """A member run failed; ``table`` holds the rows completed before it."""

    def __init__(self, message, table, term=None, t=None):
        super().__init__(message, term=term, t=t)
        self.table = table


@dataclass
class SweepResult:
    header: tuple
    rows: list = field(default_factory=list)
    slope: float = math.nan
    verdict: bool | None = None


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``; nan if any ``y <= 0``."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(xs) < 2 or np.any(ys <= 0) or np.any(xs <= 0):
        return math.nan
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _check_geometric(values: Sequence[float]) -> None:
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ConfigError(f"a K sweep needs at least 3 values, got {v.size}")
    if np.any(v <= 0) or np.any(np.diff(v) <= 0):
        raise ConfigError("K values must be positive and increasing")
    r = v[1:] / v[:-1]
    if not np.allclose(r, r[0], rtol=1e-6):
        raise ConfigError(f"K values must be geometrically spaced, ratios {r.tolist()}")


def incompressible_member(scn: Scenario, K: float, mode: str = "viscous") -> Scenario:
    """
    ``scn`` with its bulk response scaled by ``K``.

    ``viscous``: the viscous stress becomes ``K div v I + 2 G dev E`` with
    ``G = D_mu`` kept, i.e. ``D_lambda = K - D_mu``.  ``elastic``: the stored
    energy gains the penalty ``K (1 - det F)^2``.
    """
    if mode == "viscous":
        mp = scn.material
        if K < mp.D_mu:
            raise ConfigError(f"viscous bulk modulus K={K} is below the shear viscosity {mp.D_mu}")
        return scn.with_(material=replace(mp, D_lambda=K - mp.D_mu))
    if mode == "elastic":
        return scn.with_(energy=replace(scn.energy, bulk_penalty=K))
    raise ConfigError(f"unknown incompressibility mode {mode!r}")


def sweep_incompressible_limit(scn: Scenario, K_values: Sequence[float], mode: str = "viscous",
                               progress=None) -> SweepResult:
    """Table of ``(K, ||div v||_{L2(I x Omega)})`` and the fitted log-log slope."""
    _check_geometric(K_values)
    res = SweepResult(("K", "div_v_l2"))
    for K in K_values:
        member = incompressible_member(scn, float(K), mode)
        try:
            traj = run(member, sample_stride=10 ** 9, keep_states=False)
        except NumericalError as exc:
            raise SweepAborted(f"sweep member K={K} failed: {exc}", res, term=exc.term, t=exc.t) from exc
        res.rows.append((float(K), traj.div_v_l2()))
        if progress:
            progress(res.rows[-1])
    res.slope = loglog_slope([r[0] for r in res.rows], [r[1] for r in res.rows])
    return res


def sweep_epsilon(scn: Scenario, eps_values: Sequence[float], progress=None) -> SweepResult:
    """
    ``(epsilon, ||F_eps - F_0||_L2 at t_end)`` for every nonzero ``epsilon``.

    ``eps_values`` must contain 0 (the reference run).  The verdict is whether
    the distances strictly decrease as ``epsilon`` decreases.
    """
    eps = [float(e) for e in eps_values]
    if 0.0 not in eps:
        raise ConfigError("epsilon sweep needs the reference value 0")
    if any(e < 0 for e in eps):
        raise ConfigError("epsilon values must be nonnegative")
    res = SweepResult(("epsilon", "F_distance"))
    others = sorted({e for e in eps if e > 0}, reverse=True)
    if not others:
        return res

    def final(e):
        member = scn.with_(material=replace(scn.material, epsilon=e))
        try:
            return run(member, sample_stride=10 ** 9, keep_states=False).final
        except NumericalError as exc:
            raise SweepAborted(f"sweep member epsilon={e} failed: {exc}", res, term=exc.term, t=exc.t) from exc

    ref = final(0.0)
    for e in others:
        s = final(e)
        # the basis is orthonormal, so the coefficient norm is the L2 norm
        res.rows.append((e, float(np.sqrt(np.sum((s.F - ref.F) ** 2)))))
        if progress:
            progress(res.rows[-1])
    d = [r[1] for r in res.rows]
    res.verdict = all(a > b for a, b in zip(d, d[1:]))
    return res
