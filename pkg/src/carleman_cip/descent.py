"""Fixed-step gradient method on the coefficient vector, with membership monitoring."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .admissible import membership
from .errors import CIPError
from .functional import FrozenQuadratic, FunctionalConfig, Problem, value_and_gradient

POLICIES = ("reject", "backtrack")
# tolerated increase of J per accepted step, in units of eps * |J| (round-off only)
ROUNDOFF_SLACK = 8.0
BOUNDARY_MARGIN = 1e-6


@dataclass(frozen=True)
class DescentConfig:
    """``sigma = None`` picks ``0.5 / L`` from a power iteration at the start point."""

    sigma: float | None = None
    theta: float = 1e-8
    max_iters: int = 20000
    backtrack: float = 0.5
    membership_policy: str = "backtrack"
    max_backtracks: int = 40
    sigma_fraction: float = 0.5

    def __post_init__(self):
        if self.sigma is not None and not 0.0 < self.sigma < 1.0:
            raise CIPError("CONFIG_ERROR", f"sigma={self.sigma} outside (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise CIPError("CONFIG_ERROR", "backtracking factor must lie in (0, 1)")
        if self.membership_policy not in POLICIES:
            raise CIPError("CONFIG_ERROR", f"unknown membership policy {self.membership_policy!r}")


@dataclass
class DescentTrace:
    """Per-iteration record of a run; row ``n`` describes iterate ``B_n``."""

    B: list[np.ndarray] = field(default_factory=list)
    J: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    min_margin: list[float] = field(default_factory=list)
    step_used: list[float] = field(default_factory=list)
    status: str = "RUNNING"
    sigma: float = 0.0
    q_fit: float | None = None

    def __len__(self) -> int:
        return len(self.J)

    @property
    def terminal(self) -> np.ndarray:
        return self.B[-1]

    def iterates(self) -> np.ndarray:
        return np.array(self.B)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "J", "grad_norm", "min_margin", "step_used"])
            for i in range(len(self)):
                w.writerow([i, repr(self.J[i]), repr(self.grad_norm[i]), repr(self.min_margin[i]), repr(self.step_used[i])])

    def summary(self) -> str:
        q = "n/a" if self.q_fit is None else f"{self.q_fit:.6f}"
        return (
            f"status      {self.status}\n"
            f"iterations  {len(self) - 1}\n"
            f"sigma       {self.sigma:.6e}\n"
            f"J final     {self.J[-1]:.6e}\n"
            f"|g| final   {self.grad_norm[-1]:.3e}\n"
            f"min margin  {self.min_margin[-1]:.3e}\n"
            f"q_fit       {q}"
        )


def default_sigma(problem: Problem, fconfig: FunctionalConfig, B: np.ndarray, fraction: float = 0.5) -> float:
    """``fraction / L`` with ``L`` the largest eigenvalue of the frozen-A Hessian at ``B``."""
    L = FrozenQuadratic(problem, fconfig, B).largest_eigenvalue()
    return min(fraction / L, 0.999)


def _margin(B: np.ndarray, problem: Problem) -> float:
    try:
        rep = membership(B, problem.params, problem.basis)
    except CIPError:
        return -np.inf
    return rep.min_margin if rep.member else min(rep.min_margin, -1e-300)


def minimize(
    B1: np.ndarray, problem: Problem, fconfig: FunctionalConfig, dconfig: DescentConfig = DescentConfig()
) -> DescentTrace:
    """Iterate ``B_{n+1} = B_n - sigma g_n`` until ``|g_n| <= theta``.

    A step that raises ``J`` beyond round-off or leaves the interior of
    ``G_{m,k}`` is halved (``backtrack``) or ends the run with ``LEFT_SET``
    (``reject``).  Statuses: ``CONVERGED``, ``MAX_ITERS``, ``LEFT_SET`` and
    ``BOUNDARY_MINIMIZER`` (stuck against the boundary of the set).
    """
    B = np.array(B1, dtype=float).ravel()
    margin = _margin(B, problem)
    if not margin > 0:
        raise CIPError("LEFT_SET", "starting point is not an interior point of G")
    sigma = dconfig.sigma or default_sigma(problem, fconfig, B, dconfig.sigma_fraction)
    trace = DescentTrace(sigma=sigma)
    J, g = value_and_gradient(B, problem, fconfig)
    step = 0.0
    eps = np.finfo(float).eps
    while True:
        gn = float(np.linalg.norm(g))
        trace.B.append(B.copy())
        trace.J.append(J)
        trace.grad_norm.append(gn)
        trace.min_margin.append(margin)
        trace.step_used.append(step)
        if gn <= dconfig.theta:
            trace.status = "CONVERGED"
            break
        if len(trace) > dconfig.max_iters:
            trace.status = "MAX_ITERS"
            break
        step = sigma
        accepted = False
        left = False
        for _ in range(dconfig.max_backtracks + 1):
            cand = B - step * g
            m_new = _margin(cand, problem)
            if m_new > 0:
                J_new, g_new = value_and_gradient(cand, problem, fconfig)
                if J_new <= J + ROUNDOFF_SLACK * eps * abs(J):
                    accepted = True
                    break
                left = False
            else:
                left = True
            if dconfig.membership_policy == "reject":
                break
            step *= dconfig.backtrack
        if not accepted:
            if dconfig.membership_policy == "reject" and left:
                trace.status = "LEFT_SET"
            elif left or margin < BOUNDARY_MARGIN:
                trace.status = "BOUNDARY_MINIMIZER"
            else:
                trace.status = "STALLED"
            break
        B, J, g, margin = cand, J_new, g_new, m_new
    if trace.status != "CONVERGED" and trace.min_margin[-1] < BOUNDARY_MARGIN:
        trace.status = "BOUNDARY_MINIMIZER"
    if len(trace) >= 5:
        try:
            trace.q_fit = estimate_rate(trace).q
        except CIPError:
            trace.q_fit = None
    return trace


@dataclass
class RateFit:
    q: float
    residual: float
    n_points: int
    status: str

    @property
    def contracting(self) -> bool:
        return self.status == "OK"


def estimate_rate(trace: DescentTrace | np.ndarray, B_ref: np.ndarray | None = None) -> RateFit:
    """Geometric fit ``|B_n - B_ref| ~ q^n`` over the tail half of the iterates.

    ``B_ref`` defaults to the terminal iterate.  Near the end of a run the
    distance to the terminal point bends away from the geometric law (the
    terminal point is itself ``~ s_last / (1 - q)`` from the limit, with
    ``s_last`` the last step length), so a first fit estimates ``q`` and a
    second one drops distances below twenty times that offset.  A plain
    array of distances is fitted as given.  ``residual`` is the RMS
    deviation of ``log |B_n - B_ref|`` from the fitted line.
    """
    Bs = trace.iterates() if isinstance(trace, DescentTrace) else np.asarray(trace, dtype=float)
    last_step = 0.0
    if Bs.ndim == 1:
        dist = Bs.astype(float)
    else:
        ref = Bs[-1] if B_ref is None else np.ravel(B_ref)
        dist = np.linalg.norm(Bs - ref, axis=1)
        if B_ref is None and len(Bs) > 1:
            last_step = float(np.linalg.norm(Bs[-1] - Bs[-2]))
    if len(dist) < 5:
        raise CIPError("TOO_SHORT", f"{len(dist)} iterates < 5")
    n_all = np.arange(len(dist))[len(dist) // 2 :]
    d_all = dist[len(dist) // 2 :]

    def fit(floor: float):
        keep = d_all > max(floor, 1e-300)
        n, d = n_all[keep], d_all[keep]
        if len(d) < 3:
            raise CIPError("TOO_SHORT", "fewer than 3 usable tail distances")
        slope, icpt = np.polyfit(n, np.log(d), 1)
        resid = float(np.sqrt(np.mean((np.log(d) - (slope * n + icpt)) ** 2)))
        return float(np.exp(slope)), resid, len(d)

    q, resid, npts = fit(0.0)
    if last_step > 0 and q < 1.0:
        try:
            q, resid, npts = fit(20.0 * last_step / (1.0 - q))
        except CIPError:
            pass
    status = "OK" if q < 1.0 - 1e-12 else "NOT_CONTRACTING"
    return RateFit(q=q if status == "OK" else 1.0, residual=resid, n_points=npts, status=status)
