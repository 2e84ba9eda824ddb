"""Discrete Poisson (gradient-domain) solve for seamless cloning.

Unknowns are the pixels of a domain inside a window; every pixel outside the
domain is a Dirichlet value taken from the destination. For each unknown
``p`` and 4-neighbour ``q``::

    4 f_p - sum_q f_q = sum_q v_pq
    v_pq = a (src_p - src_q) + (1 - a) (dst_p - dst_q),  a = min(alpha_p, alpha_q)

with alpha zero outside the domain, so pairs crossing the domain border
follow the destination gradient. Solved by red-black Gauss-Seidel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scenefit.errors import NonConvergence

DEFAULT_EPS = 1e-3
DEFAULT_MAX_SWEEPS = 10_000

# (dy, dx) of the four neighbours
_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass
class SolveReport:
    sweeps: int = 0
    residuals: list[float] = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Value of the (dy, dx) neighbour at every interior cell of a padded array."""
    h, w = a.shape[0] - 2, a.shape[1] - 2
    return a[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]


def guidance_divergence(src: np.ndarray, dst: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Right-hand side ``sum_q v_pq`` for every interior cell.

    All arrays include a one-pixel ring; ``alpha`` must be zero on the ring
    and outside the domain. Returns an array of interior shape.
    """
    a_p = alpha[1:-1, 1:-1][..., None]
    src_p = src[1:-1, 1:-1]
    dst_p = dst[1:-1, 1:-1]
    div = np.zeros_like(src_p)
    for dy, dx in _NEIGHBOURS:
        a = np.minimum(a_p, _shift(alpha, dy, dx)[..., None])
        div += a * (src_p - _shift(src, dy, dx)) + (1.0 - a) * (dst_p - _shift(dst, dy, dx))
    return div


def _laplacian(f: np.ndarray) -> np.ndarray:
    centre = f[1:-1, 1:-1]
    return 4.0 * centre - sum(_shift(f, dy, dx) for dy, dx in _NEIGHBOURS)


def solve(
    src: np.ndarray,
    dst: np.ndarray,
    alpha: np.ndarray,
    domain: np.ndarray,
    eps: float = DEFAULT_EPS,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> tuple[np.ndarray, SolveReport]:
    """Solve for the domain pixels of a padded window.

    Args:
        src: (h+2, w+2, C) source values (ring values are ignored).
        dst: (h+2, w+2, C) destination values; the initial guess and the
            Dirichlet boundary.
        alpha: (h+2, w+2) source weight in [0, 1].
        domain: (h+2, w+2) boolean; must be False on the ring.
        eps: stop once the mean absolute residual over the domain drops
            below this value.
        max_sweeps: sweep cap.

    Returns:
        The padded window with domain pixels replaced by the solution, and a
        report holding the residual after every sweep (index 0 = start).

    Raises:
        NonConvergence: ``max_sweeps`` reached with residual still >= eps.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    domain = np.asarray(domain, dtype=bool)
    if domain[0].any() or domain[-1].any() or domain[:, 0].any() or domain[:, -1].any():
        raise ValueError("domain must not touch the window ring")
    alpha = np.where(domain, np.asarray(alpha, dtype=np.float64), 0.0)
    div = guidance_divergence(src, dst, alpha)

    f = dst.copy()
    inner = domain[1:-1, 1:-1]
    report = SolveReport()
    if not inner.any():
        return f, report
    ii, jj = np.indices(inner.shape)
    colours = [inner & ((ii + jj) % 2 == 0), inner & ((ii + jj) % 2 == 1)]
    count = inner.sum() * f.shape[2]

    def residual() -> float:
        r = div - _laplacian(f)
        return float(np.abs(r[inner]).sum() / count)

    report.residuals.append(residual())
    while report.residuals[-1] >= eps:
        if report.sweeps >= max_sweeps:
            raise NonConvergence(report.sweeps, report.residuals[-1])
        centre = f[1:-1, 1:-1]
        for sel in colours:
            neighbours = sum(_shift(f, dy, dx) for dy, dx in _NEIGHBOURS)
            centre[sel] = (neighbours[sel] + div[sel]) / 4.0
        report.sweeps += 1
        report.residuals.append(residual())
    return f, report
