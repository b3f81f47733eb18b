"""
Poisson Image Editing

Discrete Poisson equation on an interior region Omega:

    |N_p| f_p - sum_{q in N_p & Omega} f_q
        = sum_{q in N_p & dOmega} f*_q + sum_{q in N_p} v_pq

with 4-neighbourhoods, solved by conjugate gradients on the sparse SPD
system. Seamless cloning uses v_pq = src_p - src_q and f* = dst.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, sparse

from phantom.classes import check_image

logger = logging.getLogger(__name__)

# Neighbour offsets (dy, dx): up, down, left, right. Guidance planes follow this order.
OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class PoissonConvergenceError(RuntimeError):
    """Conjugate gradients did not reach the tolerance."""


class NotPositiveDefiniteError(ArithmeticError):
    """A non-positive curvature term appeared during conjugate gradients."""


@dataclass
class BlendProblem:
    """
    Poisson problem on a canvas.

    Attributes:
        omega: (H, W) bool interior region
        boundary: (H, W) values f*, read on pixels adjacent to omega
        guidance: (4, H, W) v_pq for p=(y, x) and q=p+OFFSETS[k]
    """

    omega: np.ndarray
    boundary: np.ndarray
    guidance: np.ndarray

    def validate(self):
        omega = np.asarray(self.omega, dtype=bool)
        h, w = omega.shape
        if not omega.any():
            raise ValueError("Omega is empty")
        if self.boundary.shape != (h, w):
            raise ValueError(f"boundary shape {self.boundary.shape} != omega shape {(h, w)}")
        if self.guidance.shape != (4, h, w):
            raise ValueError(f"guidance shape {self.guidance.shape} != {(4, h, w)}")
        if omega[0].any() or omega[-1].any() or omega[:, 0].any() or omega[:, -1].any():
            raise ValueError("Omega touches the canvas border; every interior pixel needs 4 neighbours")
        _, components = ndimage.label(omega)
        if components != 1:
            raise ValueError(f"Omega must be 4-connected, found {components} components")
        self.omega = omega

    def pixels(self):
        """Row-major (rows, cols) of Omega, the unknowns' order."""
        return np.nonzero(self.omega)


def assemble(p: BlendProblem):
    """
    Sparse system matrix and right-hand side.

    Returns:
        (A as CSR matrix, rhs vector)
    """
    p.validate()
    ys, xs = p.pixels()
    n = ys.size
    index = -np.ones(p.omega.shape, dtype=np.int64)
    index[ys, xs] = np.arange(n)

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    rhs = np.zeros(n)
    for k, (dy, dx) in enumerate(OFFSETS):
        qy, qx = ys + dy, xs + dx
        q_index = index[qy, qx]
        inside = q_index >= 0
        rows.append(np.flatnonzero(inside))
        cols.append(q_index[inside])
        vals.append(-np.ones(int(inside.sum())))
        rhs += np.where(inside, 0.0, p.boundary[qy, qx])
        rhs += p.guidance[k, ys, xs]

    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
    return A, rhs


def conjugate_gradient(A, b: np.ndarray, tol: float = 1e-8,
                       max_iter: Optional[int] = None) -> np.ndarray:
    """
    Solve A x = b for symmetric positive definite A.

    Stops when ||r|| <= tol * (1 + ||b||).

    Raises:
        NotPositiveDefiniteError: p^T A p <= 0 for some search direction
        PoissonConvergenceError: tolerance not met within max_iter (default 10 n)
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = tol * (1.0 + np.linalg.norm(b))

    x = np.zeros(n)
    r = b - A @ x
    d = r.copy()
    rs = float(r @ r)
    for it in range(max_iter):
        if np.sqrt(rs) <= threshold:
            logger.debug("CG converged in %d iterations", it)
            return x
        Ad = A @ d
        curvature = float(d @ Ad)
        if curvature <= 0.0:
            raise NotPositiveDefiniteError(f"curvature {curvature:.3e} at iteration {it}")
        alpha = rs / curvature
        x += alpha * d
        r -= alpha * Ad
        rs_new = float(r @ r)
        d = r + (rs_new / rs) * d
        rs = rs_new

    if np.sqrt(rs) <= threshold:
        return x
    raise PoissonConvergenceError(
        f"CG residual {np.sqrt(rs):.3e} above {threshold:.3e} after {max_iter} iterations")


def solve_poisson(p: BlendProblem, tol: float = 1e-8) -> np.ndarray:
    """
    Solve a blend problem.

    Returns:
        Values on Omega in row-major pixel order (see BlendProblem.pixels)
    """
    A, rhs = assemble(p)
    return conjugate_gradient(A, rhs, tol)


def cloning_guidance(src: np.ndarray) -> np.ndarray:
    """(4, H, W) guidance v_pq = src_p - src_q; zero where q leaves the canvas."""
    h, w = src.shape
    v = np.zeros((4, h, w))
    padded = np.pad(src, 1, mode='edge')
    for k, (dy, dx) in enumerate(OFFSETS):
        v[k] = src - padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return v


def blend_texture(src: np.ndarray, dst: np.ndarray, region: np.ndarray,
                  tol: float = 1e-8) -> np.ndarray:
    """
    Seamlessly clone src into dst over a region.

    Border pixels are dropped from the region and each 4-connected
    component is solved separately.

    Args:
        src: Source GrayImage (provides gradients)
        dst: Destination GrayImage (provides boundary values)
        region: (H, W) bool pixel set
        tol: CG tolerance

    Returns:
        Blended GrayImage, equal to dst outside the region, clamped to [0, 1]
    """
    src = check_image(src, min_size=1)
    dst = check_image(dst, min_size=1)
    region = np.asarray(region, dtype=bool)
    if src.shape != dst.shape or region.shape != dst.shape:
        raise ValueError(f"src {src.shape}, dst {dst.shape} and region {region.shape} must match")

    omega = region.copy()
    omega[0, :] = omega[-1, :] = False
    omega[:, 0] = omega[:, -1] = False

    out = dst.copy()
    guidance = cloning_guidance(src)
    labels, count = ndimage.label(omega)
    for label in range(1, count + 1):
        problem = BlendProblem(labels == label, dst, guidance)
        ys, xs = problem.pixels()
        out[ys, xs] = solve_poisson(problem, tol)
    return np.clip(out, 0.0, 1.0)
