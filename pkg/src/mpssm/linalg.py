"""
Dense real and complex kernels used by the fast path and the sensitivity checks.
"""
import logging

import numpy as np

from mpssm.exceptions import ConvergenceError, DefectiveMatrixError, LinalgError, NotSymmetricError

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-12
JACOBI_SWEEPS = 100
CONDITION_LIMIT = 1e8
POWER_TOL = 1e-10
POWER_ITERATIONS = 1000
HUGE_THETA = 1e150


def _square(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinalgError("expected a square matrix, got shape {}".format(a.shape))
    if not np.all(np.isfinite(a)):
        raise LinalgError("matrix has non-finite entries")
    return a


def _off_diagonal(a):
    return np.sqrt(2.0) * np.linalg.norm(np.triu(a, 1))


def _rotate(a, v, p, q):
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    if abs(theta) > HUGE_THETA:
        # theta^2 would overflow; t -> 1 / (2 theta)
        t = 0.5 / theta
    else:
        t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p, col_q = a[:, p].copy(), a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p, row_q = a[p, :].copy(), a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def sym_eig(a, tol=JACOBI_TOL, max_sweeps=JACOBI_SWEEPS):
    """
    Cyclic Jacobi eigensolver for real symmetric matrices.

    :param a: square matrix, symmetric within :data:`SYMMETRY_TOL` (scaled by its norm)
    :param tol: sweeps stop once the off-diagonal Frobenius norm is below ``tol * |a|_F``
    :param max_sweeps: sweep budget
    :return: ``(eigenvalues, P)`` with eigenvalues in descending order and ``P`` orthogonal,
        ``a = P diag(eigenvalues) P^T``
    :raises NotSymmetricError: if ``a`` is not symmetric
    :raises ConvergenceError: if the budget runs out
    """
    a = _square(a)
    scale = np.linalg.norm(a)
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * max(scale, 1.0):
        raise NotSymmetricError("sym_eig needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * scale
    # entries below this cannot keep the off-diagonal norm above the threshold
    negligible = threshold / max(n, 1)

    for sweep in range(max_sweeps + 1):
        off = _off_diagonal(a)
        if off <= threshold:
            log.debug("jacobi converged after %d sweep(s) (n=%d)", sweep, n)
            break
        if sweep == max_sweeps:
            raise ConvergenceError(
                "jacobi did not converge in {} sweeps (off-diagonal {:.3e})".format(
                    max_sweeps, off)
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > negligible:
                    _rotate(a, v, p, q)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def general_eig(a, cond_limit=CONDITION_LIMIT):
    """
    Eigendecomposition ``a = V diag(w) V^-1`` of a general real or complex square matrix.

    :return: ``(w, V, V^-1)`` as complex arrays, ordered by descending real part and then by
        descending imaginary part
    :raises DefectiveMatrixError: if ``cond(V)`` exceeds ``cond_limit``; use the sequential
        implementation for such weights
    """
    a = _square(a, dtype=np.complex128 if np.iscomplexobj(a) else np.float64)
    w, v = np.linalg.eig(a)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > cond_limit:
        raise DefectiveMatrixError(
            "eigenvector matrix is ill-conditioned (cond={:.3e} > {:.0e}); "
            "matrix is near-defective, use the sequential implementation".format(cond, cond_limit)
        )
    order = np.lexsort((-w.imag, -w.real))
    w = w[order].astype(np.complex128)
    v = v[:, order].astype(np.complex128)
    return w, v, np.linalg.inv(v)


def spectral_norm(a, tol=POWER_TOL, max_iter=POWER_ITERATIONS, seed=0):
    """
    Largest singular value of ``a`` by power iteration on ``a^H a``.

    :param tol: stop when successive estimates of the top eigenvalue of ``a^H a`` agree within
        this relative tolerance
    :param max_iter: iteration budget; the last estimate is returned when it runs out
    """
    a = np.asarray(a)
    if a.size == 0 or not np.any(a):
        return 0.0
    gram = a.conj().T @ a
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(gram.shape[0])
    if np.iscomplexobj(gram):
        x = x + 1j * rng.standard_normal(gram.shape[0])
    x /= np.linalg.norm(x)

    estimate = 0.0
    for _ in range(max_iter):
        y = gram @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        converged = abs(norm - estimate) <= tol * norm
        estimate = norm
        if converged:
            break
    return float(np.sqrt(estimate))


def mat_power(a, t):
    """``a`` to the non-negative integer power ``t`` by repeated squaring; ``t = 0`` gives I."""
    if int(t) != t or t < 0:
        raise ValueError("matrix power must be a non-negative integer, got {}".format(t))
    return np.linalg.matrix_power(np.asarray(a), int(t))


def frobenius_norm(a):
    return float(np.linalg.norm(np.ravel(a)))


def rho(a):
    """Spectral radius of a symmetric matrix."""
    eigenvalues, _ = sym_eig(a)
    return float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
