"""Small dense linear algebra: pivoted elimination and Jacobi eigensolver."""

import numpy as np


def solve_pivoted(a, b):
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    Raises ``ZeroDivisionError`` if a pivot is exactly zero; callers are
    expected to screen conditioning beforehand.
    """
    a = np.array(a, dtype=float)
    x = np.array(b, dtype=float)
    n = len(x)
    for k in range(n - 1):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0.0:
            raise ZeroDivisionError("singular matrix")
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        for i in range(k + 1, n):
            lam = a[i, k] / a[k, k]
            if lam != 0.0:
                a[i, k:] -= lam * a[k, k:]
                x[i] -= lam * x[k]
    if a[n - 1, n - 1] == 0.0:
        raise ZeroDivisionError("singular matrix")
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def jacobi_eigh(a, tol=1e-18, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    An off-diagonal entry is treated as zero once it is below machine epsilon
    relative to its two diagonal entries, or below ``tol * max(1, |a|_F)``;
    iteration stops after a sweep that needs no rotation.

    Returns:
        (eigenvalues, eigenvectors) sorted by descending eigenvalue; column
        ``j`` of ``eigenvectors`` belongs to ``eigenvalues[j]``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    floor = tol * max(1.0, np.linalg.norm(a))
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= max(floor, eps * np.sqrt(abs(a[p, p] * a[q, q]))):
                    continue
                rotated = True
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def canonical_sign(v, tol=1e-12):
    """Flip ``v`` so that its first nonzero entry is positive.

    Entries below ``tol * max|v|`` count as zero so rounding noise cannot
    decide the orientation.
    """
    v = np.asarray(v, dtype=float)
    nz = np.flatnonzero(np.abs(v) > tol * np.abs(v).max(initial=0.0))
    if nz.size and v[nz[0]] < 0:
        return -v
    return v.copy()
