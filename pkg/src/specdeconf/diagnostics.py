"""Checks of the theory on simulated data where the truth is known."""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from specdeconf.errors import NotPositiveDefinite, SingularCovariance
from specdeconf.spectral import thin_svd, trim_transform


def compatibility_lower_bound(Psi, Sigma_E):
    """Smallest eigenvalue of ``Lambda Sigma_E Lambda``.

    ``Lambda`` is diagonal with entries ``(||Psi_j||^2 + Sigma_E[j, j])^{-1/2}``,
    ``Psi_j`` the j-th column of ``Psi``. The result lower-bounds the
    population compatibility constant for jointly Gaussian (H, E).
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    S = np.asarray(Sigma_E, dtype=float)
    if S.shape != (Psi.shape[1], Psi.shape[1]) or not np.allclose(S, S.T, rtol=0, atol=1e-12 * np.abs(S).max()):
        raise NotPositiveDefinite(f"Sigma_E must be symmetric p x p with p = {Psi.shape[1]}")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("Sigma_E is not positive definite") from None
    lam = 1.0 / np.sqrt(np.sum(Psi**2, axis=0) + np.diag(S))
    A = lam[:, None] * S * lam[None, :]
    return float(np.linalg.eigvalsh(A)[0])


def _is_diagonal(S):
    return not np.any(S - np.diag(np.diag(S)))


def best_linear_confounding(Psi, psi, Sigma_E):
    """``b = (Psi^T Psi + Sigma_E)^{-1} Psi^T psi``.

    Diagonal ``Sigma_E`` goes through the Woodbury identity (a q x q solve);
    otherwise a dense Cholesky solve is used.
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    psi = np.asarray(psi, dtype=float).ravel()
    S = np.asarray(Sigma_E, dtype=float)
    q, p = Psi.shape
    if q == 0 or not np.any(psi):
        return np.zeros(p)
    if _is_diagonal(S):
        s = np.diag(S)
        if np.any(s <= 0):
            raise SingularCovariance("Sigma_E has a non-positive diagonal entry")
        # (Psi^T Psi + S)^{-1} Psi^T = S^{-1} Psi^T (I + Psi S^{-1} Psi^T)^{-1}
        PsiS = Psi / s[None, :]
        M = np.eye(q) + PsiS @ Psi.T
        try:
            return PsiS.T @ np.linalg.solve(M, psi)
        except np.linalg.LinAlgError:
            raise SingularCovariance("I + Psi Sigma_E^{-1} Psi^T is singular") from None
    try:
        c = cho_factor(Psi.T @ Psi + S)
    except np.linalg.LinAlgError:
        raise SingularCovariance("Psi^T Psi + Sigma_E is not positive definite") from None
    return cho_solve(c, Psi.T @ psi)


def confounding_leakage(X, Psi, psi, Sigma_E, rho=0.5):
    """``(||X b||^2 / n, ||Q X b||^2 / n)`` with Q the trim transform of X."""
    X = np.asarray(X, dtype=float)
    b = best_linear_confounding(Psi, psi, Sigma_E)
    Xb = X @ b
    QXb = trim_transform(X, rho).apply(Xb)
    n = X.shape[0]
    return float(Xb @ Xb / n), float(QXb @ QXb / n)


def singular_values(X, center=False):
    X = np.asarray(X, dtype=float)
    if center:
        X = X - X.mean(axis=0)
    return thin_svd(X).d.copy()
