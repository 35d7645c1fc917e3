"""Two-covariance PLDA: estimation, adaptation, PCA projection, pair scoring.

The model says ``x = m + y + e`` with speaker variable ``y ~ N(0, between)``
and residual ``e ~ N(0, within)``. The pair score is the log-likelihood ratio
of "same speaker" against "different speakers".
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import FormatError, check_symmetric, check_vectors

SYM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PldaModel:
    """PLDA parameters.

    Attributes
    ----------
    mean : ndarray of shape (dim,)
    between : ndarray of shape (dim, dim)
        Speaker (between-class) covariance, symmetric PSD.
    within : ndarray of shape (dim, dim)
        Residual (within-class) covariance, symmetric PD.
    """

    mean: np.ndarray
    between: np.ndarray
    within: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        d = len(mean)
        B = check_symmetric(self.between, tol=SYM_TOL, name="between")
        W = check_symmetric(self.within, tol=SYM_TOL, name="within")
        if B.shape != (d, d) or W.shape != (d, d):
            raise ValueError("covariance shapes do not match mean")
        B = (B + B.T) / 2
        W = (W + W.T) / 2
        lam, V = np.linalg.eigh(B)
        if lam.size and lam.min() < 0:
            if lam.min() < -1e-10 * max(1.0, abs(lam.max())):
                raise ValueError("between-class covariance is not PSD")
            B = (V * np.clip(lam, 0, None)) @ V.T
            B = (B + B.T) / 2
        if d and np.linalg.eigvalsh(W).min() <= 0:
            raise ValueError("within-class covariance is not positive definite")
        for name, arr in (("mean", mean), ("between", B), ("within", W)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self):
        return len(self.mean)

    @property
    def total(self):
        return self.between + self.within


def _ridge_eps(C):
    return 1e-6 * np.trace(C) / C.shape[0]


def plda_estimate(X, y):
    """Moment-based estimate from labelled vectors.

    ``between`` is the count-weighted scatter of class means and ``within``
    the pooled scatter around class means, both divided by N. A singular
    ``within`` gets a ridge of ``1e-6 * trace(total) / dim``.
    """
    X = check_vectors(X, name="X")
    y = np.asarray(y)
    if len(y) != len(X):
        raise ValueError("X and y differ in length")
    classes, inv = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("PLDA estimation needs at least two classes")
    n, d = X.shape
    if n < d + 1:
        warnings.warn(f"only {n} vectors for dimension {d}; estimates will be poor",
                      stacklevel=2)
    mu = X.mean(axis=0)
    counts = np.bincount(inv).astype(np.float64)
    means = np.zeros((len(classes), d))
    np.add.at(means, inv, X)
    means /= counts[:, None]
    Dm = means - mu
    between = (Dm * counts[:, None]).T @ Dm / n
    R = X - means[inv]
    within = R.T @ R / n
    within = (within + within.T) / 2
    between = (between + between.T) / 2
    w = np.linalg.eigvalsh(within)
    if w.min() <= 1e-10 * max(w.max(), 0.0):
        within = within + _ridge_eps(within + between) * np.eye(d)
    return PldaModel(mu, between, within)


def _joint_diagonalizer(model):
    """Return ``(V, psi)`` with ``V.T within V = I`` and ``V.T between V = diag(psi)``."""
    try:
        psi, V = scipy.linalg.eigh(model.between, model.within)
    except np.linalg.LinAlgError:
        raise ValueError("within-class covariance is not positive definite") from None
    return V, np.clip(psi, 0.0, None)


def plda_adapt(model, X, within_frac=0.75):
    """Absorb excess variance of unlabelled data into the model.

    In the basis where ``within = I`` and ``between = diag(psi)``, the excess
    ``max(0, T_ii - (1 + psi_i))`` of the adaptation data's total covariance
    ``T`` is split: ``within_frac`` to ``within``, the rest to ``between``.
    The mean is left unchanged.
    """
    if not 0.0 <= within_frac <= 1.0:
        raise ValueError("within_frac must be in [0, 1]")
    X = check_vectors(X, min_samples=2, dim=model.dim, name="X")
    V, psi = _joint_diagonalizer(model)
    U = (X - X.mean(axis=0)) @ V
    T_diag = np.einsum("ij,ij->j", U, U) / len(U)
    excess = np.clip(T_diag - (1.0 + psi), 0.0, None)
    Vinv = np.linalg.inv(V)
    dw = (Vinv.T * (within_frac * excess)) @ Vinv
    db = (Vinv.T * ((1.0 - within_frac) * excess)) @ Vinv
    within = model.within + (dw + dw.T) / 2
    between = model.between + (db + db.T) / 2
    return PldaModel(model.mean, between, within)


def plda_project(model, proj):
    """Map the model into a PCA subspace by congruence with its basis."""
    if proj.dim != model.dim:
        raise ValueError(f"projection expects dim {proj.dim}, model has {model.dim}")
    P = proj.basis
    mean = P @ (model.mean - proj.mean)
    between = P @ model.between @ P.T
    within = P @ model.within @ P.T
    return PldaModel(mean, (between + between.T) / 2, (within + within.T) / 2)


def plda_score_pairs(model, X):
    """Pairwise same-vs-different speaker log-likelihood ratios.

    Returns an ``(n, n)`` symmetric matrix. Computed in the jointly
    diagonalizing basis, where each coordinate contributes independently.
    """
    X = check_vectors(X, dim=model.dim, name="X")
    try:
        np.linalg.cholesky(model.total)
    except np.linalg.LinAlgError:
        raise ValueError("total covariance is not positive definite") from None
    V, psi = _joint_diagonalizer(model)
    U = (X - model.mean) @ V
    t = 1.0 + psi
    det = 1.0 + 2.0 * psi
    const = float(np.sum(np.log(t) - 0.5 * np.log(det)))
    sq_coef = -0.5 * (t / det - 1.0 / t)
    cross_coef = psi / det
    q = (U * U) @ sq_coef
    S = (U * cross_coef) @ U.T
    S += q[:, None]
    S += q[None, :]
    S += const
    return (S + S.T) / 2


class PLDA(BaseEstimator):
    """scikit-learn style wrapper: ``fit(X, y)``, ``adapt(X)``, ``score_pairs(X)``.

    Parameters
    ----------
    within_frac : float, default=0.75
        Share of adaptation excess variance given to the within-class term.
    """

    def __init__(self, within_frac=0.75):
        self.within_frac = within_frac

    def fit(self, X, y):
        self.model_ = plda_estimate(X, y)
        self.n_features_in_ = self.model_.dim
        return self

    def adapt(self, X):
        check_is_fitted(self, "model_")
        self.model_ = plda_adapt(self.model_, X, self.within_frac)
        return self

    def score_pairs(self, X):
        check_is_fitted(self, "model_")
        return plda_score_pairs(self.model_, X)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(row):
    return " ".join(repr(float(x)) for x in row)


def serialize_plda(model):
    lines = ["#plda v1", f"dim {model.dim}", "mean " + _fmt(model.mean), "between"]
    lines += [_fmt(r) for r in model.between]
    lines.append("within")
    lines += [_fmt(r) for r in model.within]
    return "\n".join(lines) + "\n"


def parse_plda(text):
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]

    def fail(msg, i):
        raise FormatError(msg, i + 1)

    if not lines or lines[0] != "#plda v1":
        fail("expected '#plda v1' header", 0)
    try:
        key, d = lines[1].split()
        d = int(d)
        if key != "dim" or d < 1:
            raise ValueError
    except (ValueError, IndexError):
        fail("expected 'dim <d>'", 1)
    if len(lines) != 5 + 2 * d:
        fail(f"expected {5 + 2 * d} non-empty lines, got {len(lines)}", len(lines) - 1)

    def floats(i, n):
        try:
            vals = [float(x) for x in lines[i].split()]
        except ValueError:
            fail("bad number", i)
        if len(vals) != n:
            fail(f"expected {n} values, got {len(vals)}", i)
        return vals

    if not lines[2].startswith("mean "):
        fail("expected 'mean ...'", 2)
    lines[2] = lines[2][5:]
    mean = floats(2, d)
    if lines[3] != "between":
        fail("expected 'between'", 3)
    between = [floats(4 + i, d) for i in range(d)]
    if lines[4 + d] != "within":
        fail("expected 'within'", 4 + d)
    within = [floats(5 + d + i, d) for i in range(d)]
    try:
        return PldaModel(np.array(mean), np.array(between), np.array(within))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
