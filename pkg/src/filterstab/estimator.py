"""scikit-learn style wrapper around the filter recursion.

``BayesFilter`` treats each row of ``X`` as one observation path
``Y_0..Y_n`` (``Y_0 = 0``). ``fit`` only validates and freezes the model and
prior (there is nothing to learn), ``transform`` returns posterior means and
``predict`` the final-step posterior mean per path.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_observation_path
from .filtering import discretize, run_filter
from .models import GridSpec
from .stability import _prior_weights


class BayesFilter(TransformerMixin, BaseEstimator):
    """Exact (finite) or grid (continuous) Bayes filter started from ``prior``.

    Parameters
    ----------
    model : HmmModel
        Finite model, or a continuous AR(1) model together with ``grid``.
    prior : distribution, optional
        Initial law of the filter; defaults to the model's own prior.
    grid : GridSpec or (lo, hi, cells), optional
        Discretization for continuous models.
    """

    def __init__(self, model=None, prior=None, grid=None):
        self.model = model
        self.prior = prior
        self.grid = grid

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("BayesFilter needs a model")
        model = self.model
        if model.states is None:
            if self.grid is None:
                raise ValueError("continuous models need a grid")
            gs = self.grid if isinstance(self.grid, GridSpec) else GridSpec(*self.grid)
            model = discretize(model, gs)
        prior = model.nu if self.prior is None else self.prior
        self.model_ = model
        self.prior_ = _prior_weights(model, prior)
        self.n_states_ = len(model.states)
        return self

    def _paths(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float, ensure_min_features=2)
        for row in X:
            check_observation_path(row)
        return X

    def trajectories(self, X):
        return [run_filter(self.model_, self.prior_, row) for row in self._paths(X)]

    def transform(self, X):
        """Posterior means ``E(X_k | Y_1..Y_k)`` for ``k = 0..n``, one row per path."""
        return np.stack([t.means for t in self.trajectories(X)])

    def predict(self, X):
        """Posterior mean at the last step of each path."""
        return self.transform(X)[:, -1]

    def score(self, X, y=None):
        """Average log-likelihood per path of the observations under the filter prior."""
        return float(np.mean([t.log_likelihood for t in self.trajectories(X)]))
