"""scikit-learn style wrappers around pool generation and diverse selection."""
from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .construction import Tour
from .dispersion import cost_filter, greedy_select, SolutionPool
from .instance import Instance, normalize
from .pipeline import METHODS, generate_pool
from .policy import GraphPointerPolicy
from .reference import ReferenceCost
from .training import TrainConfig, train


def as_instance(X, name: str = "input") -> Instance:
    """Accept an ``Instance`` or an ``(n, 2)`` coordinate array.

    Arrays outside the unit square are rescaled with one global factor.
    """
    if isinstance(X, Instance):
        return X
    coords = check_array(X, dtype=np.float64, ensure_min_samples=3)
    if coords.shape[1] != 2:
        raise ValueError(f"expected (n, 2) coordinates, got shape {coords.shape}")
    inst = Instance(name, coords)
    if coords.min() < 0 or coords.max() > 1:
        inst = normalize(inst)
    return inst


class DiverseTourGenerator(BaseEstimator):
    """Train the tree (and matching) policy, then sample tour pools.

    ``fit`` ignores ``X``: the policies are trained on fresh random instances
    of size ``n_train``. ``sample``/``transform`` produce ``n_samples`` tours
    for a given instance.
    """

    def __init__(
        self,
        method: str = "gpn-tree",
        alpha: float = 0.0,
        n_train: int = 40,
        epochs: int = 100,
        steps_per_epoch: int = 1000,
        batch_size: Optional[int] = None,
        learning_rate: float = 5e-4,
        hidden_dim: int = 128,
        n_layers: int = 3,
        n_samples: int = 1000,
        fanout: int = 1,
        dtype: str = "float32",
        random_state: int = 0,
    ):
        self.method = method
        self.alpha = alpha
        self.n_train = n_train
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.n_samples = n_samples
        self.fanout = fanout
        self.dtype = dtype
        self.random_state = random_state

    def _config(self, mode: str) -> TrainConfig:
        n_train = self.n_train
        if mode == "matching" and n_train % 2:
            n_train += 1
        return TrainConfig(
            mode=mode, n_train=n_train, epochs=self.epochs, steps_per_epoch=self.steps_per_epoch,
            batch_size=self.batch_size, learning_rate=self.learning_rate, alpha=self.alpha,
            seed=self.random_state, hidden_dim=self.hidden_dim, n_layers=self.n_layers, dtype=self.dtype,
        )

    def fit(self, X=None, y=None):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        self.tree_policy_, self.tree_report_ = train(self._config("tree"))
        self.matching_policy_ = None
        if self.method == "gpn-treem":
            self.matching_policy_, self.matching_report_ = train(self._config("matching"))
        return self

    @classmethod
    def from_policies(cls, tree_policy: GraphPointerPolicy, matching_policy: Optional[GraphPointerPolicy] = None, **params):
        """An already fitted generator built from trained policies."""
        if matching_policy is not None:
            params.setdefault("method", "gpn-treem")
        est = cls(**params)
        est.tree_policy_ = tree_policy
        est.matching_policy_ = matching_policy
        return est

    def sample(self, X, n_samples: Optional[int] = None, seed: Optional[int] = None) -> List[Tour]:
        check_is_fitted(self, "tree_policy_")
        inst = as_instance(X)
        res = generate_pool(
            inst, self.tree_policy_, self.method, n_samples or self.n_samples,
            self.random_state if seed is None else seed, self.matching_policy_, self.fanout,
        )
        self.timings_ = res.timings
        return res.tours

    def transform(self, X) -> np.ndarray:
        """Tour vertex orders, shape ``(n_samples, n)``."""
        return np.array([t.order for t in self.sample(X)], dtype=np.int64)


class DiverseTourSelector(TransformerMixin, BaseEstimator):
    """Cost filter followed by greedy dispersion selection of ``k`` tours.

    ``fit(tours, reference=...)`` keeps tours with cost ``<= c * reference``
    (no filtering when ``reference`` is None) and selects ``k`` distinct tours.
    """

    def __init__(self, k: int = 30, c: float = 2.0, first: str = "index", random_state: int = 0):
        self.k = k
        self.c = c
        self.first = first
        self.random_state = random_state

    def fit(self, X: Sequence[Tour], y=None, reference=None):
        tours = list(X)
        if not tours or not all(isinstance(t, Tour) for t in tours):
            raise ValueError("X must be a non-empty sequence of Tour objects")
        if reference is not None:
            if not isinstance(reference, ReferenceCost):
                reference = ReferenceCost(float(reference), "registry")
            filtered = cost_filter(SolutionPool("", tours, reference), self.c).tours
        else:
            filtered = tours
        self.n_filtered_ = len(filtered)
        res = greedy_select(filtered, self.k, np.random.default_rng(self.random_state), first=self.first)
        self.selected_ = res.selected
        self.avg_jaccard_ = res.avg_jaccard
        self.std_jaccard_ = res.std_jaccard
        self.mean_cost_ = res.mean_cost
        return self

    def transform(self, X=None) -> np.ndarray:
        check_is_fitted(self, "selected_")
        return np.array([t.order for t in self.selected_], dtype=np.int64)

    def fit_transform(self, X, y=None, reference=None):
        return self.fit(X, y, reference=reference).transform(X)
