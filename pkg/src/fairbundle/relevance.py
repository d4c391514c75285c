"""Per-user relevance: biased matrix factorisation and a synthetic generator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from numba import njit

from fairbundle.errors import DataError, UnknownItemError
from fairbundle.model import Catalog, RelevanceView

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RatingsTable:
    """Explicit ratings with string user/item keys, one row per (user, item)."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    duplicates: int = 0
    malformed: int = 0

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[object, object, float]]) -> RatingsTable:
        """Deduplicate (user, item) pairs, keeping the last rating seen."""
        latest: dict[tuple[str, str], float] = {}
        duplicates = 0
        for u, i, r in triples:
            key = (str(u), str(i))
            if key in latest:
                duplicates += 1
                del latest[key]  # re-insert so row order follows the last write
            latest[key] = float(r)
        if duplicates:
            logger.warning("%d duplicate (user, item) ratings; kept the last one", duplicates)
        users = np.array([k[0] for k in latest], dtype=object)
        items = np.array([k[1] for k in latest], dtype=object)
        return cls(users, items, np.fromiter(latest.values(), dtype=float, count=len(latest)), duplicates)

    def __len__(self) -> int:
        return len(self.ratings)

    def user_keys(self) -> list[str]:
        return list(dict.fromkeys(self.users))

    def item_keys(self) -> list[str]:
        return list(dict.fromkeys(self.items))

    def select(self, mask: np.ndarray) -> RatingsTable:
        return RatingsTable(self.users[mask], self.items[mask], self.ratings[mask])


@dataclass(frozen=True)
class MFHyper:
    dim: int = 32
    epochs: int = 30
    lr: float = 0.005
    reg: float = 0.02
    init_std: float = 0.1
    seed: int = 0


@dataclass(eq=False)
class MFModel:
    user_keys: list[str]
    item_keys: list[str]
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_mean: float
    hyper: MFHyper = field(default_factory=MFHyper)
    rmse_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._uidx = {k: n for n, k in enumerate(self.user_keys)}
        self._iidx = {k: n for n, k in enumerate(self.item_keys)}

    def user_index(self, user) -> int:
        try:
            return self._uidx[str(user)]
        except KeyError:
            raise UnknownItemError(f"unknown user {user!r}") from None

    def item_index(self, item) -> int:
        try:
            return self._iidx[str(item)]
        except KeyError:
            raise UnknownItemError(f"unknown item {item!r}") from None

    def predict(self, user, item) -> float:
        u, i = self.user_index(user), self.item_index(item)
        return float(self.global_mean + self.user_bias[u] + self.item_bias[i]
                     + self.user_factors[u] @ self.item_factors[i])

    def predict_user(self, user) -> np.ndarray:
        """Predicted rating of every model item for one user."""
        u = self.user_index(user)
        return self.global_mean + self.user_bias[u] + self.item_bias + self.item_factors @ self.user_factors[u]

    def predict_matrix(self, users: Sequence | None = None, items: Sequence | None = None) -> np.ndarray:
        us = np.arange(len(self.user_keys)) if users is None else np.array([self.user_index(u) for u in users])
        its = np.arange(len(self.item_keys)) if items is None else np.array([self.item_index(i) for i in items])
        return (self.global_mean + self.user_bias[us][:, None] + self.item_bias[its][None, :]
                + self.user_factors[us] @ self.item_factors[its].T)

    def save(self, path) -> None:
        np.savez(
            path,
            user_keys=np.array(self.user_keys, dtype=str),
            item_keys=np.array(self.item_keys, dtype=str),
            user_factors=self.user_factors,
            item_factors=self.item_factors,
            user_bias=self.user_bias,
            item_bias=self.item_bias,
            global_mean=self.global_mean,
            hyper=np.array([self.hyper.dim, self.hyper.epochs, self.hyper.lr, self.hyper.reg,
                            self.hyper.init_std, self.hyper.seed], dtype=float),
            rmse_history=np.array(self.rmse_history, dtype=float),
        )

    @classmethod
    def load(cls, path) -> MFModel:
        with np.load(path, allow_pickle=False) as z:
            h = z["hyper"]
            hyper = MFHyper(int(h[0]), int(h[1]), float(h[2]), float(h[3]), float(h[4]), int(h[5]))
            return cls(
                [str(k) for k in z["user_keys"]],
                [str(k) for k in z["item_keys"]],
                z["user_factors"], z["item_factors"], z["user_bias"], z["item_bias"],
                float(z["global_mean"]), hyper, list(z["rmse_history"]),
            )


@njit(cache=True)
def _sgd_epoch(order, uidx, iidx, ratings, mu, bu, bi, P, Q, lr, reg):
    sq = 0.0
    dim = P.shape[1]
    for n in order:
        u = uidx[n]
        i = iidx[n]
        dot = 0.0
        for f in range(dim):
            dot += P[u, f] * Q[i, f]
        err = ratings[n] - (mu + bu[u] + bi[i] + dot)
        sq += err * err
        bu[u] += lr * (err - reg * bu[u])
        bi[i] += lr * (err - reg * bi[i])
        for f in range(dim):
            pu = P[u, f]
            qi = Q[i, f]
            P[u, f] += lr * (err * qi - reg * pu)
            Q[i, f] += lr * (err * pu - reg * qi)
    return sq


def train_mf(ratings: RatingsTable, hyper: MFHyper | None = None, **overrides) -> MFModel:
    """Biased MF fitted by SGD on squared error; deterministic given ``hyper.seed``."""
    hyper = hyper or MFHyper()
    if overrides:
        hyper = MFHyper(**{**hyper.__dict__, **overrides})
    if len(ratings) == 0:
        raise DataError("cannot train on an empty ratings table")
    user_keys, item_keys = ratings.user_keys(), ratings.item_keys()
    umap = {k: n for n, k in enumerate(user_keys)}
    imap = {k: n for n, k in enumerate(item_keys)}
    uidx = np.array([umap[u] for u in ratings.users], dtype=np.int64)
    iidx = np.array([imap[i] for i in ratings.items], dtype=np.int64)
    r = np.ascontiguousarray(ratings.ratings, dtype=np.float64)

    rng = np.random.default_rng(hyper.seed)
    P = rng.normal(0.0, hyper.init_std, (len(user_keys), hyper.dim))
    Q = rng.normal(0.0, hyper.init_std, (len(item_keys), hyper.dim))
    bu = np.zeros(len(user_keys))
    bi = np.zeros(len(item_keys))
    mu = float(r.mean())

    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(r))
        sq = _sgd_epoch(order, uidx, iidx, r, mu, bu, bi, P, Q, hyper.lr, hyper.reg)
        rmse = float(np.sqrt(sq / len(r)))
        if not np.isfinite(rmse):
            raise DataError(f"training diverged at epoch {epoch}; lower the learning rate")
        history.append(rmse)
        logger.debug("epoch %d: train RMSE %.4f", epoch, rmse)
    return MFModel(user_keys, item_keys, P, Q, bu, bi, mu, hyper, history)


def prediction_bounds(model: MFModel, users: Sequence | None = None,
                      items: Sequence | None = None) -> tuple[float, float]:
    """Global min and max prediction over the evaluation (user, item) grid."""
    pred = model.predict_matrix(users, items)
    return float(pred.min()), float(pred.max())


def top_m(model: MFModel, user, M: int, bounds: tuple[float, float],
          catalog: Catalog | None = None) -> RelevanceView:
    """The ``M`` highest-predicted items, min-max normalised with global bounds.

    With a catalog, candidates are the catalog items known to the model and the
    view refers to catalog handles; otherwise it refers to model item indices.
    """
    pred = model.predict_user(user)
    if catalog is not None:
        if catalog.keys is None:
            raise ValueError("catalog has no item keys to match against the model")
        known = [(h, model._iidx[k]) for h, k in enumerate(catalog.keys) if k in model._iidx]
        handles = np.array([h for h, _ in known], dtype=np.int64)
        pred = pred[[m for _, m in known]]
    else:
        handles = np.arange(len(pred))
    if M > len(pred):
        raise ValueError(f"M={M} exceeds the {len(pred)} available items")
    lo, hi = bounds
    span = hi - lo
    scores = np.clip((pred - lo) / span, 0.0, 1.0) if span > 0 else np.ones_like(pred)
    # descending prediction, ties by handle; rank on raw predictions
    order = np.lexsort((handles, -pred))[:M]
    return RelevanceView(user, tuple((int(handles[n]), float(scores[n])) for n in order))


def _skew_vector(skew, n_groups: int) -> np.ndarray:
    if np.isscalar(skew):
        offsets = np.zeros(n_groups)
        offsets[0] = float(skew)
    else:
        offsets = np.asarray(skew, dtype=float)
        if offsets.shape != (n_groups,):
            raise ValueError(f"skew needs {n_groups} entries")
    if offsets.min() < 0 or offsets.max() >= 1:
        raise ValueError("group offsets must lie in [0, 1)")
    return offsets


def synthetic_scores(catalog: Catalog, num_users: int, skew=0.0, seed=None,
                     item_weight: float = 0.5) -> np.ndarray:
    """(num_users, n_items) relevance matrix with a per-group mean offset.

    ``score = offset_k + (1 - max offset) * (w * item_base + (1 - w) * noise)``
    with item base and per-pair noise drawn from Beta(2, 2), so scores stay in
    [0, 1] without clipping and the gap between group means equals the gap
    between offsets.  A scalar ``skew`` boosts group 0 only.
    """
    offsets = _skew_vector(skew, catalog.n_groups)
    rng = np.random.default_rng(seed)
    base = rng.beta(2.0, 2.0, len(catalog))
    noise = rng.beta(2.0, 2.0, (num_users, len(catalog)))
    x = item_weight * base[None, :] + (1.0 - item_weight) * noise
    return offsets[catalog.groups][None, :] + (1.0 - offsets.max()) * x


def synthetic_relevance(catalog: Catalog, num_users: int, skew=0.0, seed=None,
                        M: int | None = None) -> Iterator[RelevanceView]:
    """Yield one relevance view per synthetic user (full catalog, or top ``M``)."""
    scores = synthetic_scores(catalog, num_users, skew, seed)
    for u, row in enumerate(scores):
        view = RelevanceView.from_scores(u, enumerate(row.tolist()))
        if M is not None:
            view = RelevanceView(u, view.entries[:M])
        yield view
