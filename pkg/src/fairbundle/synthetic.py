"""Random catalogs for simulations and property tests."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from fairbundle.model import Catalog, Item


def synthetic_catalog(
    n_items: int,
    n_groups: int = 2,
    n_types: int = 0,
    group_shares: Sequence[float] | None = None,
    type_prob: float = 0.7,
    length_scale: float = 0.3,
    seed=None,
) -> Catalog:
    """Catalog with items scattered in the unit square.

    Compatibility decays with distance, ``exp(-d / length_scale)``.  Groups are
    filled according to ``group_shares`` (uniform by default) and each item
    gets one random type with probability ``type_prob`` when ``n_types > 0``.
    """
    rng = np.random.default_rng(seed)
    shares = np.full(n_groups, 1.0 / n_groups) if group_shares is None else np.asarray(group_shares, float)
    sizes = np.floor(shares / shares.sum() * n_items).astype(int)
    sizes[: n_items - sizes.sum()] += 1
    groups = np.repeat(np.arange(n_groups), sizes)
    rng.shuffle(groups)

    items = []
    for i, g in enumerate(groups):
        types = frozenset()
        if n_types and rng.random() < type_prob:
            types = frozenset({int(rng.integers(n_types))})
        items.append(Item(i, int(g), types))

    pos = rng.random((n_items, 2))
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    compat = np.exp(-dist / length_scale)
    compat = (compat + compat.T) / 2.0
    keys = tuple(f"item{i}" for i in range(n_items))
    return Catalog(tuple(items), n_groups, n_types, compat, keys)
