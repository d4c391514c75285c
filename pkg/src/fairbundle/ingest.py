"""Rating/metadata loaders, compatibility constructions and producer groups.

Three catalog recipes are provided: movies (release period + genre overlap),
venues (geographic distance) and products (co-purchase / co-view lists).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fairbundle.errors import DataError
from fairbundle.model import Catalog, Item
from fairbundle.relevance import RatingsTable

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
CATALOG_FORMAT_VERSION = 1

YELP_TYPES = ("Coffee", "Bar", "Brunch", "Italian", "Sandwich", "Meat", "Seafood",
              "Asian", "TexMex", "Vegetarian", "Healthy", "Sweet")
YELP_SMALL_CAPS = (2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 2, 1)
YELP_LARGE_CAPS = (3, 3, 2, 2, 2, 1, 1, 2, 1, 1, 3, 1)
AMAZON_COUNTRIES = ("China", "Japan", "South Korea", "USA")
AMAZON_N_TYPES = 62
MOVIELENS_VOTE_THRESHOLDS = (20_000,)
YELP_REVIEW_THRESHOLDS = (100, 500)


def amazon_type_caps(n_types: int = AMAZON_N_TYPES) -> tuple[int, ...]:
    return (1,) * n_types


# -- ratings ----------------------------------------------------------------

def load_ratings(path, delimiter: str = ",", max_malformed: float = 0.01) -> RatingsTable:
    """Read ``user,item,rating[,timestamp]`` records.

    A non-numeric rating in the first row marks a header and is skipped.
    Other malformed rows are counted; more than ``max_malformed`` of them
    (as a fraction of data rows) makes the file unusable.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    triples, bad, rows = [], 0, 0
    with fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) < 3:
                    raise ValueError
                rating = float(row[2])
                if not math.isfinite(rating):
                    raise ValueError
            except ValueError:
                if lineno == 0:
                    continue
                rows += 1
                bad += 1
                continue
            rows += 1
            triples.append((row[0].strip(), row[1].strip(), rating))
    if rows and bad / rows > max_malformed:
        raise DataError(f"{path}: {bad} of {rows} rows malformed")
    if bad:
        logger.warning("%s: skipped %d malformed rows", path, bad)
    table = RatingsTable.from_triples(triples)
    return replace(table, malformed=bad)


def filter_active_users(ratings: RatingsTable, min_count: int = 20) -> RatingsTable:
    """Keep users with strictly more than ``min_count`` ratings."""
    counts = Counter(ratings.users)
    keep = np.array([counts[u] > min_count for u in ratings.users], dtype=bool)
    return ratings.select(keep)


# -- metadata ----------------------------------------------------------------

@dataclass(frozen=True)
class ItemMetadata:
    id: str
    year: int | None = None
    genres: frozenset[str] = frozenset()
    location: tuple[float, float] | None = None
    popularity: int | None = None
    also_buy: tuple[str, ...] = ()
    also_view: tuple[str, ...] = ()
    country: str | None = None
    types: frozenset[str] = frozenset()
    city: str | None = None
    is_open: bool | None = None
    brand: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "genres", frozenset(self.genres))
        object.__setattr__(self, "types", frozenset(self.types))
        object.__setattr__(self, "also_buy", tuple(str(x) for x in self.also_buy))
        object.__setattr__(self, "also_view", tuple(str(x) for x in self.also_view))
        if self.location is not None:
            lat, lon = (float(v) for v in self.location)
            _check_coords(lat, lon)
            object.__setattr__(self, "location", (lat, lon))
        if self.popularity is not None and self.popularity < 0:
            raise ValueError(f"item {self.id}: negative popularity")

    @classmethod
    def from_record(cls, rec: dict) -> ItemMetadata:
        known = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in rec.items() if k in known}
        if "location" not in kw and "latitude" in rec and "longitude" in rec:
            kw["location"] = (rec["latitude"], rec["longitude"])
        if kw.get("year") is not None:
            kw["year"] = int(kw["year"])
        if kw.get("popularity") is not None:
            kw["popularity"] = int(kw["popularity"])
        return cls(**kw)


def load_metadata(path) -> list[ItemMetadata]:
    """Read line-delimited JSON item records; unknown keys are ignored."""
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    out.append(ItemMetadata.from_record(json.loads(line)))
                except (ValueError, TypeError) as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return out


def yelp_business_filter(meta: ItemMetadata, city: str = "Philadelphia", min_reviews: int = 20) -> bool:
    return bool(meta.is_open) and meta.city == city and (meta.popularity or 0) > min_reviews


def amazon_brand_filter(metas: Sequence[ItemMetadata], min_items: int = 30,
                        countries: Sequence[str] = AMAZON_COUNTRIES) -> list[ItemMetadata]:
    """Items of brands with more than ``min_items`` products from the given countries."""
    per_brand = Counter(m.brand for m in metas if m.brand is not None)
    return [m for m in metas
            if m.brand is not None and per_brand[m.brand] > min_items and m.country in countries]


# -- compatibility -------------------------------------------------------------

def jaccard(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def movie_compatibility(a: ItemMetadata, b: ItemMetadata) -> float:
    """Half period similarity ``exp(-|dyear|/10)``, half genre Jaccard."""
    if a.year is None or b.year is None or not a.genres or not b.genres:
        raise DataError(f"movies {a.id}, {b.id} need both a year and genres")
    return 0.5 * math.exp(-abs(a.year - b.year) / 10.0) + 0.5 * jaccard(a.genres, b.genres)


def _check_coords(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"coordinates out of range: ({lat}, {lon})")


def haversine_km(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Great-circle distance in km between two (latitude, longitude) points in degrees."""
    for lat, lon in (p, q):
        _check_coords(lat, lon)
    phi1, phi2 = math.radians(p[0]), math.radians(q[0])
    dphi = phi2 - phi1
    dlmb = math.radians(q[1] - p[1])
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix(coords: np.ndarray) -> np.ndarray:
    lat = np.radians(coords[:, 0])[:, None]
    lon = np.radians(coords[:, 1])[:, None]
    h = (np.sin((lat - lat.T) / 2) ** 2
         + np.cos(lat) * np.cos(lat.T) * np.sin((lon - lon.T) / 2) ** 2)
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return (d + d.T) / 2.0


def venue_compatibility(a: ItemMetadata, b: ItemMetadata) -> float:
    if a.location is None or b.location is None:
        raise DataError(f"venues {a.id}, {b.id} need locations")
    return math.exp(-haversine_km(a.location, b.location) / 3.0)


@dataclass
class CopurchaseTable:
    compat: np.ndarray
    dropped: int = 0


def copurchase_compatibility(metas: Sequence[ItemMetadata]) -> CopurchaseTable:
    """Directed scores (1 for also-buy, 0.5 for also-view), averaged with the
    transpose and divided by the largest symmetric value."""
    index = {m.id: n for n, m in enumerate(metas)}
    raw = np.zeros((len(metas), len(metas)))
    dropped = 0
    for n, m in enumerate(metas):
        for score, related in ((0.5, m.also_view), (1.0, m.also_buy)):
            for other in related:
                j = index.get(other)
                if j is None:
                    dropped += 1
                elif j != n:
                    raw[n, j] = max(raw[n, j], score)
    if dropped:
        logger.info("dropped %d co-interaction references to unknown items", dropped)
    sym = (raw + raw.T) / 2.0
    top = sym.max() if sym.size else 0.0
    if top > 0:
        sym /= top
    return CopurchaseTable(sym, dropped)


# -- producer groups -------------------------------------------------------------

def assign_groups_by_popularity(metas: Sequence[ItemMetadata], thresholds: Sequence[int]) -> list[int]:
    """Group 0 holds items strictly above the highest cutoff, the last group
    those at or below the lowest one."""
    cuts = sorted(thresholds)
    groups = []
    for m in metas:
        if m.popularity is None:
            raise DataError(f"item {m.id} has no popularity count")
        groups.append(sum(1 for t in cuts if m.popularity <= t))
    return groups


def assign_groups_by_tag(metas: Sequence[ItemMetadata], tag_order: Sequence[str]) -> list[int]:
    position = {t: n for n, t in enumerate(tag_order)}
    groups = []
    for m in metas:
        if m.country not in position:
            raise DataError(f"item {m.id}: tag {m.country!r} not in {tuple(tag_order)}")
        groups.append(position[m.country])
    return groups


# -- catalog recipes ---------------------------------------------------------------

@dataclass
class IngestReport:
    kept: int = 0
    dropped: list[str] = field(default_factory=list)
    unknown_types: int = 0
    dropped_references: int = 0


def _type_index(metas, type_names):
    lookup = {t: n for n, t in enumerate(type_names)}
    unknown = 0
    types = []
    for m in metas:
        known = {lookup[t] for t in m.types if t in lookup}
        unknown += len(m.types) - len(known)
        types.append(frozenset(known))
    return types, unknown


def _assemble(metas, groups, types, n_groups, n_types, compat) -> Catalog:
    items = tuple(Item(n, g, t) for n, (g, t) in enumerate(zip(groups, types)))
    compat = np.clip(compat, 0.0, 1.0)
    return Catalog(items, n_groups, n_types, compat, tuple(m.id for m in metas))


def movielens_catalog(metas: Sequence[ItemMetadata],
                      thresholds: Sequence[int] = MOVIELENS_VOTE_THRESHOLDS) -> tuple[Catalog, IngestReport]:
    """Movies lacking a year or genres are dropped and listed in the report."""
    report = IngestReport()
    kept = []
    for m in metas:
        if m.year is None or not m.genres:
            report.dropped.append(m.id)
        else:
            kept.append(m)
    if report.dropped:
        logger.warning("dropped %d movies without year/genre metadata", len(report.dropped))
    years = np.array([m.year for m in kept], dtype=float)
    vocab = sorted(set().union(*(m.genres for m in kept))) if kept else []
    onehot = np.array([[g in m.genres for g in vocab] for m in kept], dtype=float).reshape(len(kept), len(vocab))
    inter = onehot @ onehot.T
    sizes = onehot.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    jac = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    compat = 0.5 * np.exp(-np.abs(years[:, None] - years[None, :]) / 10.0) + 0.5 * jac
    groups = assign_groups_by_popularity(kept, thresholds)
    report.kept = len(kept)
    cat = _assemble(kept, groups, [frozenset()] * len(kept), len(thresholds) + 1, 0, compat)
    return cat, report


def yelp_catalog(metas: Sequence[ItemMetadata], thresholds: Sequence[int] = YELP_REVIEW_THRESHOLDS,
                 type_names: Sequence[str] = YELP_TYPES) -> tuple[Catalog, IngestReport]:
    report = IngestReport()
    missing = [m.id for m in metas if m.location is None]
    if missing:
        raise DataError(f"{len(missing)} venues lack a location, e.g. {missing[0]}")
    coords = np.array([m.location for m in metas], dtype=float).reshape(len(metas), 2)
    compat = np.exp(-haversine_matrix(coords) / 3.0)
    groups = assign_groups_by_popularity(metas, thresholds)
    types, report.unknown_types = _type_index(metas, type_names)
    report.kept = len(metas)
    return _assemble(metas, groups, types, len(thresholds) + 1, len(type_names), compat), report


def amazon_catalog(metas: Sequence[ItemMetadata], countries: Sequence[str] = AMAZON_COUNTRIES,
                   type_names: Sequence[str] | None = None) -> tuple[Catalog, IngestReport]:
    report = IngestReport()
    if type_names is None:
        type_names = sorted(set().union(*(m.types for m in metas))) if metas else []
    table = copurchase_compatibility(metas)
    report.dropped_references = table.dropped
    groups = assign_groups_by_tag(metas, countries)
    types, report.unknown_types = _type_index(metas, type_names)
    report.kept = len(metas)
    return _assemble(metas, groups, types, len(countries), len(type_names), table.compat), report


# -- catalog archive ------------------------------------------------------------------

def save_catalog(catalog: Catalog, path) -> None:
    """Write a self-describing ``.npz`` archive (lossless round trip)."""
    indptr = np.zeros(len(catalog) + 1, dtype=np.int64)
    indices = []
    for it in catalog.items:
        ts = sorted(it.types)
        indices.extend(ts)
        indptr[it.id + 1] = indptr[it.id] + len(ts)
    np.savez_compressed(
        path,
        format_version=np.int64(CATALOG_FORMAT_VERSION),
        n_groups=np.int64(catalog.n_groups),
        n_types=np.int64(catalog.n_types),
        groups=np.asarray(catalog.groups),
        type_indptr=indptr,
        type_indices=np.asarray(indices, dtype=np.int64),
        compat=catalog.compat,
        keys=np.array(catalog.keys if catalog.keys is not None else [], dtype=str),
        has_keys=np.bool_(catalog.keys is not None),
    )


def load_catalog(path) -> Catalog:
    try:
        z = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read catalog archive {path}: {exc}") from exc
    with z:
        version = int(z["format_version"])
        if version != CATALOG_FORMAT_VERSION:
            raise DataError(f"unsupported catalog format version {version}")
        indptr, indices = z["type_indptr"], z["type_indices"]
        items = tuple(
            Item(n, int(g), frozenset(int(t) for t in indices[indptr[n]:indptr[n + 1]]))
            for n, g in enumerate(z["groups"])
        )
        keys = tuple(str(k) for k in z["keys"]) if bool(z["has_keys"]) else None
        return Catalog(items, int(z["n_groups"]), int(z["n_types"]), z["compat"], keys)
