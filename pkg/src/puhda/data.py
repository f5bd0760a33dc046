"""Feature schemas, domain matrices, loading, splitting, aggregation, and the
synthetic benchmark generator.

A :class:`FeatureSchema` names three disjoint column groups: features shared
by both domains, features only the source domain observes, and features only
the target domain observes. A :class:`DomainMatrix` holds one domain's rows
as two blocks, ``[common | own-specific]``, plus hidden labels when the data
construction knows them. Hidden labels are evaluation-only: trainers never
see them, the harness uses them for validation, final scoring, and
analytics. Source matrices are positive-only by construction, which is the
defining constraint of the setting.

Matrices are float64 and immutable once built; serialization round-trips
bit-exactly through delimited text plus a JSON schema sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, InvalidInputError, SchemaError
from .numerics import derive_rng, require_finite

ROLES = ("source", "target")


@dataclass(frozen=True)
class FeatureSchema:
    """Named, disjoint feature groups shared between the two domains."""

    common: tuple[str, ...]
    source_specific: tuple[str, ...]
    target_specific: tuple[str, ...]
    label_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "common", tuple(self.common))
        object.__setattr__(self, "source_specific", tuple(self.source_specific))
        object.__setattr__(self, "target_specific", tuple(self.target_specific))
        groups = [self.common, self.source_specific, self.target_specific]
        flat = [name for g in groups for name in g]
        if len(set(flat)) != len(flat):
            raise SchemaError("feature groups must be disjoint with no duplicates")
        if self.label_column is not None and self.label_column in flat:
            raise SchemaError(f"label column {self.label_column!r} cannot also be a feature")

    @property
    def c(self) -> int:
        return len(self.common)

    @property
    def s(self) -> int:
        return len(self.source_specific)

    @property
    def t(self) -> int:
        return len(self.target_specific)

    def specific_for(self, role: str) -> tuple[str, ...]:
        _check_role(role)
        return self.source_specific if role == "source" else self.target_specific

    def require_heterogeneous(self) -> None:
        """Adaptation across feature spaces needs both specific blocks non-empty."""
        if self.s < 1 or self.t < 1:
            raise SchemaError(
                f"heterogeneous methods need source- and target-specific features, "
                f"got s={self.s}, t={self.t}"
            )

    def to_dict(self) -> dict:
        return {
            "common": list(self.common),
            "source_specific": list(self.source_specific),
            "target_specific": list(self.target_specific),
            "label_column": self.label_column,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            common=tuple(d["common"]),
            source_specific=tuple(d["source_specific"]),
            target_specific=tuple(d["target_specific"]),
            label_column=d.get("label_column"),
        )


def _check_role(role: str) -> None:
    if role not in ROLES:
        raise InvalidInputError(f"role must be one of {ROLES}, got {role!r}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


class DomainMatrix:
    """One domain's rows: a common block plus that domain's specific block.

    ``labels`` (0/1, 1 = positive) are hidden evaluation-only labels; a source
    matrix may only carry positive ones. ``aux_specific`` optionally holds the
    other domain's specific features for the same rows, when the data
    construction makes them observable; it exists purely for analytics and is
    never fed to a trainer.
    """

    def __init__(self, schema, role, common, specific, labels=None, aux_specific=None):
        _check_role(role)
        self.schema = schema
        self.role = role
        self.common = _readonly(require_finite("common block", common))
        self.specific = _readonly(require_finite("specific block", specific))
        if self.common.ndim != 2 or self.specific.ndim != 2:
            raise InvalidInputError("domain matrix blocks must be 2-D")
        if self.common.shape[0] != self.specific.shape[0]:
            raise InvalidInputError(
                f"block row mismatch: {self.common.shape[0]} vs {self.specific.shape[0]}"
            )
        if self.common.shape[1] != schema.c:
            raise SchemaError(
                f"common block has {self.common.shape[1]} columns, schema says {schema.c}"
            )
        own = len(schema.specific_for(role))
        if self.specific.shape[1] != own:
            raise SchemaError(
                f"{role}-specific block has {self.specific.shape[1]} columns, schema says {own}"
            )
        if labels is not None:
            lab = np.asarray(labels)
            if lab.shape != (self.common.shape[0],):
                raise InvalidInputError(
                    f"labels must be one per row, got shape {lab.shape}"
                )
            if not np.all(np.isin(lab, (0, 1))):
                raise InvalidInputError("labels must be 0 (negative) or 1 (positive)")
            lab = np.ascontiguousarray(lab, dtype=np.int8)
            if role == "source" and np.any(lab == 0):
                raise InvalidInputError("a source matrix can only carry positive labels")
            lab.setflags(write=False)
            self.labels = lab
        else:
            self.labels = None
        if aux_specific is not None:
            aux = _readonly(require_finite("aux block", aux_specific))
            other = len(schema.specific_for("target" if role == "source" else "source"))
            if aux.shape != (self.common.shape[0], other):
                raise SchemaError(
                    f"aux block shape {aux.shape} does not match ({self.common.shape[0]}, {other})"
                )
            self.aux_specific = aux
        else:
            self.aux_specific = None

    @property
    def n(self) -> int:
        return self.common.shape[0]

    def features(self) -> np.ndarray:
        """Rows in ``[common | own-specific]`` layout."""
        return np.hstack([self.common, self.specific])

    def select(self, indices) -> "DomainMatrix":
        idx = np.asarray(indices)
        return DomainMatrix(
            self.schema,
            self.role,
            self.common[idx],
            self.specific[idx],
            labels=None if self.labels is None else self.labels[idx],
            aux_specific=None if self.aux_specific is None else self.aux_specific[idx],
        )

    def without_labels(self) -> "DomainMatrix":
        return DomainMatrix(
            self.schema, self.role, self.common, self.specific, aux_specific=self.aux_specific
        )


# --------------------------------------------------------------------------
# CSV loading


def load_csv(path, schema: FeatureSchema, role: str, positive_value: str = "1") -> DomainMatrix:
    """Load one domain's rows from a delimited text file.

    The header must contain every common column and every ``role``-specific
    column; the label column is parsed when the schema declares it and the
    file has it (values equal to ``positive_value`` after trimming are
    positive). If the file also carries all of the other domain's specific
    columns they are loaded into the auxiliary analytics block.
    """
    _check_role(role)
    feature_cols = list(schema.common) + list(schema.specific_for(role))
    other_cols = list(schema.specific_for("target" if role == "source" else "source"))
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        positions = {}
        for col in feature_cols:
            if col not in header:
                raise SchemaError(f"{path}: missing schema column {col!r}")
            positions[col] = header.index(col)
        label_pos = None
        if schema.label_column is not None and schema.label_column in header:
            label_pos = header.index(schema.label_column)
        aux_positions = None
        if other_cols and all(col in header for col in other_cols):
            aux_positions = [header.index(col) for col in other_cols]

        rows: list[list[float]] = []
        aux_rows: list[list[float]] = []
        labels: list[int] = []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) < len(header):
                raise DataError(
                    f"{path}: row {row_idx} has {len(row)} cells, header has {len(header)}"
                )
            parsed = []
            for col in feature_cols:
                cell = row[positions[col]].strip()
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_idx}, column {col!r}: cannot parse {cell!r}"
                    ) from None
            rows.append(parsed)
            if aux_positions is not None:
                aux = []
                for col, pos in zip(other_cols, aux_positions):
                    cell = row[pos].strip()
                    try:
                        aux.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path}: row {row_idx}, column {col!r}: cannot parse {cell!r}"
                        ) from None
                aux_rows.append(aux)
            if label_pos is not None:
                labels.append(1 if row[label_pos].strip() == positive_value else 0)

    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.array(rows, dtype=np.float64)
    c = schema.c
    return DomainMatrix(
        schema,
        role,
        values[:, :c],
        values[:, c:],
        labels=np.array(labels, dtype=np.int8) if label_pos is not None else None,
        aux_specific=np.array(aux_rows, dtype=np.float64) if aux_positions is not None else None,
    )


# --------------------------------------------------------------------------
# Serialization


def save_domain_matrix(dm: DomainMatrix, path) -> None:
    """Write a matrix as delimited text plus a JSON schema sidecar.

    Floats are written with shortest round-trip formatting, so reloading
    gives bit-identical values.
    """
    path = Path(path)
    own_cols = list(dm.schema.common) + list(dm.schema.specific_for(dm.role))
    other_cols = list(dm.schema.specific_for("target" if dm.role == "source" else "source"))
    header = list(own_cols)
    if dm.aux_specific is not None:
        header += other_cols
    if dm.labels is not None:
        header.append(dm.schema.label_column or "label")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        feats = dm.features()
        for i in range(dm.n):
            row = [repr(float(v)) for v in feats[i]]
            if dm.aux_specific is not None:
                row += [repr(float(v)) for v in dm.aux_specific[i]]
            if dm.labels is not None:
                row.append(str(int(dm.labels[i])))
            writer.writerow(row)
    sidecar = {
        "format": 1,
        "role": dm.role,
        "schema": dm.schema.to_dict(),
        "has_labels": dm.labels is not None,
        "has_aux": dm.aux_specific is not None,
        "label_header": (dm.schema.label_column or "label") if dm.labels is not None else None,
    }
    Path(str(path) + ".schema.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_domain_matrix(path) -> DomainMatrix:
    """Reload a matrix written by :func:`save_domain_matrix`."""
    path = Path(path)
    sidecar_path = Path(str(path) + ".schema.json")
    if not sidecar_path.exists():
        raise DataError(f"{path}: missing schema sidecar {sidecar_path.name}")
    sidecar = json.loads(sidecar_path.read_text())
    schema = FeatureSchema.from_dict(sidecar["schema"])
    role = sidecar["role"]
    if sidecar["has_labels"]:
        label_header = sidecar["label_header"]
        schema_for_load = schema if schema.label_column else replace_schema_label(schema, label_header)
    else:
        schema_for_load = schema
    return load_csv(path, schema_for_load, role)


def replace_schema_label(schema: FeatureSchema, label_column: str | None) -> FeatureSchema:
    return FeatureSchema(
        schema.common, schema.source_specific, schema.target_specific, label_column
    )


# --------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/val/test fractions; stratified when labels exist."""

    train: float
    val: float
    test: float
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.val, self.test)
        if any(f <= 0 for f in fracs):
            raise ConfigurationError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must sum to 1, got {sum(fracs)}")


def split(dm: DomainMatrix, spec: SplitSpec) -> tuple[DomainMatrix, DomainMatrix, DomainMatrix]:
    """Partition rows into train/val/test.

    With hidden labels the shuffle is stratified per class so split label
    proportions track the full matrix; row order inside each split keeps the
    original ordering. Identical spec and matrix give identical splits.
    """
    rng = derive_rng(spec.seed, "split")
    if dm.labels is not None and len(np.unique(dm.labels)) > 1:
        class_pools = [np.flatnonzero(dm.labels == v) for v in (0, 1)]
    else:
        class_pools = [np.arange(dm.n)]
    picks: list[list[np.ndarray]] = [[], [], []]
    for pool in class_pools:
        perm = pool[rng.permutation(len(pool))]
        n_train = int(np.floor(spec.train * len(pool)))
        n_val = int(np.floor(spec.val * len(pool)))
        picks[0].append(perm[:n_train])
        picks[1].append(perm[n_train : n_train + n_val])
        picks[2].append(perm[n_train + n_val :])
    parts = []
    for name, groups in zip(("train", "val", "test"), picks):
        idx = np.sort(np.concatenate(groups))
        if idx.size == 0:
            raise ConfigurationError(f"split produced an empty {name} set (n={dm.n})")
        parts.append(dm.select(idx))
    return tuple(parts)


# --------------------------------------------------------------------------
# Standardization


@dataclass(frozen=True)
class ColumnStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def _fit_stats(values: np.ndarray) -> ColumnStats:
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)  # constant columns stay centered
    return ColumnStats(mean, std)


def standardize_splits(
    source: DomainMatrix,
    target_train: DomainMatrix,
    target_val: DomainMatrix,
    target_test: DomainMatrix,
) -> tuple[DomainMatrix, DomainMatrix, DomainMatrix, DomainMatrix]:
    """Z-score all matrices using training statistics only.

    Common columns pool source and target-train rows (the alignment methods
    compare domains on these columns, so both get the same affine map);
    specific columns use their own domain's training rows. Validation and
    test reuse the training statistics.
    """
    common_stats = _fit_stats(np.vstack([source.common, target_train.common]))
    source_spec_stats = _fit_stats(source.specific)
    target_spec_stats = _fit_stats(target_train.specific)

    def rebuild(dm: DomainMatrix) -> DomainMatrix:
        spec_stats = source_spec_stats if dm.role == "source" else target_spec_stats
        aux = None
        if dm.aux_specific is not None:
            aux_stats = target_spec_stats if dm.role == "source" else source_spec_stats
            aux = aux_stats.apply(dm.aux_specific)
        return DomainMatrix(
            dm.schema,
            dm.role,
            common_stats.apply(dm.common),
            spec_stats.apply(dm.specific),
            labels=dm.labels,
            aux_specific=aux,
        )

    return rebuild(source), rebuild(target_train), rebuild(target_val), rebuild(target_test)


# --------------------------------------------------------------------------
# Ratings aggregation


def load_ratings_file(path) -> list[tuple[str, str, float]]:
    """Read (user, item, rating) triples from a headered delimited file."""
    path = Path(path)
    triples = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        try:
            u_pos, i_pos, r_pos = header.index("user"), header.index("item"), header.index("rating")
        except ValueError:
            raise SchemaError(f"{path}: header must contain user, item, rating") from None
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                rating = float(row[r_pos].strip())
            except ValueError:
                raise DataError(
                    f"{path}: row {row_idx}: cannot parse rating {row[r_pos]!r}"
                ) from None
            triples.append((row[u_pos].strip(), row[i_pos].strip(), rating))
    return triples


def load_genre_file(path) -> dict[str, tuple[str, ...]]:
    """Read an item-to-genres map; genres are pipe-separated in column two."""
    path = Path(path)
    genres: dict[str, tuple[str, ...]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        for row in reader:
            if not row:
                continue
            names = tuple(g.strip() for g in row[1].split("|") if g.strip())
            genres[row[0].strip()] = names
    return genres


def aggregate_ratings(
    ratings,
    genres: dict,
    common_genres,
    target_genres,
    source_genres,
    label_genre: str,
    role: str,
) -> DomainMatrix:
    """Turn rating triples into per-user genre-preference features.

    A user's feature for genre g is the mean rating of their items carrying g
    minus their overall mean rating; users who rated no item of g get 0. The
    hidden label is positive when the user's label-genre feature is strictly
    above 0 (a tie is negative); the label genre is excluded from every
    feature block. Source-role output keeps only positive users, matching the
    positive-only source construction. Output row order is sorted by user id,
    so it does not depend on the order of the input triples. Both specific
    blocks are computed, the off-role one landing in the auxiliary analytics
    block.
    """
    _check_role(role)
    common_genres = tuple(common_genres)
    target_genres = tuple(target_genres)
    source_genres = tuple(source_genres)
    schema = FeatureSchema(common_genres, source_genres, target_genres, label_column=label_genre)
    if label_genre in common_genres + target_genres + source_genres:
        raise SchemaError(f"label genre {label_genre!r} must be excluded from the feature genres")

    by_user: dict[str, list[tuple[str, float]]] = {}
    for user, item, rating in ratings:
        if item not in genres:
            raise DataError(f"item {item!r} has no genre entry")
        if not genres[item]:
            raise DataError(f"item {item!r} has an empty genre list")
        by_user.setdefault(user, []).append((item, float(rating)))

    needed = common_genres + source_genres + target_genres + (label_genre,)
    users = sorted(by_user)
    feature_rows = []
    labels = []
    for user in users:
        entries = by_user[user]
        overall = sum(r for _, r in entries) / len(entries)
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        for item, rating in entries:
            for g in genres[item]:
                sums[g] = sums.get(g, 0.0) + rating
                counts[g] = counts.get(g, 0) + 1
        row = {}
        for g in needed:
            row[g] = (sums[g] / counts[g] - overall) if counts.get(g) else 0.0
        feature_rows.append(row)
        labels.append(1 if row[label_genre] > 0.0 else 0)
    if not feature_rows:
        raise DataError("no users with ratings to aggregate")

    def block(names):
        return np.array([[r[g] for g in names] for r in feature_rows], dtype=np.float64)

    common = block(common_genres)
    own = block(source_genres if role == "source" else target_genres)
    other = block(target_genres if role == "source" else source_genres)
    label_arr = np.array(labels, dtype=np.int8)
    dm = DomainMatrix(
        schema,
        role,
        common,
        own,
        labels=None,  # attached below, after source filtering
        aux_specific=other if other.shape[1] else None,
    )
    if role == "source":
        keep = np.flatnonzero(label_arr == 1)
        if keep.size == 0:
            raise DataError("no positive users for the source domain")
        dm = dm.select(keep)
        return DomainMatrix(
            schema, role, dm.common, dm.specific,
            labels=np.ones(keep.size, dtype=np.int8),
            aux_specific=dm.aux_specific,
        )
    return DomainMatrix(
        schema, role, dm.common, dm.specific, labels=label_arr, aux_specific=dm.aux_specific
    )


# --------------------------------------------------------------------------
# Synthetic benchmark generator


@dataclass(frozen=True)
class SyntheticSpec:
    """Controls for the synthetic two-domain benchmark.

    A latent vector carries one label coordinate (mean ``+-label_separation``)
    plus ``latent_noise_dim`` label-free coordinates shared by all blocks.
    Block signal weights scale how strongly each block loads on the latent
    label coordinate; ``coupling`` interpolates the target-specific block
    between a copy of its latent loading (1.0) and independent noise (0.0),
    which directly controls how much target-specific structure the source
    side can explain. ``noise_scale`` adds per-feature Gaussian noise.
    """

    c: int
    s: int
    t: int
    n_source: int
    n_target: int
    positive_ratio: float = 0.5
    signal_common: float = 0.5
    signal_source: float = 1.0
    signal_target: float = 1.0
    coupling: float = 0.9
    noise_scale: float = 0.5
    seed: int = 0
    latent_noise_dim: int = 3
    label_separation: float = 1.0

    def __post_init__(self):
        if min(self.c, self.s, self.t) < 1:
            raise ConfigurationError("c, s, t must all be >= 1")
        if self.n_source < 1 or self.n_target < 1:
            raise ConfigurationError("domain sizes must be >= 1")
        if not 0.0 < self.positive_ratio < 1.0:
            raise ConfigurationError("positive_ratio must be in (0, 1)")
        if not 0.0 <= self.coupling <= 1.0:
            raise ConfigurationError("coupling must be in [0, 1]")
        if self.noise_scale < 0:
            raise ConfigurationError("noise_scale must be >= 0")
        n_pos = round(self.positive_ratio * self.n_target)
        if n_pos < 10 or self.n_target - n_pos < 10:
            raise ConfigurationError(
                f"positive_ratio {self.positive_ratio} with n_target {self.n_target} "
                f"leaves a class under 10 samples"
            )


def _structure(spec: SyntheticSpec):
    """Fixed loading matrices, drawn independently of sample counts."""
    rng = derive_rng(spec.seed, "structure")
    k = spec.latent_noise_dim

    def unit(dim):
        v = rng.normal(size=dim)
        return v / np.linalg.norm(v)

    d_c = unit(spec.c)
    d_s = unit(spec.s)
    d_t = unit(spec.t)
    q_c = rng.normal(size=(k, spec.c)) / np.sqrt(k)
    q_s = rng.normal(size=(k, spec.s)) / np.sqrt(k)
    q_t = rng.normal(size=(k, spec.t)) / np.sqrt(k)
    return d_c, d_s, d_t, q_c, q_s, q_t


def _draw_blocks(spec: SyntheticSpec, u: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common, source-specific, and target-specific blocks for labels u in {-1,+1}."""
    d_c, d_s, d_t, q_c, q_s, q_t = _structure(spec)
    n = u.shape[0]
    k = spec.latent_noise_dim
    z0 = u * spec.label_separation + rng.normal(size=n)
    z_rest = rng.normal(size=(n, k))
    h = rng.normal(size=(n, spec.t))
    noise_c = rng.normal(size=(n, spec.c))
    noise_s = rng.normal(size=(n, spec.s))
    noise_t = rng.normal(size=(n, spec.t))
    latent_c = spec.signal_common * (np.outer(z0, d_c) + z_rest @ q_c)
    latent_s = spec.signal_source * (np.outer(z0, d_s) + z_rest @ q_s)
    latent_t = spec.signal_target * (np.outer(z0, d_t) + z_rest @ q_t)
    rho = spec.coupling
    common = latent_c + spec.noise_scale * noise_c
    source_spec = latent_s + spec.noise_scale * noise_s
    target_spec = rho * latent_t + np.sqrt(1.0 - rho * rho) * h + spec.noise_scale * noise_t
    return common, source_spec, target_spec


def generate_synthetic(spec: SyntheticSpec) -> tuple[DomainMatrix, DomainMatrix, float]:
    """Draw both domains plus the exact-rule oracle accuracy on held-out rows.

    The source matrix holds only positive rows. The target matrix carries
    hidden labels at exactly ``round(positive_ratio * n_target)`` positives
    and includes the auxiliary source-specific block for analytics. The
    returned float is the accuracy of the generative Bayes rule on the full
    target feature space, measured on an independent draw.
    """
    schema = FeatureSchema(
        common=tuple(f"com_{i}" for i in range(spec.c)),
        source_specific=tuple(f"src_{i}" for i in range(spec.s)),
        target_specific=tuple(f"tar_{i}" for i in range(spec.t)),
        label_column="label",
    )
    src_rng = derive_rng(spec.seed, "source-rows")
    u_src = np.ones(spec.n_source)
    common_s, spec_s, aux_t = _draw_blocks(spec, u_src, src_rng)
    source = DomainMatrix(
        schema, "source", common_s, spec_s,
        labels=np.ones(spec.n_source, dtype=np.int8),
        aux_specific=aux_t,
    )

    tgt_rng = derive_rng(spec.seed, "target-rows")
    n_pos = round(spec.positive_ratio * spec.n_target)
    y = np.zeros(spec.n_target, dtype=np.int8)
    y[:n_pos] = 1
    y = y[tgt_rng.permutation(spec.n_target)]
    u_tgt = 2.0 * y - 1.0
    common_t, aux_s, spec_t = _draw_blocks(spec, u_tgt, tgt_rng)
    target = DomainMatrix(
        schema, "target", common_t, spec_t, labels=y, aux_specific=aux_s
    )

    oracle = oracle_accuracy(spec, features="full")
    return source, target, oracle


def _oracle_moments(spec: SyntheticSpec, features: str):
    """Class-conditional mean (for u=+1) and shared covariance of the chosen columns."""
    d_c, d_s, d_t, q_c, q_s, q_t = _structure(spec)
    rho = spec.coupling
    # stack order: common, then target-specific
    mean_parts = {
        "common": spec.signal_common * spec.label_separation * d_c,
        "target_specific": rho * spec.signal_target * spec.label_separation * d_t,
    }
    load_z0 = {
        "common": spec.signal_common * d_c,
        "target_specific": rho * spec.signal_target * d_t,
    }
    load_rest = {
        "common": spec.signal_common * q_c,
        "target_specific": rho * spec.signal_target * q_t,
    }
    extra_diag = {
        "common": np.full(spec.c, spec.noise_scale**2),
        "target_specific": np.full(spec.t, spec.noise_scale**2 + (1.0 - rho * rho)),
    }
    if features == "full":
        keys = ["common", "target_specific"]
    elif features in ("common", "target_specific"):
        keys = [features]
    else:
        raise InvalidInputError(f"unknown feature subset {features!r}")
    m = np.concatenate([mean_parts[k] for k in keys])
    b = np.concatenate([load_z0[k] for k in keys])
    q = np.hstack([load_rest[k] for k in keys])
    sigma = np.outer(b, b) + q.T @ q + np.diag(np.concatenate([extra_diag[k] for k in keys]))
    return m, sigma, keys


def oracle_accuracy(spec: SyntheticSpec, features: str = "full", n_eval: int = 4000) -> float:
    """Accuracy of the exact generative Bayes rule on fresh target rows.

    ``features`` picks the columns the rule may see: "full" (common plus
    target-specific), "common", or "target_specific".
    """
    m, sigma, keys = _oracle_moments(spec, features)
    beta = np.linalg.solve(sigma, m)
    prior = np.log(spec.positive_ratio / (1.0 - spec.positive_ratio))
    rng = derive_rng(spec.seed, "oracle-eval", features)
    n_pos = round(spec.positive_ratio * n_eval)
    y = np.zeros(n_eval, dtype=np.int8)
    y[:n_pos] = 1
    y = y[rng.permutation(n_eval)]
    common, _, target_spec = _draw_blocks(spec, 2.0 * y - 1.0, rng)
    cols = {"common": common, "target_specific": target_spec}
    x = np.hstack([cols[k] for k in keys])
    scores = 2.0 * (x @ beta) + prior
    pred = (scores > 0).astype(np.int8)
    return float(np.mean(pred == y))
