# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .. import hooks
from ..config.settings import parse_float, parse_int, parse_list, read_flat_config
from ..core.exceptions import SpecValidationError
from .panel import EDUCATION_LEVELS, GENDERS, SECTORS, BiennialPanel

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
SIGMA_FLOOR = 1e-4


@dataclass
class MarketSpec:
    """
    Ground truth of a synthetic two-period labor market.

    Array shapes: ``type_marginals[g]`` is (L,), ``class_attachment[g]`` is
    (L, K) with rows P(k | l), ``transition_kernel`` is (L, K, K) with rows
    P(k' | k, l), ``mu`` and ``sigma`` are (K, L, 2) with the last axis the
    period.
    """
    K: int
    L: int
    firms_per_class: list
    type_marginals: dict
    class_attachment: dict
    transition_kernel: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    seed: int
    firm_size_law: tuple = (2.5, 0.8)
    mover_share: float = 0.2
    gender_offsets: dict = field(default_factory=lambda: {"F": 0.0, "M": 0.0})
    female_share: float = 0.5
    first_year: int = 2010

    def __post_init__(self):
        self.type_marginals = {g: np.asarray(v, dtype=float) for g, v in self.type_marginals.items()}
        self.class_attachment = {g: np.asarray(v, dtype=float) for g, v in self.class_attachment.items()}
        self.transition_kernel = np.asarray(self.transition_kernel, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), self.mu.shape).copy()
        self.firms_per_class = [int(n) for n in self.firms_per_class]
        self.firm_size_law = tuple(float(x) for x in self.firm_size_law)

    def validate(self):
        """
        Check shapes, simplex rows and firm availability.

        Raises:
            SpecValidationError: Naming the first offending field
        """
        K, L = self.K, self.L
        if K < 1 or L < 1:
            raise SpecValidationError("K", "K and L must be at least 1")
        if len(self.firms_per_class) != K:
            raise SpecValidationError("firms_per_class", f"expected {K} entries, got {len(self.firms_per_class)}")
        if any(n < 0 for n in self.firms_per_class):
            raise SpecValidationError("firms_per_class", "firm counts must be non-negative")
        if not 0 < self.mover_share < 1:
            raise SpecValidationError("mover_share", "must lie in (0, 1)")
        if not 0 <= self.female_share <= 1:
            raise SpecValidationError("female_share", "must lie in [0, 1]")
        if self.firm_size_law[1] < 0:
            raise SpecValidationError("firm_size_law", "log-sd must be non-negative")

        for gender in GENDERS:
            marginal = self.type_marginals.get(gender)
            attachment = self.class_attachment.get(gender)
            if marginal is None or marginal.shape != (L,):
                raise SpecValidationError(f"type_marginals_{gender}", f"expected {L} entries")
            _check_simplex(marginal, f"type_marginals_{gender}")
            if attachment is None or attachment.shape != (L, K):
                raise SpecValidationError(f"class_attachment_{gender}", f"expected an {L}x{K} array")
            _check_simplex(attachment, f"class_attachment_{gender}")

            mass = (marginal[:, None] * attachment).sum(axis=0)
            for k in range(K):
                if mass[k] > 0 and self.firms_per_class[k] == 0:
                    raise SpecValidationError("firms_per_class", f"class {k + 1} has attachment mass but no firms")

        staffed = ~np.isnan(class_composition(self)).any(axis=(0, 1))
        for k in range(K):
            if self.firms_per_class[k] > 0 and not staffed[k]:
                raise SpecValidationError("class_attachment", f"class {k + 1} has firms but no attachment mass")

        if self.transition_kernel.shape != (L, K, K):
            raise SpecValidationError("transition_kernel", f"expected an {L}x{K}x{K} array")
        _check_simplex(self.transition_kernel, "transition_kernel")
        reachable = self.transition_kernel.sum(axis=(0, 1)) > 0
        for k in range(K):
            if reachable[k] and self.firms_per_class[k] == 0:
                raise SpecValidationError("transition_kernel", f"moves into class {k + 1} which has no firms")
            if (self.transition_kernel[:, k, k] > 0).any() and self.firms_per_class[k] < 2:
                raise SpecValidationError("transition_kernel", f"lateral moves in class {k + 1} need at least two firms")

        if self.mu.shape != (K, L, 2):
            raise SpecValidationError("mu", f"expected a {K}x{L}x2 array")
        if not np.all(np.isfinite(self.mu)):
            raise SpecValidationError("mu", "must be finite")
        if np.any(self.sigma < SIGMA_FLOOR):
            raise SpecValidationError("sigma", f"must be at least {SIGMA_FLOOR}")
        return self

    @classmethod
    def additive(cls, type_effects, class_effects, **kwargs):
        """Spec whose cell means are type effect plus class effect in both periods."""
        a = np.asarray(type_effects, dtype=float)
        b = np.asarray(class_effects, dtype=float)
        mu = np.repeat((b[:, None] + a[None, :])[:, :, None], 2, axis=2)
        return cls(K=len(b), L=len(a), mu=mu, **kwargs)

    @classmethod
    def from_flat(cls, values):
        """
        Build a spec from flat key=value strings.

        Arrays are comma lists in row-major order; see the configuration guide.
        """
        def required(key):
            if key not in values:
                raise SpecValidationError(key, "missing from market spec")
            return values[key]

        K = parse_int(required("k"), "K")
        L = parse_int(required("l"), "L")

        def array(key, shape):
            items = parse_list(required(key), key)
            if len(items) == 1 and np.prod(shape) > 1:
                return np.full(shape, items[0])
            if len(items) != int(np.prod(shape)):
                raise SpecValidationError(key, f"expected {int(np.prod(shape))} values, got {len(items)}")
            return np.asarray(items).reshape(shape)

        spec = cls(
            K=K,
            L=L,
            firms_per_class=parse_list(required("firms_per_class"), "firms_per_class", cast=int),
            type_marginals={g: array(f"type_marginals_{g.lower()}", (L,)) for g in GENDERS},
            class_attachment={g: array(f"class_attachment_{g.lower()}", (L, K)) for g in GENDERS},
            transition_kernel=array("transition_kernel", (L, K, K)),
            mu=array("mu", (K, L, 2)),
            sigma=array("sigma", (K, L, 2)),
            seed=parse_int(required("seed"), "seed"),
            firm_size_law=(
                parse_float(values.get("firm_size_logmean", 2.5), "firm_size_logmean"),
                parse_float(values.get("firm_size_logsd", 0.8), "firm_size_logsd"),
            ),
            mover_share=parse_float(values.get("mover_share", 0.2), "mover_share"),
            gender_offsets={g: parse_float(values.get(f"gender_offset_{g.lower()}", 0.0), "gender_offset") for g in GENDERS},
            female_share=parse_float(values.get("female_share", 0.5), "female_share"),
            first_year=parse_int(values.get("first_year", 2010), "first_year"),
        )
        return spec.validate()

    @classmethod
    def from_file(cls, path):
        return cls.from_flat(read_flat_config(path, env_prefix=None))

    def to_dict(self):
        return {
            "K": self.K,
            "L": self.L,
            "firms_per_class": list(self.firms_per_class),
            "firm_size_law": list(self.firm_size_law),
            "type_marginals": {g: v.tolist() for g, v in self.type_marginals.items()},
            "class_attachment": {g: v.tolist() for g, v in self.class_attachment.items()},
            "mover_share": self.mover_share,
            "transition_kernel": self.transition_kernel.tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "gender_offsets": dict(self.gender_offsets),
            "female_share": self.female_share,
            "first_year": self.first_year,
            "seed": self.seed,
        }


def _check_simplex(array, name):
    if np.any(array < 0):
        raise SpecValidationError(name, "probabilities must be non-negative")
    if np.any(np.abs(array.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise SpecValidationError(name, "rows must sum to 1")


@dataclass
class GroundTruth:
    """The market spec plus the realized true type of every worker and class of every firm."""
    spec: MarketSpec
    worker_type: pd.Series
    firm_class: pd.Series

    def to_dict(self):
        return {
            "version": hooks.artifact_versions["ground_truth"],
            "spec": self.spec.to_dict(),
            "worker_type": {str(k): int(v) for k, v in self.worker_type.items()},
            "firm_class": {str(k): int(v) for k, v in self.firm_class.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _firm_workers(firm_index, seed_seq, rows, spec, firm_ids, firm_class, class_firms, class_sizes):
    """Draw demographics, mobility and wages of the workers hired by one firm."""
    rng = np.random.default_rng(seed_seq)
    n = len(rows)
    k = firm_class[firm_index]
    types = rows["type"].to_numpy()
    genders = rows["gender"].to_numpy()

    age = rng.integers(20, 61, size=n)
    education = rng.choice(EDUCATION_LEVELS, size=n, p=[0.3, 0.45, 0.25])
    occupation = rng.integers(1, 10, size=n)
    sector = rng.choice(SECTORS, size=n)
    tenure = np.round(rng.exponential(4.0, size=n), 2)
    hours = rng.choice([30.0, 40.0, 44.0], size=n, p=[0.1, 0.6, 0.3])

    mover = rng.random(n) < spec.mover_share
    dest_class = np.full(n, k)
    dest_firm = np.full(n, firm_index)
    for i in np.flatnonzero(mover):
        k2 = rng.choice(spec.K, p=spec.transition_kernel[types[i], k])
        candidates = class_firms[k2]
        weights = class_sizes[k2].astype(float)
        if k2 == k:
            keep = candidates != firm_index
            candidates, weights = candidates[keep], weights[keep]
        dest_class[i] = k2
        dest_firm[i] = rng.choice(candidates, p=weights / weights.sum())

    offset = np.array([spec.gender_offsets.get(g, 0.0) for g in genders])
    w1 = rng.normal(spec.mu[k, types, 0] + offset, spec.sigma[k, types, 0])
    w2 = rng.normal(spec.mu[dest_class, types, 1] + offset, spec.sigma[dest_class, types, 1])

    return pd.DataFrame({
        "worker_id": rows["worker_id"].to_numpy(),
        "gender": genders,
        "firm_id_1": firm_ids[firm_index],
        "firm_id_2": firm_ids[dest_firm],
        "year_1": spec.first_year,
        "year_2": spec.first_year + 2,
        "log_wage_1": w1,
        "log_wage_2": w2,
        "hours_1": hours,
        "hours_2": hours,
        "age_1": age,
        "age_2": age + 2,
        "education_1": education,
        "education_2": education,
        "occupation_1": occupation,
        "occupation_2": occupation,
        "sector_1": sector,
        "sector_2": sector,
        "tenure_1": tenure,
        "tenure_2": np.where(mover, np.round(rng.uniform(0, 2, size=n), 2), tenure + 2),
        "contract_span_1": 365,
        "contract_span_2": 365,
        "mover": mover,
    })


def class_composition(spec):
    """
    Joint (gender, type) shares within each class, shape (2, L, K).

    Combines the gender share, the gender's type marginals and its
    attachment rows; columns are normalized per class.
    """
    share = {"F": spec.female_share, "M": 1.0 - spec.female_share}
    joint = np.stack([share[g] * spec.type_marginals[g][:, None] * spec.class_attachment[g] for g in GENDERS])
    mass = joint.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return joint / np.where(mass > 0, mass, np.nan)


def generate_market(spec):
    """
    Generate a balanced biennial panel from a MarketSpec.

    Firms are drawn per class with log-normal sizes rounded up to at least two
    workers, and every firm is filled to exactly its drawn size. Each slot of
    a class-k firm draws a (gender, type) pair from the class composition,
    P(g, l | k), proportional to the gender share times P^g(l) P^g(k | l).
    The realized type marginals therefore match the configured ones whenever each
    class's share of slots matches its attachment mass. Each firm then draws
    its workers' demographics, mobility and wages from its own substream, so
    results do not depend on the order firms are processed in.

    Args:
        spec (MarketSpec): Validated ground truth

    Returns:
        tuple: (BiennialPanel, GroundTruth)
    """
    spec.validate()
    market_seq, firm_root = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(market_seq)

    firm_class = np.repeat(np.arange(spec.K), spec.firms_per_class)
    n_firms = len(firm_class)
    sizes = np.maximum(2, np.ceil(rng.lognormal(*spec.firm_size_law, size=n_firms))).astype(int)
    firm_ids = rng.permutation(n_firms) + 1
    class_firms = [np.flatnonzero(firm_class == k) for k in range(spec.K)]
    class_sizes = [sizes[idx] for idx in class_firms]

    home = np.repeat(np.arange(n_firms), sizes)
    n_workers = len(home)
    composition = class_composition(spec)
    genders = np.empty(n_workers, dtype="<U1")
    types = np.empty(n_workers, dtype=int)
    for k in range(spec.K):
        slots = np.flatnonzero(firm_class[home] == k)
        if not len(slots):
            continue
        cells = rng.choice(2 * spec.L, size=len(slots), p=composition[:, :, k].ravel())
        gender_index, types[slots] = np.divmod(cells, spec.L)
        genders[slots] = np.asarray(GENDERS)[gender_index]

    worker_ids = rng.permutation(n_workers) + 1
    workers = pd.DataFrame({"worker_id": worker_ids, "gender": genders, "type": types, "home": home})
    firm_seqs = firm_root.spawn(n_firms)

    parts = []
    for firm_index, rows in workers.groupby("home", sort=True):
        parts.append(_firm_workers(
            firm_index, firm_seqs[firm_index], rows, spec, firm_ids, firm_class, class_firms, class_sizes,
        ))

    frame = pd.concat(parts, ignore_index=True).sort_values("worker_id", kind="mergesort").reset_index(drop=True)
    panel = BiennialPanel((spec.first_year, spec.first_year + 2), frame)

    truth = GroundTruth(
        spec=spec,
        worker_type=pd.Series(types + 1, index=worker_ids, name="type").sort_index(),
        firm_class=pd.Series(firm_class + 1, index=firm_ids, name="class").sort_index(),
    )
    logger.info(
        "Generated market with %d firms, %d workers, %d movers",
        n_firms, n_workers, int(frame["mover"].sum()),
    )
    return panel, truth


def realized_type_shares(truth, panel):
    """
    Realized type shares per mover cell and per stayer class.

    Returns:
        dict: ``p`` (K, K, L) and ``q`` (K, L) arrays; empty cells are NaN
    """
    K, L = truth.spec.K, truth.spec.L
    frame = panel.frame
    k1 = truth.firm_class.loc[frame["firm_id_1"]].to_numpy() - 1
    k2 = truth.firm_class.loc[frame["firm_id_2"]].to_numpy() - 1
    l = truth.worker_type.loc[frame["worker_id"]].to_numpy() - 1
    mover = frame["mover"].to_numpy()

    p = np.zeros((K, K, L))
    np.add.at(p, (k1[mover], k2[mover], l[mover]), 1.0)
    q = np.zeros((K, L))
    np.add.at(q, (k1[~mover], l[~mover]), 1.0)
    with np.errstate(invalid="ignore"):
        p = p / p.sum(axis=2, keepdims=True)
        q = q / q.sum(axis=1, keepdims=True)
    return {"p": p, "q": q}
