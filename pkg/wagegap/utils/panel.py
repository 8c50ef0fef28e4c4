# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..core.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

OBSERVATION_COLUMNS = [
    "worker_id", "firm_id", "year", "log_wage", "hours", "gender", "age",
    "education", "occupation", "sector", "tenure", "contract_span",
]
OPTIONAL_COLUMNS = ["private", "wage"]

GENDERS = ("F", "M")
EDUCATION_LEVELS = ("Dropout", "HighSchool", "College")
SECTORS = ("Primary", "Manufacturing", "Construction", "Trade", "Services")
AGE_BANDS = ("<=30", "31-50", ">=51")
SIZE_BANDS = ("<10", "10-50", ">50")

# columns that stay constant for a worker within a biennial pair
WORKER_COLUMNS = ["worker_id", "gender"]

DROP_RULES = (
    "nonfinite_wage",
    "nonpositive_wage",
    "age_out_of_range",
    "non_private",
    "duplicate_contract",
    "hours_below_min",
)


def age_band(age):
    """Map ages to the three bands used in every table."""
    age = np.asarray(age)
    return np.where(age <= 30, AGE_BANDS[0], np.where(age <= 50, AGE_BANDS[1], AGE_BANDS[2]))


def size_band(size):
    size = np.asarray(size)
    return np.where(size < 10, SIZE_BANDS[0], np.where(size <= 50, SIZE_BANDS[1], SIZE_BANDS[2]))


@dataclass
class IngestionReport:
    """Row counts read, kept and dropped per cleaning rule."""
    rows_read: int = 0
    rows_kept: int = 0
    dropped: dict = field(default_factory=lambda: {rule: 0 for rule in DROP_RULES})

    def to_dict(self):
        return {"rows_read": self.rows_read, "rows_kept": self.rows_kept, "dropped": dict(self.dropped)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def read_observations(path, column_map=None, delimiter=","):
    """
    Read a delimited observation file.

    Args:
        path (str): Comma or tab delimited file with a header row
        column_map (dict, optional): Observation field -> header name in the file
        delimiter (str, optional): Field delimiter

    Returns:
        pandas.DataFrame: Raw contract rows with Observation column names

    Raises:
        DataError: If the file cannot be read or misses a required column
    """
    if delimiter not in (",", "\t"):
        raise ConfigError(f"Unsupported delimiter {delimiter!r}")
    try:
        frame = pd.read_csv(path, sep=delimiter)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read observations from {path}: {str(e)}")

    if column_map:
        frame = frame.rename(columns={header: name for name, header in column_map.items()})

    missing = [name for name in OBSERVATION_COLUMNS if name not in frame.columns]
    if missing and not (missing == ["log_wage"] and "wage" in frame.columns):
        raise DataError(f"Observation file {path} is missing columns: {', '.join(missing)}")

    keep = [name for name in OBSERVATION_COLUMNS + OPTIONAL_COLUMNS if name in frame.columns]
    return frame[keep]


def write_observations(frame, path, delimiter=","):
    """Write observations in the documented delimited format."""
    columns = [name for name in OBSERVATION_COLUMNS + OPTIONAL_COLUMNS if name in frame.columns]
    frame[columns].to_csv(path, sep=delimiter, index=False, float_format="%.12g", lineterminator="\n")


def clean_contracts(raw, hours_min=30.0):
    """
    Reduce contract rows to one observation per worker and year.

    Rows with a non-finite log wage or a non-positive wage level are rejected,
    ages outside [14, 100] and non-private rows are dropped. Among the
    remaining contracts of a (worker_id, year) the longest one is kept, ties
    going to the highest wage and then the lowest firm_id. The retained row is
    dropped if it has fewer than ``hours_min`` weekly hours.

    Args:
        raw (pandas.DataFrame): Contract rows with Observation columns
        hours_min (float, optional): Inclusive weekly hours threshold

    Returns:
        tuple: (pandas.DataFrame of observations, IngestionReport)
    """
    report = IngestionReport(rows_read=len(raw))
    frame = raw.copy()

    if len(frame) == 0:
        return frame.reset_index(drop=True), report

    if "log_wage" not in frame.columns:
        with np.errstate(divide="ignore", invalid="ignore"):
            frame["log_wage"] = np.log(frame["wage"].astype(float))

    if "wage" in frame.columns:
        nonpositive = ~(frame["wage"].astype(float) > 0)
        report.dropped["nonpositive_wage"] = int(nonpositive.sum())
        frame = frame[~nonpositive]

    finite = np.isfinite(frame["log_wage"].astype(float))
    report.dropped["nonfinite_wage"] = int((~finite).sum())
    frame = frame[finite]

    in_range = frame["age"].between(14, 100)
    report.dropped["age_out_of_range"] = int((~in_range).sum())
    frame = frame[in_range]

    if "private" in frame.columns:
        private = frame["private"].astype(str).str.lower().isin(["1", "true", "yes", "y"])
        report.dropped["non_private"] = int((~private).sum())
        frame = frame[private]

    # longest contract, then highest wage, then lowest firm_id
    frame = frame.sort_values(
        ["worker_id", "year", "contract_span", "log_wage", "firm_id"],
        ascending=[True, True, False, False, True],
        kind="mergesort",
    )
    before = len(frame)
    frame = frame.drop_duplicates(["worker_id", "year"], keep="first")
    report.dropped["duplicate_contract"] = before - len(frame)

    full_time = frame["hours"] >= hours_min
    report.dropped["hours_below_min"] = int((~full_time).sum())
    frame = frame[full_time].reset_index(drop=True)

    report.rows_kept = len(frame)
    logger.info("Cleaned %d contract rows down to %d observations", report.rows_read, report.rows_kept)
    return frame, report


@dataclass
class BiennialPanel:
    """
    A balanced two-period panel.

    ``frame`` holds one row per worker. Worker-level columns (worker_id and,
    unless blinded, gender) appear once; every other observation column
    appears twice with ``_1``/``_2`` suffixes. ``mover`` is True when the
    firm differs between the periods.
    """
    year_pair: tuple
    frame: pd.DataFrame
    warnings: list = field(default_factory=list)

    @property
    def n_workers(self):
        return len(self.frame)

    @property
    def is_empty(self):
        return len(self.frame) == 0

    @property
    def is_blind(self):
        return "gender" not in self.frame.columns

    def movers(self):
        return self.frame[self.frame["mover"]]

    def stayers(self):
        return self.frame[~self.frame["mover"]]

    def period_columns(self):
        return sorted({column[:-2] for column in self.frame.columns if column.endswith(("_1", "_2"))})

    def long(self):
        """Return the panel as worker-year rows with a ``period`` column."""
        parts = []
        shared = [c for c in WORKER_COLUMNS + ["mover"] if c in self.frame.columns]
        for period in (1, 2):
            part = self.frame[shared].copy()
            for name in self.period_columns():
                part[name] = self.frame[f"{name}_{period}"].to_numpy()
            part["period"] = period
            parts.append(part)
        return pd.concat(parts, ignore_index=True)

    def blind(self):
        """Return a copy without the gender column."""
        return BiennialPanel(self.year_pair, self.frame.drop(columns=["gender"], errors="ignore"), list(self.warnings))

    def subset(self, mask):
        return BiennialPanel(self.year_pair, self.frame[np.asarray(mask)].reset_index(drop=True), list(self.warnings))

    @classmethod
    def from_periods(cls, first, second, year_pair):
        """
        Join period-1 and period-2 observations of the same workers.

        Args:
            first (pandas.DataFrame): Observations of period 1
            second (pandas.DataFrame): Observations of period 2
            year_pair (tuple): (t, t+2)

        Returns:
            BiennialPanel: Panel of the workers present in both frames
        """
        shared = [c for c in WORKER_COLUMNS if c in first.columns]
        varying = [c for c in first.columns if c not in shared]
        left = first[shared + varying].rename(columns={c: f"{c}_1" for c in varying})
        right = second[["worker_id"] + varying].rename(columns={c: f"{c}_2" for c in varying})
        frame = left.merge(right, on="worker_id", how="inner").sort_values("worker_id", kind="mergesort")
        frame["mover"] = frame["firm_id_1"].to_numpy() != frame["firm_id_2"].to_numpy()
        return cls(tuple(year_pair), frame.reset_index(drop=True))


def _unbalanced_firms(frame, ratio_min):
    """Firms of a single period whose gender ratio falls below ratio_min."""
    counts = pd.crosstab(frame["firm_id"], frame["gender"])
    for gender in GENDERS:
        if gender not in counts.columns:
            counts[gender] = 0
    low = counts[list(GENDERS)].min(axis=1)
    high = counts[list(GENDERS)].max(axis=1)
    ratio = low / high
    return set(ratio.index[ratio < ratio_min])


def build_biennials(observations, pairs, ratio_min=0.25):
    """
    Build balanced biennial panels from cleaned observations.

    For each pair the workers present in both years are kept. Firms whose
    gender ratio min(F, M)/max(F, M) is below ``ratio_min`` in either period
    are dropped together with every worker employed there in either period.
    The ratio filter is applied once and not re-checked after the drop.

    Args:
        observations (pandas.DataFrame): Output of clean_contracts
        pairs (list): Sequence of (t, t+2) tuples
        ratio_min (float, optional): Minimum gender ratio of a retained firm

    Returns:
        list: One BiennialPanel per pair

    Raises:
        ConfigError: If a pair is not two years apart or pairs share a first year
    """
    firsts = [int(first) for first, _ in pairs]
    if len(set(firsts)) != len(firsts):
        raise ConfigError("Biennial pairs must not share a first year")

    panels = []
    if len(observations) == 0:
        return panels

    if (observations.groupby(["worker_id", "year"]).size() > 1).any():
        raise DataError("Observations are not unique per (worker_id, year); run clean_contracts first")

    for first_year, second_year in pairs:
        if second_year != first_year + 2:
            raise ConfigError(f"Biennial pair {first_year}:{second_year} is not two years apart")

        first = observations[observations["year"] == first_year]
        second = observations[observations["year"] == second_year]
        both = np.intersect1d(first["worker_id"].unique(), second["worker_id"].unique())
        first = first[first["worker_id"].isin(both)]
        second = second[second["worker_id"].isin(both)]

        dropped_firms = _unbalanced_firms(first, ratio_min) | _unbalanced_firms(second, ratio_min)
        leaving = set(first.loc[first["firm_id"].isin(dropped_firms), "worker_id"])
        leaving |= set(second.loc[second["firm_id"].isin(dropped_firms), "worker_id"])

        first = first[~first["worker_id"].isin(leaving)]
        second = second[~second["worker_id"].isin(leaving)]

        panel = BiennialPanel.from_periods(first, second, (first_year, second_year))
        if panel.is_empty:
            message = f"Biennial {first_year}-{second_year} has no surviving workers"
            logger.warning(message)
            panel.warnings.append(message)
        else:
            logger.info(
                "Biennial %d-%d: %d workers, %d firms dropped by the gender ratio filter",
                first_year, second_year, panel.n_workers, len(dropped_firms),
            )
        panels.append(panel)

    return panels


def _shares(values, levels=None):
    counts = pd.Series(values).value_counts()
    order = list(levels or [])
    order += sorted(level for level in counts.index if level not in order)
    counts = counts.reindex(order, fill_value=0)
    return {str(k): float(v / counts.sum()) for k, v in counts.items()}


def summary_stats(panel):
    """
    Descriptive statistics of a biennial panel by gender.

    Firm sizes are worker counts per firm and period over the whole panel;
    the firm figures of a gender describe the firm-periods employing at least
    one worker of that gender.

    Args:
        panel (BiennialPanel): Panel with a gender column

    Returns:
        dict: gender -> statistics record

    Raises:
        DataError: If the panel is empty or blinded
    """
    if panel.is_empty:
        raise DataError("summary_stats needs a non-empty panel")
    if panel.is_blind:
        raise DataError("summary_stats needs the gender column")

    long = panel.long()
    sizes = long.groupby(["period", "firm_id"]).size().rename("firm_size")
    long = long.join(sizes, on=["period", "firm_id"])

    stats = {}
    for gender in GENDERS:
        part = long[long["gender"] == gender]
        if len(part) == 0:
            continue
        firm_sizes = part.drop_duplicates(["period", "firm_id"])["firm_size"]
        stats[gender] = {
            "worker_years": int(len(part)),
            "workers": int(part["worker_id"].nunique()),
            "gender_fraction": float(len(part) / len(long)),
            "mean_log_wage": float(part["log_wage"].mean()),
            "var_log_wage": float(part["log_wage"].var(ddof=0)),
            "mean_tenure": float(part["tenure"].mean()),
            "firms": int(len(firm_sizes)),
            "firms_size_ge_10": int((firm_sizes >= 10).sum()),
            "firms_size_ge_50": int((firm_sizes >= 50).sum()),
            "mean_firm_size": float(firm_sizes.mean()),
            "median_firm_size": float(firm_sizes.median()),
            "education": _shares(part["education"], EDUCATION_LEVELS),
            "age": _shares(age_band(part["age"]), AGE_BANDS),
            "sector": _shares(part["sector"], SECTORS),
            "occupation": _shares(part["occupation"]),
        }
    return stats


def summary_table(stats):
    """Flatten summary_stats output into a (statistic, F, M) table."""
    rows = {}
    for gender, record in stats.items():
        for key, value in record.items():
            if isinstance(value, dict):
                for level, share in value.items():
                    rows.setdefault(f"{key}:{level}", {})[gender] = share
            else:
                rows.setdefault(key, {})[gender] = value
    table = pd.DataFrame.from_dict(rows, orient="index").reindex(columns=list(GENDERS))
    table.index.name = "statistic"
    return table.reset_index()
