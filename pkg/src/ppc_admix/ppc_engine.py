"""Posterior predictive check orchestration, scoring and reporting."""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import discrepancies as dsc
from .genotype_data import GenotypeDataset
from .replicator import replicate_once, replicate_seed

log = logging.getLogger(__name__)

DEFAULT_REPLICATES = 100
IBS_REPLICATES = 30
SD_FLOOR = 1e-12
MLE_SD_FLOOR = 1e-6
STAR_THRESHOLDS = (2.0, 6.0, 10.0)


@dataclass(frozen=True)
class PpcSpec:
    """Which discrepancy to run and its parameters."""

    name: str
    lags: tuple = dsc.DEFAULT_LAGS
    max_snps: int = dsc.MAX_SNPS
    min_shared: int = dsc.MIN_SHARED
    threshold_unit: str = "alleles"
    draws: int = dsc.PHENOTYPE_DRAWS
    smoothing: float = dsc.BETA_SMOOTHING
    per_lag_bf: bool = False

    def __post_init__(self):
        if self.name not in dsc.DISCREPANCY_NAMES:
            raise ValueError(f"unknown discrepancy {self.name!r}; choose from {', '.join(dsc.DISCREPANCY_NAMES)}")
        object.__setattr__(self, "lags", tuple(int(m) for m in self.lags))

    @property
    def default_replicates(self):
        return IBS_REPLICATES if self.name == "ibs" else DEFAULT_REPLICATES

    def build(self, fitted, labels, seed):
        K = fitted.K
        z = fitted.z_map
        if self.name == "ibs":
            return dsc.IbsDiscrepancy(z, K, self.min_shared, self.threshold_unit)
        if self.name == "mi":
            return dsc.MutualInfoDiscrepancy(z, K, self.lags, self.max_snps)
        if self.name == "fst":
            return dsc.FstDiscrepancy(z, K, labels)
        if self.name == "entropy":
            return dsc.EntropyDiscrepancy(z, K, fitted.theta, fitted.phi)
        return dsc.AssociationDiscrepancy(z, K, fitted.theta, seed, self.draws, self.smoothing)


class BayesFactor(NamedTuple):
    two_log_bf: Optional[float]
    stars: int
    low_confidence: bool


@dataclass
class PpcResult:
    discrepancy: str
    K: int
    R: int
    groups: tuple
    observed: np.ndarray  # (G, K)
    observed_defined: np.ndarray  # (G, K)
    replicated: np.ndarray  # (R, G, K), nan where undefined
    z: np.ndarray  # (G, K), nan where undefined
    bayes_factors: list  # one BayesFactor, or one per group with per-lag pooling
    config: dict = field(default_factory=dict)

    @property
    def inconclusive(self):
        return not np.any(self.observed_defined)

    @property
    def two_log_bf(self):
        return self.bayes_factors[0].two_log_bf if len(self.bayes_factors) == 1 else [b.two_log_bf for b in self.bayes_factors]

    @property
    def stars(self):
        return self.bayes_factors[0].stars if len(self.bayes_factors) == 1 else [b.stars for b in self.bayes_factors]

    @property
    def max_stars(self):
        return max(b.stars for b in self.bayes_factors)

    def replicate_mean(self):
        with _quiet():
            return np.nanmean(self.replicated, axis=0)

    def replicate_sd(self):
        with _quiet():
            return np.nanstd(self.replicated, axis=0, ddof=1)


@contextmanager
def _quiet():
    # all-nan columns are expected for undefined populations
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def z_scores(observed, replicated, observed_defined=None):
    """Empirical z-scores ``(observed - mean) / sd`` per column.

    ``replicated`` has replicates along axis 0; ``nan`` entries are ignored.
    The sample (n - 1) standard deviation is floored at 1e-12. A z-score is
    undefined (``nan``) when the observed value is undefined or fewer than two
    replicate values are defined.
    """
    obs = np.asarray(observed, dtype=float)
    rep = np.asarray(replicated, dtype=float)
    if observed_defined is None:
        observed_defined = ~np.isnan(obs)
    n_def = np.sum(~np.isnan(rep), axis=0)
    with _quiet():
        mu = np.nanmean(rep, axis=0)
        sd = np.nanstd(rep, axis=0, ddof=1)
    sd = np.maximum(np.nan_to_num(sd, nan=0.0), SD_FLOOR)
    z = (obs - mu) / sd
    return np.where(observed_defined & (n_def >= 2), z, np.nan)


def _normal_logpdf(x, mu, sd):
    return -0.5 * np.log(2.0 * np.pi) - np.log(sd) - 0.5 * ((x - mu) / sd) ** 2


def star_rating(two_log_bf):
    if two_log_bf is None:
        return 0
    return sum(two_log_bf > t for t in STAR_THRESHOLDS)


def deviation_bayes_factor(z, sd_floor=MLE_SD_FLOOR):
    """2 ln of the likelihood ratio of the z-scores under a fitted vs standard normal.

    The alternative is the maximum-likelihood normal (mean and biased 1/K
    variance) with its standard deviation floored at ``sd_floor``. Undefined
    (``nan``) z-scores are dropped. With a single z-score the fitted standard
    deviation is degenerate and the result is flagged low-confidence.
    """
    z = np.asarray(z, dtype=float).ravel()
    z = z[~np.isnan(z)]
    if z.size == 0:
        return BayesFactor(None, 0, True)
    mu = z.mean()
    sd = max(float(np.sqrt(np.mean((z - mu) ** 2))), sd_floor)
    two_log_bf = 2.0 * float(np.sum(_normal_logpdf(z, mu, sd)) - np.sum(_normal_logpdf(z, 0.0, 1.0)))
    return BayesFactor(two_log_bf, star_rating(two_log_bf), z.size < 2)


def _resolve_workers(workers):
    return max(1, int(workers or 1))


def run_ppc(fitted, observed, spec, R=None, seed=0, labels=None, workers=1):
    """Compute observed and replicated discrepancies, z-scores and the deviation BF.

    Replicate ``r`` is drawn with ``replicate_seed(seed, r)`` and evaluated
    independently; with ``workers > 1`` replicates are evaluated on a thread
    pool and placed by index, so the result does not depend on ``workers``.
    """
    if isinstance(spec, str):
        spec = PpcSpec(spec)
    R = spec.default_replicates if R is None else int(R)
    if R < 1:
        raise ValueError("R must be >= 1")
    if isinstance(observed, GenotypeDataset):
        if labels is None:
            labels = observed.labels
        x_obs = observed.alleles()
    else:
        x_obs = np.asarray(observed)
    if x_obs.shape != fitted.z_map.shape:
        raise ValueError("observed data and fitted model disagree on dimensions")

    disc = spec.build(fitted, labels, seed)
    obs_vals, obs_def = disc(x_obs)

    def one(r):
        vals, _ = disc(replicate_once(fitted, replicate_seed(seed, r)))
        return vals

    workers = _resolve_workers(workers)
    if workers == 1:
        reps = [one(r) for r in range(R)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(one, range(R)))
    replicated = np.stack(reps)

    z = z_scores(obs_vals, replicated, obs_def)
    if spec.name == "mi" and spec.per_lag_bf:
        bfs = [deviation_bayes_factor(z[g]) for g in range(len(disc.groups))]
    else:
        bfs = [deviation_bayes_factor(z)]

    result = PpcResult(
        discrepancy=spec.name,
        K=fitted.K,
        R=R,
        groups=disc.groups,
        observed=obs_vals,
        observed_defined=obs_def,
        replicated=replicated,
        z=z,
        bayes_factors=bfs,
        config={"spec": _spec_dict(spec), "R": R, "seed": int(seed)},
    )
    if result.inconclusive:
        log.warning("%s: every population undefined on the observed data; PPC inconclusive", spec.name)
    return result


def _spec_dict(spec):
    d = asdict(spec)
    d["lags"] = list(spec.lags)
    return d


# ---------------------------------------------------------------------------
# serialization and rendering

SUMMARY_FIELDS = (
    "discrepancy",
    "K",
    "R",
    "observed",
    "replicate_mean",
    "replicate_sd",
    "z",
    "two_log_bf",
    "log10_bf",
    "stars",
    "seeds",
)
POINT_COLUMNS = ("discrepancy", "population", "dataset_id", "value", "defined")


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def _nested(arr, single):
    a = np.asarray(arr, dtype=float)
    lists = [[_num(v) for v in row] for row in a]
    return lists[0] if single else lists


def _label(result, g):
    lag = result.groups[g]
    return result.discrepancy if lag is None else f"{result.discrepancy}:lag={lag}"


def summary_record(result):
    single = len(result.groups) == 1 and result.groups[0] is None
    bf = result.two_log_bf
    log10 = [None if b is None else dsc.two_ln_to_log10(b) for b in bf] if isinstance(bf, list) else (
        None if bf is None else dsc.two_ln_to_log10(bf)
    )
    rec = {
        "discrepancy": result.discrepancy,
        "K": result.K,
        "R": result.R,
        "observed": _nested(np.where(result.observed_defined, result.observed, np.nan), single),
        "replicate_mean": _nested(result.replicate_mean(), single),
        "replicate_sd": _nested(result.replicate_sd(), single),
        "z": _nested(result.z, single),
        "two_log_bf": bf,
        "log10_bf": log10,
        "stars": result.stars,
        "seeds": {"ppc": result.config.get("seed")},
    }
    if not single:
        rec["lags"] = list(result.groups)
    rec["low_confidence"] = any(b.low_confidence for b in result.bayes_factors)
    rec["inconclusive"] = bool(result.inconclusive)
    return rec


def point_rows(result):
    """Observed and replicate values as ``(discrepancy, population, dataset_id, value, defined)``."""
    rows = []
    for g in range(len(result.groups)):
        name = _label(result, g)
        for k in range(result.K):
            ok = bool(result.observed_defined[g, k])
            rows.append((name, k + 1, "observed", result.observed[g, k] if ok else None, ok))
        for r in range(result.R):
            for k in range(result.K):
                v = result.replicated[r, g, k]
                ok = not math.isnan(v)
                rows.append((name, k + 1, f"rep_{r}", v if ok else None, ok))
    return rows


def _fmt_value(v):
    return "NA" if v is None else repr(float(v))


def _stars_text(n):
    return "*" * n if n else "-"


def summary_table(results):
    lines = ["discrepancy\tpopulation_z\ttwo_log_bf\tlog10_bf\tstars"]
    for res in results:
        for bi, bf in enumerate(res.bayes_factors):
            if len(res.bayes_factors) == 1:
                name, zrows = res.discrepancy, res.z
            else:
                name, zrows = _label(res, bi), res.z[bi : bi + 1]
            zs = ",".join("NA" if math.isnan(v) else f"{v:.3f}" for v in np.asarray(zrows).ravel())
            if bf.two_log_bf is None:
                b, l10 = "NA", "NA"
            else:
                b, l10 = f"{bf.two_log_bf:.3f}", f"{dsc.two_ln_to_log10(bf.two_log_bf):.3f}"
            lines.append(f"{name}\t{zs}\t{b}\t{l10}\t{_stars_text(bf.stars)}")
    return "\n".join(lines) + "\n"


def render_report(results, out_dir, fmt="tsv"):
    """Write per-PPC point files, ``summary.json`` and ``summary.txt``.

    Point files are ``ppc_<name>.tsv`` or ``ppc_<name>.json`` depending on
    ``fmt``. Returns the list of written paths.
    """
    if fmt not in ("tsv", "json"):
        raise ValueError(f"format must be 'tsv' or 'json', got {fmt!r}")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for res in results:
            rows = point_rows(res)
            if fmt == "tsv":
                path = out / f"ppc_{res.discrepancy}.tsv"
                with open(path, "w", encoding="ascii", newline="\n") as fh:
                    fh.write("\t".join(POINT_COLUMNS) + "\n")
                    for d, k, ds, v, ok in rows:
                        fh.write(f"{d}\t{k}\t{ds}\t{_fmt_value(v)}\t{str(ok).lower()}\n")
            else:
                path = out / f"ppc_{res.discrepancy}.json"
                payload = [dict(zip(POINT_COLUMNS, (d, k, ds, _num(v), ok))) for d, k, ds, v, ok in rows]
                _dump_json(path, payload)
            written.append(path)
        path = out / "summary.json"
        _dump_json(path, {"schema": list(SUMMARY_FIELDS), "results": [summary_record(r) for r in results]})
        written.append(path)
        path = out / "summary.txt"
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(summary_table(results))
        written.append(path)
    except OSError as exc:
        raise OSError(f"failed writing report to {exc.filename or out}: {exc.strerror}") from exc
    return written


def _dump_json(path, payload):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(payload, fh, indent=1, allow_nan=False)
        fh.write("\n")


def result_to_dict(result):
    """Full, lossless JSON form of a result (used by ``ppc-admix report``)."""
    return {
        "discrepancy": result.discrepancy,
        "K": result.K,
        "R": result.R,
        "groups": list(result.groups),
        "observed": [[_num(v) for v in row] for row in result.observed],
        "observed_defined": result.observed_defined.tolist(),
        "replicated": [[[_num(v) for v in row] for row in rep] for rep in result.replicated],
        "z": [[_num(v) for v in row] for row in result.z],
        "bayes_factors": [b._asdict() for b in result.bayes_factors],
        "config": result.config,
    }


def _arr(nested):
    return np.array([[np.nan if v is None else v for v in row] for row in nested], dtype=float)


def result_from_dict(d):
    return PpcResult(
        discrepancy=d["discrepancy"],
        K=d["K"],
        R=d["R"],
        groups=tuple(d["groups"]),
        observed=_arr(d["observed"]),
        observed_defined=np.array(d["observed_defined"], dtype=bool),
        replicated=np.stack([_arr(rep) for rep in d["replicated"]]),
        z=_arr(d["z"]),
        bayes_factors=[BayesFactor(**b) for b in d["bayes_factors"]],
        config=d.get("config", {}),
    )


def save_results(results, path):
    _dump_json(path, [result_to_dict(r) for r in results])


def load_results(path):
    with open(path, encoding="ascii") as fh:
        return [result_from_dict(d) for d in json.load(fh)]
