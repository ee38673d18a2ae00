"""Exhaustive grid search over (n, alpha, k) maximising the output SNR."""
import itertools
import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cluster import CARDIAC
from .config import FilterConfig, PipelineConfig
from .errors import ValidationError
from .io import write_csv
from .pipeline import build_filters, clean_all, detect_all


@dataclass(frozen=True)
class TuneGrid:
    n_values: tuple
    alpha_values: tuple
    k_values: tuple

    def points(self):
        """(admissible, skipped) combinations; alpha must exceed n - 1."""
        ok, skipped = [], []
        for n, a, k in itertools.product(self.n_values, self.alpha_values, self.k_values):
            (ok if a > n - 1 else skipped).append((n, a, k))
        return ok, skipped


def default_grid():
    ns = (1, 2, 3, 4)
    alphas = tuple(sorted({a for n in ns for a in range(n, 17, 2)}))
    return TuneGrid(ns, alphas, tuple(range(1, 9)))


@dataclass(frozen=True)
class TuneRow:
    n: int
    alpha: float
    k: int
    T: float
    L: int
    snr_db: float
    channel_snr_db: tuple
    n_cardiac: int

    def as_dict(self):
        return {"n": self.n, "alpha": self.alpha, "k": self.k, "T": self.T, "L": self.L,
                "snr_db": self.snr_db, "channel_snr_db": list(self.channel_snr_db),
                "n_cardiac": self.n_cardiac}


@dataclass
class TuneResult:
    rows: list
    skipped: list
    snr_kind: str

    @property
    def best(self):
        return self.rows[0]

    def to_json(self):
        return {"snr_kind": self.snr_kind, "best": self.best.as_dict(),
                "rows": [r.as_dict() for r in self.rows],
                "skipped": [list(s) for s in self.skipped]}

    def write(self, csv_path=None, json_path=None):
        if csv_path:
            write_csv(csv_path, ["n", "alpha", "k", "T", "L", "snr_db", "n_cardiac"],
                      [[str(r.n), r.alpha, str(r.k), r.T, str(r.L), r.snr_db, str(r.n_cardiac)]
                       for r in self.rows])
        if json_path:
            with open(json_path, "w") as fh:
                json.dump(self.to_json(), fh, indent=2)
                fh.write("\n")


def _aggregate(snrs):
    # an infinite channel SNR (zero residual) is capped so the mean stays ordered
    v = np.clip(np.asarray(snrs, dtype=float), -400.0, 400.0)
    return float(np.mean(v))


def evaluate_point(base_cfg, record, truth, n, alpha, k):
    """Run the full pipeline for one grid point and score it."""
    f = replace(base_cfg.filter, n=n, alpha=alpha, beta=None, k=k, window_T=None)
    cfg = replace(base_cfg, filter=f)
    fir_n, fir_0 = build_filters(cfg, record.fs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        derivs, _, dets = detect_all(cfg, record, fir_n)
        rest = clean_all(cfg, record, fir_n, fir_0, dets, derivs, truth)
    snrs = tuple(float(s) for s in rest["snr_db"])
    return TuneRow(n=n, alpha=alpha, k=k, T=fir_n.source_spec.window_T, L=fir_n.length,
                   snr_db=_aggregate(snrs), channel_snr_db=snrs,
                   n_cardiac=sum(g.classification == CARDIAC for g in rest["groups"])), \
        rest["snr_kind"]


def grid_search(grid, record, truth=None, f0=50.0, fs=None, base_cfg=None):
    """Evaluate every admissible (n, alpha, k) and rank by mean channel SNR.

    Ties are broken by the shorter filter.  ``truth`` supplies the exact
    pulse component; without it the reconstructed (proxy) component is used.
    """
    if fs is not None and fs != record.fs:
        raise ValidationError(f"fs={fs} does not match the record's {record.fs}")
    cfg = base_cfg or PipelineConfig()
    cfg = replace(cfg, f0=f0)
    ok, skipped = grid.points()
    if not ok:
        raise ValidationError(
            f"no admissible grid point: alpha must exceed n - 1 (skipped {skipped})")
    rows, kind = [], "truth" if truth is not None else "proxy"
    for n, a, k in ok:
        row, kind = evaluate_point(cfg, record, truth, n, a, k)
        rows.append(row)
    rows.sort(key=lambda r: (-r.snr_db, r.L, r.n, r.alpha, r.k))
    return TuneResult(rows=rows, skipped=skipped, snr_kind=kind)


def best_filter_config(result, base=FilterConfig()):
    b = result.best
    return replace(base, n=b.n, alpha=b.alpha, beta=None, k=b.k, window_T=None)

