"""End-to-end artifact removal: design, filter, detect, cluster, reconstruct."""
import logging
import os
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .bessel import design_window
from .cluster import CARDIAC, cluster_detections, delay_stats
from .config import config_to_dict, kernel_spec
from .detect import Detection, detect_channel, filter_channel, merge_detections, min_percentile
from .errors import NumericalError, ValidationError
from .fir import discretize, save_filter
from .io import save_record, write_csv, write_json, write_jsonl
from .reconstruct import (estimate_amplitude, kernel_zero_crossing, pulse_signal,
                          reconstruct_and_clean, snr_out)
from .synth import MultichannelRecord

log = logging.getLogger(__name__)


@contextmanager
def stage(name):
    """Prefix errors raised inside a pipeline stage with the stage name."""
    try:
        yield
    except (ValidationError, NumericalError) as e:
        raise type(e)(f"[{name}] {e}") from e
    except (ValueError, FloatingPointError, ArithmeticError) as e:
        raise NumericalError(f"[{name}] {e}") from e


def window_length(cfg):
    f = cfg.filter
    if f.window_T is not None:
        return float(f.window_T)
    return design_window(f.alpha, f.k, cfg.f0, beta=f.beta_value)


def build_filters(cfg, fs):
    """(order-n filter, order-0 filter) sharing one kernel window."""
    with stage("design"):
        spec = kernel_spec(cfg, window_length(cfg))
        return discretize(spec, cfg.filter.n, fs), discretize(spec, 0, fs)


@dataclass
class PipelineResult:
    config: object
    record: MultichannelRecord
    fir_n: object
    fir_0: object
    t0: float
    derivs: list
    thresholds: list
    detections: list
    groups: list
    estimates: dict
    cleaned: list
    snr_db: list
    snr_kind: str
    delays: list
    ref_channel: int
    warnings: list = field(default_factory=list)

    @property
    def clean_record(self):
        return MultichannelRecord(fs=self.record.fs,
                                  data=np.vstack([r.clean for r in self.cleaned]),
                                  channel_labels=self.record.channel_labels)

    @property
    def cardiac_groups(self):
        return [g for g in self.groups if g.classification == CARDIAC]


def detect_all(cfg, record, fir_n, derivs=None):
    """Per-channel derivative signals, thresholds and detections."""
    with stage("filter"):
        if derivs is None:
            derivs = [filter_channel(record, c, fir_n) for c in range(record.channels)]
    with stage("detect"):
        T = fir_n.source_spec.window_T
        thresholds, per_channel = [], []
        for d in derivs:
            thr, dets = detect_channel(d, cfg.detect.percentile, cfg.detect.L_min,
                                       cfg.detect.lobe_tolerance, window_T=T)
            thresholds.append(thr)
            per_channel.append(dets)
        return derivs, thresholds, merge_detections(per_channel)


def estimate_pulses(groups, derivs, fir_n, t0):
    """Amplitude estimates per channel from cardiac representatives, in time order."""
    C = len(derivs)
    estimates = {c: [] for c in range(C)}
    for g in groups:
        if g.classification != CARDIAC:
            continue
        for c, m in sorted(g.representatives.items()):
            try:
                est = estimate_amplitude(derivs[c], fir_n, m.detection.start_index, t0)
            except ValidationError as e:
                warnings.warn(f"channel {c}, group {g.id}: pulse skipped ({e})")
                continue
            estimates[c].append(est)
    return estimates


def clean_all(cfg, record, fir_n, fir_0, detections, derivs=None, truth=None):
    """Cluster, estimate, reconstruct and score; returns the remaining result fields."""
    C = record.channels
    with stage("filter"):
        if derivs is None:
            derivs = [filter_channel(record, c, fir_n) for c in range(C)]
    with stage("cluster"):
        params = cfg.cluster.params()
        ref = params.resolve_ref(C)
        groups = cluster_detections(detections, record.fs, C, params, cfg.cluster.time_coord)
    with stage("reconstruct"):
        t0 = kernel_zero_crossing(fir_n, cfg.detect.lobe_tolerance)
        estimates = estimate_pulses(groups, derivs, fir_n, t0)
        cleaned = [reconstruct_and_clean(record.data[c], fir_0, fir_n, estimates[c], t0)
                   for c in range(C)]
        if truth is not None:
            kind = "truth"
            pulse_deriv = fir_n.apply(truth.components["pulse"])
        else:
            kind = "proxy"
            pulse_deriv = np.vstack([
                pulse_signal(fir_n.source_spec, fir_n.deriv_order, record.n_samples, record.fs,
                             estimates[c], t0)[0] for c in range(C)])
        snr = [snr_out(derivs[c], pulse_deriv[c], fir_n.warmup) for c in range(C)]
        for c, r in enumerate(cleaned):
            r.snr_out_db = snr[c]
    with stage("delays"):
        try:
            delays = delay_stats(groups, ref, C)
        except ValidationError as e:
            warnings.warn(str(e))
            delays = []
    return dict(t0=t0, groups=groups, estimates=estimates, cleaned=cleaned, snr_db=snr,
                snr_kind=kind, delays=delays, ref_channel=ref, derivs=derivs)


def run_pipeline(cfg, record, truth=None):
    """Run every stage on a record; ``truth`` enables ground-truth SNR."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fir_n, fir_0 = build_filters(cfg, record.fs)
        if record.n_samples < fir_n.length:
            raise ValidationError(f"[filter] record has {record.n_samples} samples, "
                                  f"shorter than the filter length {fir_n.length}")
        derivs, thresholds, detections = detect_all(cfg, record, fir_n)
        rest = clean_all(cfg, record, fir_n, fir_0, detections, derivs, truth)
        n_cardiac = sum(g.classification == CARDIAC for g in rest["groups"])
        if n_cardiac:
            floor_p = min_percentile(n_cardiac, fir_n.source_spec.window_T, record.fs,
                                     record.n_samples)
            if cfg.detect.percentile <= floor_p:
                warnings.warn(f"percentile {cfg.detect.percentile} is not above the "
                              f"artifact bound {floor_p:.3f} for {n_cardiac} beats")
    msgs = [str(w.message) for w in caught]
    for m in msgs:
        log.warning(m)
    return PipelineResult(config=cfg, record=record, fir_n=fir_n, fir_0=fir_0,
                          thresholds=thresholds, detections=detections, warnings=msgs, **rest)


# --- artifact files ------------------------------------------------------

def detections_rows(detections, fs):
    return [d.to_json(fs) for d in detections]


def detections_from_rows(rows):
    return [Detection.from_json(r) for r in rows]


def beats_json(groups):
    return [g.to_json() for g in groups]


def delay_rows(delays):
    rows = []
    for st in delays:
        if st.empty:
            rows.append([str(st.channel), "", "", ""])
        else:
            rows.append([str(st.channel), st.median * 1e3, st.q1 * 1e3, st.q3 * 1e3])
    return rows


def delay_sample_rows(groups, ref):
    rows = []
    for g in groups:
        if g.classification != CARDIAC or ref not in g.representatives:
            continue
        tr = g.representatives[ref].time
        for c, m in sorted(g.representatives.items()):
            rows.append([str(g.id), str(c), (m.time - tr) * 1e3])
    return rows


def snr_json(snr_db, kind):
    return {"kind": kind, "channels": [
        {"channel": c, "snr_db": None if not np.isfinite(v) else float(v),
         "infinite": bool(np.isinf(v))} for c, v in enumerate(snr_db)]}


def estimates_json(estimates):
    return [e.to_json() for c in sorted(estimates) for e in estimates[c]]


def write_detections(outdir, detections, thresholds, fs):
    write_jsonl(os.path.join(outdir, "detections.jsonl"), detections_rows(detections, fs))
    write_json(os.path.join(outdir, "thresholds.json"),
               {"thresholds": [float(t) for t in thresholds]})


def write_clean_outputs(outdir, cfg, record, rest):
    fmt = cfg.io.format or "csv"
    ext = ".csv" if fmt == "csv" else ".f64"
    clean = MultichannelRecord(fs=record.fs, data=np.vstack([r.clean for r in rest["cleaned"]]),
                               channel_labels=record.channel_labels)
    save_record(clean, os.path.join(outdir, "clean" + ext), fmt)
    write_json(os.path.join(outdir, "beats.json"), beats_json(rest["groups"]))
    write_json(os.path.join(outdir, "estimates.json"), estimates_json(rest["estimates"]))
    write_json(os.path.join(outdir, "snr.json"), snr_json(rest["snr_db"], rest["snr_kind"]))
    write_csv(os.path.join(outdir, "delays.csv"), ["channel", "median_ms", "q1_ms", "q3_ms"],
              delay_rows(rest["delays"]))
    write_csv(os.path.join(outdir, "delay_samples.csv"), ["group_id", "channel", "delay_ms"],
              delay_sample_rows(rest["groups"], rest["ref_channel"]))
    if cfg.io.write_series:
        t = np.arange(record.n_samples) / record.fs
        C = record.channels
        header = ["time_s"] + [f"raw_{c}" for c in range(C)] + [f"clean_{c}" for c in range(C)]
        cols = [t] + list(record.data) + [r.clean for r in rest["cleaned"]]
        write_csv(os.path.join(outdir, "series_traces.csv"), header, zip(*cols))
        header = ["time_s"] + [f"deriv_{c}" for c in range(C)]
        cols = [t] + [d.samples for d in rest["derivs"]]
        write_csv(os.path.join(outdir, "series_derivative.csv"), header, zip(*cols))


def write_artifacts(result, outdir):
    """Write every result file of a fused run into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    save_filter(result.fir_n, os.path.join(outdir, "filter_n.csv"),
                os.path.join(outdir, "filter_n.json"))
    save_filter(result.fir_0, os.path.join(outdir, "filter_0.csv"),
                os.path.join(outdir, "filter_0.json"))
    write_detections(outdir, result.detections, result.thresholds, result.record.fs)
    rest = dict(groups=result.groups, estimates=result.estimates, cleaned=result.cleaned,
                snr_db=result.snr_db, snr_kind=result.snr_kind, delays=result.delays,
                ref_channel=result.ref_channel, derivs=result.derivs)
    write_clean_outputs(outdir, result.config, result.record, rest)
    write_json(os.path.join(outdir, "config.json"), config_to_dict(result.config))
    write_json(os.path.join(outdir, "warnings.json"), result.warnings)
