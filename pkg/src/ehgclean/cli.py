"""Command line interface: one subcommand per pipeline stage plus a fused ``run``.

Every subcommand accepts ``--config FILE.yaml`` and flags mirroring the
configuration fields; flags override the file.  Exit codes: 0 success,
2 invalid input or configuration, 3 numerical failure.
"""
import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace

import numpy as np
import yaml

from .cluster import BeatGroup, Member, delay_stats
from .config import (PipelineConfig, config_from_dict, config_to_dict, load_config,
                     load_scenario, override, scenario_to_dict)
from .detect import DerivativeSignal
from .errors import NumericalError, ValidationError
from .fir import save_filter, transfer
from .io import load_record, read_jsonl, save_record, write_csv, write_json, write_jsonl
from .pipeline import (build_filters, clean_all, delay_rows, delay_sample_rows, detect_all,
                       detections_from_rows, run_pipeline, stage, write_artifacts,
                       write_clean_outputs, write_detections)
from .synth import GroundTruth, MultichannelRecord, check_detectability, default_scenario, generate
from .tune import TuneGrid, best_filter_config, default_grid, grid_search

log = logging.getLogger("ehgclean")


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _config_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_argument_group("filter")
    g.add_argument("--n", type=int, help="derivative order")
    g.add_argument("--N", type=int, help="polynomial degree of the kernel expansion")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float, help="defaults to alpha")
    g.add_argument("--theta", type=float, help="delay parameter in [-1, 1]")
    g.add_argument("--k", type=int, help="Bessel zero index for the window design")
    g.add_argument("--window-T", type=float, help="explicit window length in seconds")
    g.add_argument("--f0", type=float, help="powerline frequency in Hz")
    g = p.add_argument_group("detection")
    g.add_argument("--percentile", type=float)
    g.add_argument("--L-min", type=int, dest="L_min")
    g.add_argument("--lobe-tolerance", type=float)
    g = p.add_argument_group("clustering")
    g.add_argument("--delta-t-beat", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--ref-channel", type=int)
    g.add_argument("--time-coord", choices=("start", "peak"))
    g.add_argument("--allow-out-of-range", action="store_true", default=None)
    g = p.add_argument_group("io")
    g.add_argument("--format", choices=("csv", "binary"), help="record format of written signals")
    g.add_argument("--no-series", dest="write_series", action="store_false", default=None,
                   help="skip the plot series files")
    g.add_argument("--seed", type=int)
    return p


def build_config(args):
    """Config file (or defaults) with command line flags applied, then validated."""
    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg = override(cfg, "filter", n=args.n, N=args.N, alpha=args.alpha, beta=args.beta,
                   theta=args.theta, k=args.k, window_T=args.window_T)
    cfg = override(cfg, None, f0=args.f0, seed=args.seed)
    cfg = override(cfg, "detect", percentile=args.percentile, L_min=args.L_min,
                   lobe_tolerance=args.lobe_tolerance)
    cfg = override(cfg, "cluster", delta_t_beat=args.delta_t_beat, rho=args.rho,
                   ref_channel=args.ref_channel, time_coord=args.time_coord,
                   allow_out_of_range=args.allow_out_of_range)
    cfg = override(cfg, "io", input=getattr(args, "input", None), output=getattr(args, "out", None),
                   format=args.format, write_series=args.write_series)
    # re-run the field checks so flag values get the same diagnostics as file values
    return config_from_dict(config_to_dict(cfg), "<command line>")


def _record_ext(cfg):
    return ".csv" if (cfg.io.format or "csv") == "csv" else ".f64"


def _load_truth(path):
    if not path:
        return None
    pulse = load_record(path)
    return GroundTruth(arrivals=[], components={"pulse": pulse.data})


def _derivs_from_file(path, fir_n):
    rec = load_record(path)
    return [DerivativeSignal(channel=c, order=fir_n.deriv_order, samples=rec.data[c],
                             fs=rec.fs, warmup=fir_n.warmup) for c in range(rec.channels)]


def _save_filters(outdir, fir_n, fir_0):
    os.makedirs(outdir, exist_ok=True)
    save_filter(fir_n, os.path.join(outdir, "filter_n.csv"), os.path.join(outdir, "filter_n.json"))
    save_filter(fir_0, os.path.join(outdir, "filter_0.csv"), os.path.join(outdir, "filter_0.json"))


# --- subcommands ---------------------------------------------------------

def cmd_design(args, cfg):
    fir_n, fir_0 = build_filters(cfg, args.fs)
    if args.out:
        _save_filters(args.out, fir_n, fir_0)
        fmax = min(args.fs / 2, 10 * cfg.f0)
        freqs = np.linspace(0.0, fmax, int(round(fmax / 0.5)) + 1)
        h0, hn = transfer(fir_0, freqs), transfer(fir_n, freqs)
        rows = zip(freqs, np.abs(h0), np.abs(hn), np.angle(hn))
        write_csv(os.path.join(args.out, "frequency_response.csv"),
                  ["freq_hz", "mag_order0", "mag_order_n", "phase_order_n"], rows)
    print(json.dumps({"order_n": fir_n.descriptor(), "order_0": fir_0.descriptor()}, indent=2))
    return 0


def cmd_synth(args, cfg):
    with stage("synth"):
        if args.scenario:
            sc = load_scenario(args.scenario)
            if args.seed is not None:
                sc = replace(sc, rng_seed=args.seed)
        else:
            sc = default_scenario(rng_seed=20240601 if args.seed is None else args.seed,
                                  noise_sigma=args.noise_sigma)
        record, truth = generate(sc)
    os.makedirs(args.out, exist_ok=True)
    ext = _record_ext(cfg)
    save_record(record, os.path.join(args.out, "record" + ext))
    save_record(MultichannelRecord(fs=record.fs, data=truth.components["pulse"],
                                   channel_labels=record.channel_labels),
                os.path.join(args.out, "truth_pulse" + ext))
    write_jsonl(os.path.join(args.out, "arrivals.jsonl"),
                [{"source": a.source_id, "event": a.event, "channel": a.channel,
                  "time_s": a.time, "index": a.index, "amplitude": a.amplitude}
                 for a in truth.arrivals])
    write_json(os.path.join(args.out, "scenario.json"), scenario_to_dict(sc))
    fir_n, _ = build_filters(cfg, record.fs)
    rep = check_detectability(truth, fir_n)
    write_json(os.path.join(args.out, "detectability.json"), [
        {"channel": c, "status": rep.status[c], "margin": float(rep.margin[c]),
         "baseline": float(rep.baseline_norm[c]), "powerline": float(rep.powerline_norm[c]),
         "noise": float(rep.noise_norm[c]), "pulse_peak": float(rep.a_peak[c])}
        for c in range(record.channels)])
    if any(s in ("marginal", "undetectable") for s in rep.status):
        log.warning("detectability margin below 5 on some channels: %s", rep.status)
    return 0


def cmd_filter(args, cfg):
    record = load_record(args.input)
    fir_n, fir_0 = build_filters(cfg, record.fs)
    with stage("filter"):
        d = fir_n.apply(record.data)
    os.makedirs(args.out, exist_ok=True)
    _save_filters(args.out, fir_n, fir_0)
    save_record(MultichannelRecord(fs=record.fs, data=d, channel_labels=record.channel_labels),
                os.path.join(args.out, "derivative" + _record_ext(cfg)))
    return 0


def cmd_detect(args, cfg):
    if not (args.input or args.derivative):
        raise ValidationError("detect needs --input or --derivative")
    src = load_record(args.derivative or args.input)
    fir_n, _ = build_filters(cfg, src.fs)
    if args.derivative:
        derivs = _derivs_from_file(args.derivative, fir_n)
        _, thresholds, dets = detect_all(cfg, src, fir_n, derivs)
    else:
        _, thresholds, dets = detect_all(cfg, src, fir_n)
    os.makedirs(args.out, exist_ok=True)
    write_detections(args.out, dets, thresholds, src.fs)
    return 0


def cmd_clean(args, cfg):
    record = load_record(args.input)
    fir_n, fir_0 = build_filters(cfg, record.fs)
    dets = detections_from_rows(read_jsonl(args.detections))
    derivs = _derivs_from_file(args.derivative, fir_n) if args.derivative else None
    rest = clean_all(cfg, record, fir_n, fir_0, dets, derivs, _load_truth(args.truth_pulse))
    os.makedirs(args.out, exist_ok=True)
    write_clean_outputs(args.out, cfg, record, rest)
    return 0


def groups_from_beats(rows):
    """Rebuild beat groups (representatives only) from a beats JSON document."""
    out = []
    for r in rows:
        reps = {int(m["channel"]): Member(float(m["start_time_s"]), int(m["channel"]))
                for m in r["representatives"]}
        out.append(BeatGroup(id=int(r["group_id"]), members=list(reps.values()),
                             classification=r["classification"],
                             median_time=r["median_time_s"], representatives=reps))
    return out


def cmd_delays(args, cfg):
    with open(args.beats) as fh:
        groups = groups_from_beats(json.load(fh))
    C = args.channels or 1 + max((c for g in groups for c in g.representatives), default=-1)
    with stage("delays"):
        ref = cfg.cluster.params().resolve_ref(C)
        stats = delay_stats(groups, ref, C)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "delays.csv"), ["channel", "median_ms", "q1_ms", "q3_ms"],
              delay_rows(stats))
    write_csv(os.path.join(args.out, "delay_samples.csv"), ["group_id", "channel", "delay_ms"],
              delay_sample_rows(groups, ref))
    return 0


def cmd_tune(args, cfg):
    record = load_record(args.input)
    grid = default_grid()
    grid = TuneGrid(args.n_values or grid.n_values, args.alpha_values or grid.alpha_values,
                    args.k_values or grid.k_values)
    with stage("tune"):
        result = grid_search(grid, record, _load_truth(args.truth_pulse), f0=cfg.f0,
                             base_cfg=cfg)
    os.makedirs(args.out, exist_ok=True)
    result.write(os.path.join(args.out, "tune.csv"), os.path.join(args.out, "tune.json"))
    if result.snr_kind == "proxy":
        log.warning("no ground-truth pulse component given; SNR uses the reconstructed proxy")
    for s in result.skipped:
        log.info("skipped (n=%s, alpha=%s, k=%s): alpha must exceed n - 1", *s)
    b = result.best
    print(f"best: n={b.n} alpha={b.alpha:g} k={b.k} T={b.T:.6g} s L={b.L} snr={b.snr_db:.3f} dB")
    if args.export_best:
        best = replace(cfg, filter=best_filter_config(result, cfg.filter))
        fir_n, fir_0 = build_filters(best, record.fs)
        _save_filters(args.export_best, fir_n, fir_0)
        with open(os.path.join(args.export_best, "best_config.yaml"), "w") as fh:
            yaml.safe_dump(config_to_dict(best), fh, sort_keys=False)
    return 0


def cmd_run(args, cfg):
    record = load_record(args.input)
    result = run_pipeline(cfg, record, _load_truth(args.truth_pulse))
    write_artifacts(result, args.out)
    n_card = len(result.cardiac_groups)
    print(f"{n_card} cardiac groups, {len(result.groups) - n_card} artifact groups; "
          f"outputs in {args.out}")
    return 0


def build_parser():
    parent = _config_parent()
    ap = argparse.ArgumentParser(prog="ehgclean", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[parent], help="design and discretize the filters")
    p.add_argument("--fs", type=float, default=5000.0, help="sampling rate in Hz")
    p.add_argument("--out", help="directory for taps, descriptors and frequency response")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("synth", parents=[parent], help="generate a synthetic record")
    p.add_argument("--scenario", help="YAML scenario file (default: built-in 8-channel scenario)")
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", parents=[parent], help="compute derivative signals")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("detect", parents=[parent], help="threshold and consolidate detections")
    p.add_argument("--input", help="raw record (filtered here)")
    p.add_argument("--derivative", help="derivative record written by 'filter'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("clean", parents=[parent],
                       help="cluster, estimate amplitudes and subtract cardiac pulses")
    p.add_argument("--input", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--derivative")
    p.add_argument("--truth-pulse", help="ground-truth pulse record for the SNR report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("delays", parents=[parent], help="delay statistics from a beat table")
    p.add_argument("--beats", required=True)
    p.add_argument("--channels", type=int, help="channel count (default: inferred)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_delays)

    p = sub.add_parser("tune", parents=[parent], help="grid search over (n, alpha, k)")
    p.add_argument("--input", required=True)
    p.add_argument("--truth-pulse")
    p.add_argument("--n-values", type=_ints)
    p.add_argument("--alpha-values", type=_floats)
    p.add_argument("--k-values", type=_ints)
    p.add_argument("--export-best", metavar="DIR", help="write the best filter and config here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("run", parents=[parent], help="all stages end to end")
    p.add_argument("--input", required=True)
    p.add_argument("--truth-pulse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            cfg = build_config(args)
            return args.func(args, cfg)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
