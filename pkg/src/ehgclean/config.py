"""Pipeline configuration and YAML config/scenario files with line-precise errors."""
from dataclasses import dataclass, field, fields, replace

import yaml

from .cluster import ClusterParams
from .detect import DEFAULT_LOBE_TOLERANCE, DEFAULT_PERCENTILE
from .errors import ValidationError
from .kernel import KernelSpec
from .synth import BaselineSpec, PowerlineSpec, SourceSpec, SynthScenario


@dataclass(frozen=True)
class FilterConfig:
    n: int = 3
    N: int = 0
    alpha: float = 12.0
    beta: float = None  # None: same as alpha
    theta: float = 1.0
    k: int = 6
    window_T: float = None  # explicit override of the designed window

    @property
    def beta_value(self):
        return self.alpha if self.beta is None else self.beta


@dataclass(frozen=True)
class DetectConfig:
    percentile: float = DEFAULT_PERCENTILE
    L_min: int = None
    lobe_tolerance: float = DEFAULT_LOBE_TOLERANCE


@dataclass(frozen=True)
class ClusterConfig:
    delta_t_beat: float = 0.030
    rho: float = 0.6
    ref_channel: int = -1
    time_coord: str = "start"
    allow_out_of_range: bool = False

    def params(self):
        return ClusterParams(self.delta_t_beat, self.rho, self.ref_channel, self.allow_out_of_range)


@dataclass(frozen=True)
class IOConfig:
    input: str = None
    output: str = None
    format: str = None
    write_series: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    filter: FilterConfig = field(default_factory=FilterConfig)
    f0: float = 50.0
    detect: DetectConfig = field(default_factory=DetectConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    io: IOConfig = field(default_factory=IOConfig)
    seed: int = 0


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# (section, key) -> (predicate, description)
_CHECKS = {
    ("filter", "n"): (lambda v: _is_int(v) and v >= 0, "a nonnegative integer"),
    ("filter", "N"): (lambda v: _is_int(v) and v >= 0, "a nonnegative integer"),
    ("filter", "alpha"): (lambda v: _is_num(v) and v > -1, "a number > -1"),
    ("filter", "beta"): (lambda v: v is None or (_is_num(v) and v > -1), "a number > -1"),
    ("filter", "theta"): (lambda v: _is_num(v) and -1 <= v <= 1, "a number in [-1, 1]"),
    ("filter", "k"): (lambda v: _is_int(v) and v >= 1, "a positive integer"),
    ("filter", "window_T"): (lambda v: v is None or (_is_num(v) and v > 0), "a positive number of seconds"),
    (None, "f0"): (lambda v: _is_num(v) and v > 0, "a positive frequency in Hz"),
    (None, "seed"): (_is_int, "an integer"),
    ("detect", "percentile"): (lambda v: _is_num(v) and 0 < v < 100, "a number in (0, 100)"),
    ("detect", "L_min"): (lambda v: v is None or (_is_int(v) and v >= 1), "a positive integer"),
    ("detect", "lobe_tolerance"): (lambda v: _is_num(v) and 0 <= v < 1, "a number in [0, 1)"),
    ("cluster", "delta_t_beat"): (lambda v: _is_num(v) and v > 0, "a positive number of seconds"),
    ("cluster", "rho"): (lambda v: _is_num(v) and 0 < v <= 1, "a number in (0, 1]"),
    ("cluster", "ref_channel"): (_is_int, "an integer channel index"),
    ("cluster", "time_coord"): (lambda v: v in ("start", "peak"), "'start' or 'peak'"),
    ("cluster", "allow_out_of_range"): (lambda v: isinstance(v, bool), "true or false"),
    ("io", "input"): (lambda v: v is None or isinstance(v, str), "a path"),
    ("io", "output"): (lambda v: v is None or isinstance(v, str), "a path"),
    ("io", "format"): (lambda v: v in (None, "csv", "binary"), "'csv' or 'binary'"),
    ("io", "write_series"): (lambda v: isinstance(v, bool), "true or false"),
}

_SECTIONS = {"filter": FilterConfig, "detect": DetectConfig, "cluster": ClusterConfig,
             "io": IOConfig}


def _key_lines(node, prefix=()):
    """Map key paths to 1-based line numbers from a composed YAML node tree."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            lines[path] = k.start_mark.line + 1
            lines.update(_key_lines(v, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = prefix + (i,)
            lines[path] = v.start_mark.line + 1
            lines.update(_key_lines(v, path))
    return lines


def read_yaml(path):
    """Parse YAML returning (data, {key path: line})."""
    with open(path) as fh:
        text = fh.read()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ValidationError(f"{where}: {getattr(e, 'problem', e)}") from None
    return (data or {}), _key_lines(node) if node is not None else {}


def _err(path, lines, keypath, msg):
    line = lines.get(tuple(keypath))
    loc = f"{path}:{line}" if line else str(path)
    return ValidationError(f"{loc}: {'.'.join(map(str, keypath))}: {msg}")


def config_from_dict(data, path="<config>", lines=None):
    lines = lines or {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    top = {}
    sections = {}
    for key, val in data.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise _err(path, lines, [key], "must be a mapping")
            names = {f.name for f in fields(_SECTIONS[key])}
            for k, v in val.items():
                if k not in names:
                    raise _err(path, lines, [key, k], f"unknown key (expected one of {sorted(names)})")
                ok, what = _CHECKS[(key, k)]
                if not ok(v):
                    raise _err(path, lines, [key, k], f"must be {what}, got {v!r}")
            sections[key] = _SECTIONS[key](**val)
        elif (None, key) in _CHECKS:
            ok, what = _CHECKS[(None, key)]
            if not ok(data[key]):
                raise _err(path, lines, [key], f"must be {what}, got {val!r}")
            top[key] = float(val) if key == "f0" else val
        else:
            raise _err(path, lines, [key], "unknown key")
    cfg = PipelineConfig(**sections, **top)
    try:
        validate_config(cfg)
    except ValidationError as e:
        keypath = getattr(e, "keypath", None)
        raise _err(path, lines, keypath or [], str(e)) from None
    return cfg


def _tagged(exc, *keypath):
    exc.keypath = list(keypath)
    return exc


def validate_config(cfg):
    """Cross-field checks of the upstream modules, tagged with the offending key."""
    f = cfg.filter
    if not (f.alpha > f.n - 1):
        raise _tagged(ValidationError(f"alpha={f.alpha} must exceed n - 1 = {f.n - 1}"),
                      "filter", "alpha")
    if not (f.beta_value > f.n - 1):
        raise _tagged(ValidationError(f"beta={f.beta_value} must exceed n - 1 = {f.n - 1}"),
                      "filter", "beta")
    if f.window_T is None and f.beta_value != f.alpha:
        raise _tagged(ValidationError("the designed window needs beta == alpha; "
                                      "give window_T explicitly for asymmetric kernels"),
                      "filter", "beta")
    c = cfg.cluster
    try:
        c.params()
    except ValidationError as e:
        key = "rho" if "rho" in str(e) else "delta_t_beat"
        raise _tagged(e, "cluster", key) from None


def load_config(path):
    data, lines = read_yaml(path)
    return config_from_dict(data, path, lines)


def config_to_dict(cfg):
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = {g.name: getattr(v, g.name) for g in fields(v)} if f.name in _SECTIONS else v
    return out


def override(cfg, section, **kwargs):
    """Return cfg with non-None keyword values replaced in ``section`` (None = top level)."""
    kw = {k: v for k, v in kwargs.items() if v is not None}
    if not kw:
        return cfg
    if section is None:
        return replace(cfg, **kw)
    return replace(cfg, **{section: replace(getattr(cfg, section), **kw)})


def kernel_spec(cfg, window_T):
    f = cfg.filter
    return KernelSpec(deriv_order=f.n, poly_degree=f.N, alpha=f.alpha, beta=f.beta_value,
                      theta=f.theta, window_T=window_T)


# --- scenario files -------------------------------------------------------

def _tuple(v):
    return tuple(tuple(x) if isinstance(x, list) else x for x in v)


def scenario_from_dict(data, path="<scenario>", lines=None):
    lines = lines or {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    known = {"fs", "duration", "channels", "sources", "baseline", "powerline", "noise_sigma",
             "rng_seed", "t_max"}
    for key in data:
        if key not in known:
            raise _err(path, lines, [key], f"unknown key (expected one of {sorted(known)})")
    try:
        sources = []
        for i, s in enumerate(data.get("sources") or []):
            try:
                sources.append(SourceSpec(
                    source_id=s["source_id"], pulse_times=tuple(s["pulse_times"]),
                    amplitudes=tuple(s["amplitudes"]), channel_delays=tuple(s["channel_delays"]),
                    channel_mask=tuple(s["channel_mask"]) if s.get("channel_mask") is not None else None))
            except (KeyError, TypeError) as e:
                raise _err(path, lines, ["sources", i], f"malformed source: {e}") from None
        baseline = None
        if data.get("baseline") is not None:
            baseline = tuple(BaselineSpec(sinusoids=_tuple(b.get("sinusoids", ())),
                                          poly=tuple(b.get("poly", ())))
                             for b in data["baseline"])
        powerline = None
        if data.get("powerline") is not None:
            p = data["powerline"]
            powerline = PowerlineSpec(f0=float(p.get("f0", 50.0)),
                                      amplitudes=_tuple(p["amplitudes"]), phases=_tuple(p["phases"]))
        return SynthScenario(
            fs=float(data["fs"]), duration=float(data["duration"]), channels=int(data["channels"]),
            sources=tuple(sources), baseline=baseline, powerline=powerline,
            noise_sigma=float(data.get("noise_sigma", 0.0)), rng_seed=int(data.get("rng_seed", 0)),
            t_max=float(data.get("t_max", 0.3)))
    except KeyError as e:
        raise ValidationError(f"{path}: missing required key {e}") from None
    except ValidationError as e:
        msg = str(e)
        if msg.startswith(str(path)):
            raise
        raise _err(path, lines, _scenario_key(data, msg), msg) from None


def _scenario_key(data, msg):
    """Best-effort key path for a scenario validation message."""
    ids = [s.get("source_id") for s in data.get("sources") or [] if isinstance(s, dict)]
    for i, sid in enumerate(ids):
        if msg.startswith(f"{sid}:") or (sid == "heart" and "heart source" in msg):
            return ["sources", i]
    for key in ("baseline", "powerline", "noise_sigma", "duration", "channels", "fs"):
        if key.split("_")[0] in msg:
            return [key]
    return []


def load_scenario(path):
    data, lines = read_yaml(path)
    return scenario_from_dict(data, path, lines)


def scenario_to_dict(sc):
    return {
        "fs": sc.fs, "duration": sc.duration, "channels": sc.channels,
        "sources": [{"source_id": s.source_id, "pulse_times": list(s.pulse_times),
                     "amplitudes": list(s.amplitudes), "channel_delays": list(s.channel_delays),
                     "channel_mask": list(s.channel_mask) if s.channel_mask is not None else None}
                    for s in sc.sources],
        "baseline": None if sc.baseline is None else [
            {"sinusoids": [list(x) for x in b.sinusoids], "poly": list(b.poly)} for b in sc.baseline],
        "powerline": None if sc.powerline is None else {
            "f0": sc.powerline.f0, "amplitudes": [list(r) for r in sc.powerline.amplitudes],
            "phases": [list(r) for r in sc.powerline.phases]},
        "noise_sigma": sc.noise_sigma, "rng_seed": sc.rng_seed, "t_max": sc.t_max,
    }
