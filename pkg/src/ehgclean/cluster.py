"""Cross-channel grouping of detections into beats and cardiac/artifact labelling."""
import warnings
from dataclasses import dataclass, field, replace
from math import ceil

import numpy as np

from .errors import PipelineWarning, ValidationError

CARDIAC = "cardiac"
ARTIFACT = "artifact"


@dataclass(frozen=True)
class ClusterParams:
    delta_t_beat: float = 0.030
    rho: float = 0.6
    ref_channel: int = -1  # negative indexes from the last channel
    allow_out_of_range: bool = False

    def __post_init__(self):
        if not self.delta_t_beat > 0:
            raise ValidationError(f"delta_t_beat must be positive, got {self.delta_t_beat}")
        if not 0 < self.rho <= 1:
            raise ValidationError(f"rho must lie in (0, 1], got {self.rho}")
        if not self.allow_out_of_range:
            if not 0.020 <= self.delta_t_beat <= 0.050:
                raise ValidationError(
                    f"delta_t_beat={self.delta_t_beat} s outside [0.020, 0.050]; "
                    "set allow_out_of_range to override")
            if not 0.5 <= self.rho <= 0.7:
                raise ValidationError(
                    f"rho={self.rho} outside [0.5, 0.7]; set allow_out_of_range to override")

    def resolve_ref(self, channels):
        ref = channels + self.ref_channel if self.ref_channel < 0 else self.ref_channel
        if not 0 <= ref < channels:
            raise ValidationError(f"ref_channel {self.ref_channel} out of range for {channels} channels")
        return ref


@dataclass(frozen=True)
class Member:
    time: float
    channel: int
    detection: object = None


@dataclass
class BeatGroup:
    id: int
    members: list
    classification: str = None
    median_time: float = None
    representatives: dict = field(default_factory=dict)

    @property
    def channels(self):
        return sorted({m.channel for m in self.members})

    @property
    def n_channels(self):
        return len(self.channels)

    def to_json(self):
        return {"group_id": self.id, "classification": self.classification,
                "median_time_s": self.median_time, "channels": self.channels,
                "representatives": [{"channel": c, "start_time_s": m.time}
                                    for c, m in sorted(self.representatives.items())]}


def members_from_detections(detections, fs, time_coord="start"):
    """Time-sorted members; ``time_coord`` picks the start (zero crossing) or the peak."""
    if time_coord not in ("start", "peak"):
        raise ValidationError(f"time_coord must be 'start' or 'peak', got {time_coord!r}")
    attr = "start_index" if time_coord == "start" else "peak_index"
    ms = [Member(getattr(d, attr) / fs, d.channel, d) for d in detections]
    return sorted(ms, key=lambda m: (m.time, m.channel))


def group_beats(members, delta_t_beat):
    """Greedy chaining: a member joins the current group iff it is within
    delta_t_beat of the group's latest time, otherwise it opens a new group."""
    groups = []
    current = []
    for m in sorted(members, key=lambda m: (m.time, m.channel)):
        if current and m.time - current[-1].time > delta_t_beat:
            groups.append(current)
            current = []
        current.append(m)
    if current:
        groups.append(current)
    return [BeatGroup(id=i, members=g) for i, g in enumerate(groups)]


def classify(group, rho, C):
    """cardiac iff the group spans at least ceil(rho * C) distinct channels."""
    if not 0 < rho <= 1:
        raise ValidationError(f"rho must lie in (0, 1], got {rho}")
    # guard against rho * C landing a hair above an integer, e.g. 0.6 * 5
    need = ceil(round(rho * C, 9))
    return CARDIAC if group.n_channels >= need else ARTIFACT


def lower_median(values):
    """Median taking the lower-middle element for even sizes."""
    v = sorted(values)
    return v[(len(v) - 1) // 2]


def select_representatives(group):
    """Keep per channel the member closest to the group's median time (earliest on ties)."""
    med = lower_median([m.time for m in group.members])
    reps = {}
    for m in group.members:  # members are time-sorted so ties keep the earlier one
        best = reps.get(m.channel)
        if best is None or abs(m.time - med) < abs(best.time - med):
            reps[m.channel] = m
    return replace(group, median_time=med, representatives=reps)


def cluster_detections(detections, fs, C, params=ClusterParams(), time_coord="start"):
    """Group, classify and pick representatives; warns on possible beat merging."""
    groups = group_beats(members_from_detections(detections, fs, time_coord), params.delta_t_beat)
    out = []
    for g in groups:
        g.classification = classify(g, params.rho, C)
        g = select_representatives(g)
        out.append(g)
    meds = [g.median_time for g in out]
    close = [(a, b) for a, b in zip(meds, meds[1:]) if b - a < 2 * params.delta_t_beat]
    if close:
        warnings.warn(f"{len(close)} pairs of consecutive beat groups are closer than "
                      f"2 * delta_t_beat; nearby beats may have been merged", PipelineWarning)
    return out


@dataclass
class DelayStats:
    channel: int
    delays: np.ndarray
    median: float = None
    q1: float = None
    q3: float = None

    @property
    def iqr(self):
        return None if self.q1 is None else self.q3 - self.q1

    @property
    def empty(self):
        return self.delays.size == 0


def delay_stats(groups, ref_channel, C):
    """Per-channel delays t_c - t_ref over cardiac groups containing both channels."""
    cardiac = [g for g in groups if g.classification == CARDIAC]
    if not any(ref_channel in g.representatives for g in cardiac):
        raise ValidationError(f"no cardiac group contains the reference channel {ref_channel}")
    out = []
    for c in range(C):
        d = np.array([g.representatives[c].time - g.representatives[ref_channel].time
                      for g in cardiac
                      if c in g.representatives and ref_channel in g.representatives])
        st = DelayStats(channel=c, delays=d)
        if d.size:
            st.median = float(np.median(d))
            st.q1, st.q3 = (float(q) for q in np.percentile(d, [25, 75]))
        out.append(st)
    return out
