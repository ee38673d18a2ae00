import numpy as np
import pytest

from ehgclean.detect import (DerivativeSignal, Detection, consolidate, detect_and_consolidate,
                             detect_channel, filter_channel, locate_start, merge_detections,
                             min_percentile, percentile_threshold)
from ehgclean.errors import DensePulseWarning, ValidationError
from ehgclean.fir import discretize
from ehgclean.kernel import KernelSpec
from ehgclean.reconstruct import kernel_zero_crossing
from ehgclean.synth import MultichannelRecord

FIR3 = discretize(KernelSpec(3, 0, 12.0, 12.0, 1.0, 0.1129), 3, 5000.0)


def sig(values, warmup=0, fs=1000.0):
    return DerivativeSignal(channel=0, order=1, samples=np.asarray(values, dtype=float), fs=fs,
                            warmup=warmup)


def test_nearest_rank_percentile():
    assert percentile_threshold(sig(np.arange(1, 101)), 99) == 99
    assert percentile_threshold(sig(np.full(37, -2.5)), 12.5) == 2.5
    # warm-up samples never count
    assert percentile_threshold(sig([1e9, 1e9, 1, 2, 3], warmup=2), 99) == 3


@pytest.mark.parametrize("p", [0, 100, -3, 150])
def test_percentile_range(p):
    with pytest.raises(ValidationError):
        percentile_threshold(sig([1.0, 2.0]), p)


def test_empty_valid_region():
    with pytest.raises(ValidationError):
        percentile_threshold(sig([1.0, 2.0], warmup=2), 50)


def test_min_percentile():
    assert min_percentile(60, 0.1129, 5000.0, 300000) == pytest.approx(88.71, abs=1e-9)
    with pytest.warns(DensePulseWarning):
        assert min_percentile(0, 0.1, 5000.0, 1000) == 100.0
    with pytest.warns(DensePulseWarning):
        assert min_percentile(2, 0.1, 5000.0, 1000) == 0.0
    with pytest.raises(ValidationError):
        min_percentile(1, 0.1, 5000.0, 0)


def test_consolidate_rule():
    assert consolidate([100, 150, 800], 500) == [100, 800]
    assert consolidate([], 500) == []
    assert consolidate([0, 499, 500, 999, 1000], 500) == [0, 500, 1000]


def test_no_crossings():
    assert detect_and_consolidate(sig(np.zeros(100)), 1.0, 10) == []


def test_locate_start_first_sign_change():
    d = sig([3.0, 1.0, -1.0, 2.0])
    det = locate_start(d, Detection(0, 0, 0, 3.0))
    assert det.start_index == 2
    assert det.flags == ()


def test_locate_start_exact_zero_and_fallback():
    assert locate_start(sig([2.0, 1.0, 0.0, -1.0]), Detection(0, 0, 0, 2.0)).start_index == 2
    det = locate_start(sig([3.0, 2.0, 1.0, 0.5]), Detection(0, 0, 0, 3.0))
    assert det.start_index == 0
    assert "no_zero_crossing" in det.flags


def test_locate_start_interpolates():
    # crossing at 1.25 rounds to 1, at 1.75 rounds to 2
    assert locate_start(sig([4.0, 1.0, -3.0]), Detection(0, 0, 0, 4.0)).start_index == 1
    assert locate_start(sig([4.0, 3.0, -1.0]), Detection(0, 0, 0, 4.0)).start_index == 2


def pulse_record(index, n=4000, a=1e-3, fs=5000.0):
    x = np.zeros((1, n))
    x[0, index] = a * fs
    return MultichannelRecord(fs=fs, data=x)


def test_noiseless_pulse_start_is_kernel_zero():
    t0 = kernel_zero_crossing(FIR3)
    for i0 in (1000, 1777, 2500):
        d = filter_channel(pulse_record(i0), 0, FIR3)
        _, dets = detect_channel(d, 99.5, window_T=0.1129)
        assert len(dets) == 1
        exact = i0 + t0 * 5000.0 - 0.5
        assert abs(dets[0].start_index - exact) <= 0.5 + 1e-9
        assert dets[0].start_index >= dets[0].peak_index


def test_filter_channel_rejects_short_record():
    with pytest.raises(ValidationError):
        filter_channel(MultichannelRecord(fs=5000.0, data=np.zeros((1, 100))), 0, FIR3)


def test_default_scenario_detections(default_data):
    record, truth = default_data
    for c in range(record.channels):
        d = filter_channel(record, c, FIR3)
        thr, dets = detect_channel(d, 99.5, window_T=0.1129)
        arrivals = truth.arrivals_for(c)
        hearts = truth.arrivals_for(c, "heart")
        assert len(hearts) == 10
        assert len(dets) == len(arrivals)
        peaks = [x.peak_index for x in dets]
        assert np.all(np.diff(peaks) >= 564)
        for x in dets:
            assert abs(d.samples[x.peak_index]) > thr
            assert x.start_index >= x.peak_index
        # threshold separates artifacts from every pulse peak
        y = {k: FIR3.apply(truth.components[k][c])[FIR3.warmup:]
             for k in ("baseline", "powerline", "noise", "pulse")}
        artifact = np.max(np.abs(y["baseline"] + y["powerline"] + y["noise"]))
        pulse_peaks = [np.max(np.abs(y["pulse"][a.index - FIR3.warmup:a.index - FIR3.warmup + 565]))
                       for a in arrivals]
        assert artifact < thr < min(pulse_peaks)


def test_merge_orders_by_channel_then_peak():
    a = [Detection(1, 50, 52, 1.0), Detection(1, 10, 12, 1.0)]
    b = [Detection(0, 99, 99, 1.0)]
    assert [(d.channel, d.peak_index) for d in merge_detections([a, b])] == [(0, 99), (1, 10), (1, 50)]


def test_detection_json_roundtrip():
    d = Detection(3, 120, 130, 2.5, flags=("no_zero_crossing",))
    assert Detection.from_json(d.to_json(1000.0)) == Detection(3, 120, 130, 2.5,
                                                                 flags=("no_zero_crossing",))
