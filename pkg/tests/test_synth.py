import dataclasses

import numpy as np
import pytest

from ehgclean.errors import ValidationError
from ehgclean.fir import discretize
from ehgclean.kernel import KernelSpec, kernel_derivative_eval
from ehgclean.synth import (BaselineSpec, PowerlineSpec, SourceSpec, SynthScenario,
                            baseline_derivative_bound, check_detectability, default_scenario,
                            generate)

FIR3 = discretize(KernelSpec(3, 0, 12.0, 12.0, 1.0, 0.1129), 3, 5000.0)


def one_pulse(a=1e-3, t=1.0, channels=2, **kw):
    heart = SourceSpec("heart", (t,), (a,), (0.0,) * channels)
    return SynthScenario(fs=5000.0, duration=2.0, channels=channels, sources=(heart,), **kw)


def test_empty_scenario_is_zero():
    rec, truth = generate(SynthScenario(fs=1000.0, duration=1.0, channels=3))
    assert rec.data.shape == (3, 1000)
    assert not rec.data.any()
    assert truth.arrivals == []


def test_single_impulse():
    rec, truth = generate(one_pulse())
    for c in range(2):
        assert rec.data[c, 5000] == pytest.approx(5.0)
        assert np.count_nonzero(rec.data[c]) == 1
    assert [a.index for a in truth.arrivals] == [5000, 5000]


def test_determinism_and_seed_sensitivity():
    a, _ = generate(default_scenario(rng_seed=7))
    b, _ = generate(default_scenario(rng_seed=7))
    c, _ = generate(default_scenario(rng_seed=8))
    assert a.data.tobytes() == b.data.tobytes()
    assert not np.array_equal(a.data, c.data)


def test_noise_follows_documented_seed_split():
    sc = default_scenario(rng_seed=11)
    _, truth = generate(sc)
    kids = np.random.SeedSequence(11).spawn(sc.channels)
    ref = sc.noise_sigma * np.random.default_rng(kids[3]).standard_normal(sc.n_samples)
    np.testing.assert_array_equal(truth.components["noise"][3], ref)


def test_linearity():
    sc = default_scenario(rng_seed=5)
    rec, _ = generate(sc)
    parts = [
        dataclasses.replace(sc, baseline=None, powerline=None, noise_sigma=0.0),
        dataclasses.replace(sc, sources=(), powerline=None, noise_sigma=0.0),
        dataclasses.replace(sc, sources=(), baseline=None, noise_sigma=0.0),
        dataclasses.replace(sc, sources=(), baseline=None, powerline=None),
    ]
    total = sum(generate(p)[0].data for p in parts)
    np.testing.assert_allclose(rec.data, total, rtol=0, atol=1e-15)


def test_components_sum_to_record():
    rec, truth = generate(default_scenario())
    comp = truth.components
    np.testing.assert_array_equal(
        rec.data, comp["pulse"] + comp["baseline"] + comp["powerline"] + comp["noise"])


def test_filtered_pulses_are_shifted_kernels():
    sc = default_scenario(noise_sigma=0.0)
    _, truth = generate(sc)
    y = FIR3.apply(truth.components["pulse"][2])
    ref = np.zeros_like(y)
    i = np.arange(len(y))
    for a in truth.arrivals_for(2):
        ref += a.amplitude * kernel_derivative_eval(FIR3.source_spec, 3, (i - a.index + 0.5) / 5000.0)
    assert np.max(np.abs(y - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_baseline_bound():
    sc = default_scenario()
    t = np.arange(sc.n_samples) / sc.fs
    for b in sc.baseline:
        assert max(f for _, f, _ in b.sinusoids) <= 0.5
        # third derivative of each sinusoid sampled on a dense grid
        d3 = sum(-a * (2 * np.pi * f) ** 3 * np.cos(2 * np.pi * f * t + p) for a, f, p in b.sinusoids)
        assert np.max(np.abs(d3)) <= baseline_derivative_bound(b, 3, sc.duration) * (1 + 1e-12)


def test_polynomial_baseline_bound():
    b = BaselineSpec(poly=(0.0, 0.0, -1.0, 0.5))  # -t^2 + t^3/2
    # first derivative -2t + 1.5 t^2 on [0, 2]: extremes at t=2 (2.0) and t=2/3 (-2/3)
    assert baseline_derivative_bound(b, 1, 2.0) == pytest.approx(2.0)


def test_default_scenario_detectability():
    _, truth = generate(default_scenario())
    rep = check_detectability(truth, FIR3)
    assert rep.min_margin >= 5
    assert set(rep.status) == {"detectable"}


def test_trivially_detectable_and_undetectable():
    _, truth = generate(one_pulse())
    rep = check_detectability(truth, FIR3)
    assert np.isinf(rep.margin).all()
    assert rep.status == ["trivially detectable"] * 2
    _, truth = generate(one_pulse(a=0.0))
    rep = check_detectability(truth, FIR3)
    assert rep.status == ["undetectable"] * 2
    assert rep.min_margin == 0.0


@pytest.mark.parametrize("kw", [
    dict(fs=0.0),
    dict(channels=0),
    dict(noise_sigma=-1.0),
    dict(sources=(SourceSpec("heart", (1.0,), (1.0,), (0.0,)),)),
    dict(sources=(SourceSpec("heart", (1.0,), (1.0,), (0.0, 0.0), channel_mask=(0,)),)),
    dict(sources=(SourceSpec("lung", (1.0,), (1.0,), (0.0, 0.0)),)),
    dict(sources=(SourceSpec("heart", (3.0,), (1.0,), (0.0, 0.0)),)),
    dict(sources=(SourceSpec("heart", (1.0,), (1.0,), (-0.1, 0.0)),)),
    dict(baseline=(BaselineSpec(((1.0, 2.0, 0.0),)),) * 2),
    dict(powerline=PowerlineSpec(50.0, ((1.0,),), ((0.0,),))),
])
def test_invalid_scenarios(kw):
    base = dict(fs=5000.0, duration=2.0, channels=2)
    base.update(kw)
    with pytest.raises(ValidationError):
        SynthScenario(**base)


def test_pulse_near_boundary_rejected():
    with pytest.raises(ValidationError, match="t_max"):
        generate(one_pulse(t=0.1))
