"""Feature oracles against independent brute-force references.

Every closed-form feature is recomputed here by a second, deliberately
naive route (explicit loops, scipy.stats, a hand-built cosine matrix) and
compared at tight tolerances over a seeded corpus of generated signals.
"""

import numpy as np
import pytest
import scipy.stats

from finnets import features as fe
from finnets import signals as sg
from finnets.errors import DegenerateSignal, FeatureError
from finnets.rng import rng_for

FS = 128.0


def make_signal(samples, fs=FS):
    return fe.Signal(np.asarray(samples, dtype=np.float64), fs)


def corpus(n=100, seed=9000):
    spec = sg.GenSpec(seed=seed)
    return [sg.generate(spec, i) for i in range(n)]


# ---------------------------------------------------------------------------
# reference implementations (independent coding)
# ---------------------------------------------------------------------------

def ref_entropy(x, n_bins=16):
    lo, hi = x.min(), x.max()
    if lo == hi:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    counts = np.zeros(n_bins)
    for v in x:
        j = int(np.searchsorted(edges, v, side="right")) - 1
        counts[min(max(j, 0), n_bins - 1)] += 1
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / x.size
            h -= p * np.log2(p)
    return h


def ref_f0(x, fs, f_min=1.0, threshold=0.3):
    xm = x - x.mean()
    n = x.size
    r = np.zeros(n)
    for tau in range(n):
        r[tau] = float(np.dot(xm[: n - tau], xm[tau:]))
    r /= r[0]
    max_lag = min(int(np.floor(fs / f_min)), n - 2)
    for lag in range(2, max_lag + 1):
        if r[lag] > threshold and r[lag] >= r[lag - 1] and r[lag] > r[lag + 1]:
            denom = r[lag - 1] - 2.0 * r[lag] + r[lag + 1]
            shift = 0.0 if denom == 0.0 else 0.5 * (r[lag - 1] - r[lag + 1]) / denom
            shift = min(max(shift, -0.5), 0.5)
            return fs / (lag + shift)
    return None


def ref_mel_bank(n_filters, frame_len, fs):
    def to_mel(hz):
        return 2595.0 * np.log10(1.0 + hz / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    freqs = np.arange(frame_len // 2 + 1) * fs / frame_len
    anchors = from_mel(np.linspace(0.0, to_mel(fs / 2.0), n_filters + 2))
    bank = np.zeros((n_filters, freqs.size))
    for j in range(n_filters):
        lo, mid, hi = anchors[j], anchors[j + 1], anchors[j + 2]
        for i, f in enumerate(freqs):
            if lo <= f <= mid and mid > lo:
                bank[j, i] = (f - lo) / (mid - lo)
            elif mid < f <= hi and hi > mid:
                bank[j, i] = (hi - f) / (hi - mid)
    return bank


def ref_mfcc(x, fs, n_coeffs=13):
    frame_len = max(int(round(0.025 * fs)), 2)
    hop = max(int(round(0.010 * fs)), 1)
    window = np.hamming(frame_len)
    bank = ref_mel_bank(26, frame_len, fs)
    n_mels = bank.shape[0]
    # orthonormal DCT-II as an explicit cosine matrix
    k = np.arange(n_mels)[:, None]
    n = np.arange(n_mels)[None, :]
    dct = np.sqrt(2.0 / n_mels) * np.cos(np.pi * (2 * n + 1) * k / (2 * n_mels))
    dct[0] /= np.sqrt(2.0)
    rows = []
    start = 0
    while start + frame_len <= x.size:
        frame = x[start : start + frame_len] * window
        power = np.abs(np.fft.rfft(frame)) ** 2 / frame_len
        energies = bank @ power
        log_e = np.log(np.maximum(energies, 1e-10))
        rows.append((dct @ log_e)[:n_coeffs])
        start += hop
    return np.mean(rows, axis=0)


def ref_regularity(x):
    q = sorted((v * v for v in x), reverse=True)
    total = sum(q)
    acc = sum((i + 1) ** 2 * qi for i, qi in enumerate(q))
    n = len(x)
    val = (acc / (n * n / 3.0 * total)) ** 0.5
    return min(max(val, 0.0), 1.0)


# ---------------------------------------------------------------------------
# oracle equivalence on generated corpora
# ---------------------------------------------------------------------------

def test_entropy_matches_reference_on_corpus():
    for s in corpus():
        assert abs(fe.shannon_entropy(s) - ref_entropy(s.samples)) < 1e-9


def test_moments_match_scipy_on_corpus():
    for s in corpus():
        want_k = scipy.stats.kurtosis(s.samples, fisher=True, bias=True)
        want_s = scipy.stats.skew(s.samples, bias=True)
        assert abs(fe.kurtosis(s) - want_k) < 1e-9
        assert abs(fe.skewness(s) - want_s) < 1e-9


def test_f0_matches_reference_on_corpus():
    periodic = 0
    for s in corpus():
        got = fe.fundamental_frequency(s)
        want = ref_f0(s.samples, s.sample_rate)
        if want is None:
            assert got is None
        else:
            periodic += 1
            assert got is not None and abs(got - want) < 0.5
    assert periodic > 10  # the corpus must actually exercise the detector


def test_mfcc_matches_reference_on_corpus():
    # audio-like rate: the 25 ms frame spans enough samples to be meaningful
    rng = rng_for(77, "mfcc-corpus")
    for _ in range(100):
        x = rng.standard_normal(2000) + 0.5 * np.sin(
            2 * np.pi * rng.uniform(100, 3000) * np.arange(2000) / 8000.0
        )
        got = fe.mfcc(make_signal(x, 8000.0))
        want = ref_mfcc(x, 8000.0)
        np.testing.assert_allclose(got, want, atol=1e-6)


def test_mfcc_matches_reference_at_corpus_rate():
    for s in corpus(30):
        np.testing.assert_allclose(
            fe.mfcc(s), ref_mfcc(s.samples, s.sample_rate), atol=1e-6
        )


def test_regularity_matches_reference_on_corpus():
    for s in corpus():
        assert abs(fe.regularity(s) - ref_regularity(s.samples)) < 1e-9


# ---------------------------------------------------------------------------
# closed-form spot values and properties
# ---------------------------------------------------------------------------

def test_entropy_uniform_bins_is_log2():
    s = make_signal(np.repeat(np.arange(16.0), 4))
    assert fe.shannon_entropy(s) == pytest.approx(4.0, abs=1e-12)


def test_entropy_constant_is_zero():
    assert fe.shannon_entropy(make_signal(np.ones(64))) == 0.0


def test_entropy_bounds_and_permutation_invariance():
    rng = rng_for(5, "entropy")
    x = rng.standard_normal(512)
    h = fe.shannon_entropy(make_signal(x))
    assert 0.0 <= h <= 4.0
    assert fe.shannon_entropy(make_signal(x[::-1])) == pytest.approx(h, abs=1e-12)


def test_kurtosis_alternating_is_minus_two():
    s = make_signal(np.tile([1.0, -1.0], 32))
    assert fe.kurtosis(s) == pytest.approx(-2.0, abs=1e-12)


def test_kurtosis_scale_invariant():
    rng = rng_for(6, "kurt")
    x = rng.standard_normal(256)
    a = fe.kurtosis(make_signal(x))
    b = fe.kurtosis(make_signal(7.5 * x))
    assert a == pytest.approx(b, abs=1e-9)


def test_skewness_spike_pattern_value():
    # {0,0,0,1} repeated: mean 1/4, m2 = 3/16, m3 = 3/32, skew = 2/sqrt(3)
    s = make_signal(np.tile([0.0, 0.0, 0.0, 1.0], 16))
    assert fe.skewness(s) == pytest.approx(2.0 / np.sqrt(3.0), abs=1e-12)


def test_skewness_antisymmetric():
    rng = rng_for(7, "skew")
    x = rng.standard_normal(256) ** 3
    assert fe.skewness(make_signal(-x)) == pytest.approx(
        -fe.skewness(make_signal(x)), abs=1e-12
    )


def test_moments_reject_constant_signal():
    with pytest.raises(DegenerateSignal):
        fe.kurtosis(make_signal(np.full(64, 3.0)))
    with pytest.raises(DegenerateSignal):
        fe.skewness(make_signal(np.full(64, 3.0)))


def test_f0_pure_tones_across_band():
    t = np.arange(512) / FS
    for freq in (2.0, 5.3, 10.0, 17.7, 30.0):
        got = fe.fundamental_frequency(make_signal(np.sin(2 * np.pi * freq * t)))
        assert got is not None and abs(got - freq) < 0.5


def test_f0_harmonic_stack_returns_fundamental():
    t = np.arange(512) / FS
    x = (
        np.sin(2 * np.pi * 10.0 * t)
        + 0.6 * np.sin(2 * np.pi * 20.0 * t)
        + 0.3 * np.sin(2 * np.pi * 30.0 * t)
    )
    got = fe.fundamental_frequency(make_signal(x))
    assert got is not None and abs(got - 10.0) < 0.5


def test_f0_white_noise_is_aperiodic():
    for seed in range(5):
        x = rng_for(seed, "f0-noise").standard_normal(512)
        assert fe.fundamental_frequency(make_signal(x)) is None


def test_f0_requires_two_periods():
    t = np.arange(100) / FS  # under 2*fs/f_min = 256 samples
    with pytest.raises(ValueError):
        fe.fundamental_frequency(make_signal(np.sin(2 * np.pi * 10 * t)))


def test_f0_threshold_gates_detection():
    rng = rng_for(8, "f0-thresh")
    t = np.arange(512) / FS
    x = np.sin(2 * np.pi * 8.0 * t) + 2.5 * rng.standard_normal(512)
    loose = fe.fundamental_frequency(make_signal(x), threshold=0.05)
    strict = fe.fundamental_frequency(make_signal(x), threshold=0.95)
    assert loose is not None
    assert strict is None


def test_mfcc_length_and_finiteness():
    for s in corpus(10):
        c = fe.mfcc(s)
        assert c.shape == (13,)
        assert np.all(np.isfinite(c))


def test_mfcc_amplitude_scaling_only_shifts_c0():
    rng = rng_for(9, "mfcc-scale")
    x = rng.standard_normal(4000)
    a = fe.mfcc(make_signal(x, 8000.0))
    b = fe.mfcc(make_signal(10.0 * x, 8000.0))
    assert abs(b[0] - a[0]) > 1e-3
    np.testing.assert_allclose(a[1:], b[1:], atol=1e-9)


def test_regularity_constant_is_one():
    assert fe.regularity(make_signal(np.ones(512))) == 1.0


def test_regularity_burst_below_sustained():
    t = np.arange(512) / FS
    sustained = np.sin(2 * np.pi * 10 * t)
    burst = np.zeros(512)
    burst[250:260] = 1.0
    assert fe.regularity(make_signal(burst)) < fe.regularity(make_signal(sustained))


def test_regularity_rejects_all_zero():
    with pytest.raises(DegenerateSignal):
        fe.regularity(make_signal(np.zeros(16)))


# ---------------------------------------------------------------------------
# vector plumbing
# ---------------------------------------------------------------------------

def test_normalize_denormalize_round_trip():
    v = fe.FeatureValue(np.array([1.5, -0.5, 4.0]))
    lo = np.array([0.0, -1.0, 0.0])
    hi = np.array([2.0, 1.0, 8.0])
    normed = fe.normalize_feature(v, lo, hi)
    assert np.all((normed.values >= 0) & (normed.values <= 1))
    back = fe.denormalize_feature(normed, lo, hi)
    np.testing.assert_allclose(back.values, v.values, atol=1e-12)


def test_normalize_clips_out_of_range():
    v = fe.FeatureValue(np.array([-10.0, 10.0]))
    normed = fe.normalize_feature(v, np.zeros(2), np.ones(2))
    np.testing.assert_array_equal(normed.values, [0.0, 1.0])


def test_compute_feature_encodes_aperiodic_as_zero():
    x = rng_for(1, "aperiodic").standard_normal(512)
    out = fe.compute_feature(make_signal(x), "f0")
    assert out.shape == (1,) and out[0] == 0.0


def test_compute_feature_widths_match_declaration():
    s = corpus(1)[0]
    for name in fe.FEATURE_NAMES:
        out = fe.compute_feature(s, name)
        assert out.shape == (fe.feature_width(name),)


def test_feature_vector_concatenates_in_order():
    s = corpus(1)[0]
    combined = fe.feature_vector(s, ["entropy", "mfcc", "regularity"])
    assert combined.values.shape == (15,)
    assert combined.values[0] == pytest.approx(fe.shannon_entropy(s))
    assert combined.values[-1] == pytest.approx(fe.regularity(s))


def test_feature_vector_wraps_failures_with_name():
    constant = make_signal(np.ones(64))
    with pytest.raises(FeatureError) as err:
        fe.feature_vector(constant, ["entropy", "kurtosis"])
    assert err.value.feature == "kurtosis"


def test_signal_validation():
    with pytest.raises(ValueError):
        fe.Signal(np.ones((2, 2)), FS)  # not 1-D
    with pytest.raises(ValueError):
        fe.Signal(np.array([1.0, np.nan]), FS)
    with pytest.raises(ValueError):
        fe.Signal(np.ones(4), 0.0)
