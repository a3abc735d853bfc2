import numpy as np
import pytest

from tinyforge.dsp import (
    DspConfig,
    FeatureMatrix,
    block_features,
    dsp_process,
    fft_power_spectrum,
    frame_signal,
    hann_window,
    hz_to_mel,
    mel_filter_matrix,
    mel_filterbank,
    mfcc,
    next_pow2,
    num_frames,
)
from tinyforge.errors import ConfigError, DspError
from tinyforge.project import Sample


# ---------------------------------------------------------------- oracles

def naive_dft_power(frame, fft_size):
    """O(n^2) DFT power spectrum, written independently of the fft path."""
    x = np.zeros(fft_size)
    x[: len(frame)] = frame
    n = np.arange(fft_size)
    out = np.zeros(fft_size // 2 + 1)
    for k in range(fft_size // 2 + 1):
        re = np.sum(x * np.cos(-2.0 * np.pi * k * n / fft_size))
        im = np.sum(x * np.sin(-2.0 * np.pi * k * n / fft_size))
        out[k] = (re * re + im * im) / fft_size
    return out


def direct_mel_energies(power, cfg, sr):
    """Per-filter direct summation over explicit triangle weights."""
    fft_size = cfg.effective_fft_size(sr)
    high = cfg.effective_high_freq(sr)
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    pts = [inv(m) for m in np.linspace(mel(cfg.low_freq_hz), mel(high), cfg.num_mel_filters + 2)]
    out = []
    for i in range(cfg.num_mel_filters):
        left, center, right = pts[i], pts[i + 1], pts[i + 2]
        total = 0.0
        for k in range(fft_size // 2 + 1):
            f = k * sr / fft_size
            if left < f < right:
                w = (f - left) / (center - left) if f <= center else (right - f) / (right - center)
                total += w * power[k]
            elif f == center:
                total += power[k]
        out.append(total)
    return np.array(out)


def direct_dct2_ortho(x):
    """DCT-II from the cosine sum, orthonormal scaling."""
    n = len(x)
    out = np.zeros(n)
    for k in range(n):
        s = 0.0
        for i in range(n):
            s += x[i] * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
        scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        out[k] = scale * s
    return out


# ---------------------------------------------------------------- framing

def test_frame_count_1s_16k_20ms_10ms():
    cfg = DspConfig(block="mfe", frame_length_s=0.02, frame_stride_s=0.01)
    frames = frame_signal(np.zeros(16000), cfg, 16000)
    assert frames.shape == (99, 320)


def test_frame_equals_stride_equals_signal():
    cfg = DspConfig(block="mfe", frame_length_s=1.0, frame_stride_s=1.0)
    frames = frame_signal(np.arange(16000.0), cfg, 16000)
    assert frames.shape == (1, 16000)


def test_frame_count_50ms_25ms():
    cfg = DspConfig(block="mfe", frame_length_s=0.05, frame_stride_s=0.025)
    frames = frame_signal(np.zeros(16000), cfg, 16000)
    assert frames.shape == (39, 800)


@pytest.mark.parametrize(
    "frame_s,stride_s",
    [(0.02, 0.01), (0.02, 0.02), (0.05, 0.025), (0.032, 0.016)],
)
def test_frame_count_formula_vs_counting(frame_s, stride_s):
    # brute-force count: slide a window and count the fits
    sr = 16000
    cfg = DspConfig(block="mfe", frame_length_s=frame_s, frame_stride_s=stride_s)
    n, f, s = 16000, cfg.frame_samples(sr), cfg.stride_samples(sr)
    count = 0
    pos = 0
    while pos + f <= n:
        count += 1
        pos += s
    frames = frame_signal(np.zeros(n), cfg, sr)
    assert frames.shape[0] == count == num_frames(n, f, s)


def test_frames_are_contiguous_slices():
    cfg = DspConfig(block="mfe", frame_length_s=0.02, frame_stride_s=0.01)
    x = np.arange(16000.0)
    frames = frame_signal(x, cfg, 16000)
    for i in (0, 1, 50, 98):
        np.testing.assert_array_equal(frames[i], x[i * 160 : i * 160 + 320])


def test_short_signal_errors():
    cfg = DspConfig(block="mfe", frame_length_s=0.02, frame_stride_s=0.01)
    with pytest.raises(DspError):
        frame_signal(np.zeros(100), cfg, 16000)


# ---------------------------------------------------------------- fft

def test_unit_impulse_power():
    power = fft_power_spectrum(np.array([1.0, 0.0, 0.0, 0.0]), 4, window=False)
    np.testing.assert_allclose(power, [0.25, 0.25, 0.25])


def test_pure_sine_peaks_at_its_bin():
    n = 64
    t = np.arange(n)
    x = np.sin(2.0 * np.pi * 3.0 * t / n)
    power = fft_power_spectrum(x, n, window=False)
    assert np.argmax(power) == 3


def test_fft_matches_naive_dft():
    rng = np.random.default_rng(7)
    for _ in range(100):
        size = int(rng.choice([8, 16, 32, 64]))
        frame = rng.normal(size=size)
        got = fft_power_spectrum(frame, size, window=False)
        want = naive_dft_power(frame, size)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


def test_fft_all_pow2_sizes_vs_oracle():
    rng = np.random.default_rng(11)
    for size in [4, 8, 16, 32, 64, 128, 256, 512]:
        for _ in range(50):
            frame = rng.normal(size=size)
            got = fft_power_spectrum(frame, size, window=False)
            want = naive_dft_power(frame, size)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


def test_fft_rejects_non_pow2():
    with pytest.raises(ConfigError):
        fft_power_spectrum(np.zeros(5), 6)


def test_fft_zero_pads():
    power = fft_power_spectrum(np.array([1.0, 0.0]), 8, window=False)
    assert len(power) == 5
    np.testing.assert_allclose(power, 1.0 / 8.0)


def test_parseval_without_window():
    rng = np.random.default_rng(3)
    for size in [16, 64, 256]:
        x = rng.normal(size=size)
        p = fft_power_spectrum(x, size, window=False)
        # one-sided: interior bins count twice
        total = p[0] + p[-1] + 2.0 * p[1:-1].sum()
        np.testing.assert_allclose(total, np.sum(x * x), rtol=1e-6)


def test_hann_closed_form():
    w = hann_window(5)
    np.testing.assert_allclose(w, [0.0, 0.5, 1.0, 0.5, 0.0], atol=1e-15)
    assert hann_window(1)[0] == 1.0


# ---------------------------------------------------------------- mel

def test_mel_of_700hz():
    assert abs(hz_to_mel(700.0) - 2595.0 * np.log10(2.0)) < 1e-9
    assert abs(hz_to_mel(700.0) - 781.17) < 0.01


def test_constant_spectrum_matches_direct_summation():
    sr = 16000
    cfg = DspConfig(block="mfe", num_mel_filters=20, fft_size=512, low_freq_hz=0.0)
    power = np.ones(257)
    got = mel_filterbank(power, cfg, sr)
    want_energy = direct_mel_energies(power, cfg, sr)
    np.testing.assert_allclose(got, 10.0 * np.log10(want_energy), rtol=1e-9)


def test_random_spectra_match_direct_summation():
    sr = 16000
    cfg = DspConfig(block="mfe", num_mel_filters=32, fft_size=256, low_freq_hz=50.0, high_freq_hz=7500.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        power = rng.uniform(0.0, 2.0, size=129)
        got = mel_filterbank(power, cfg, sr)
        want = direct_mel_energies(power, cfg, sr)
        floor = 10.0 ** (cfg.noise_floor_db / 10.0)
        np.testing.assert_allclose(got, 10.0 * np.log10(np.maximum(want, floor)), rtol=1e-9)


def test_zero_spectrum_clamps_to_noise_floor():
    cfg = DspConfig(block="mfe", num_mel_filters=10, fft_size=256, noise_floor_db=-52.0)
    out = mel_filterbank(np.zeros(129), cfg, 16000)
    np.testing.assert_allclose(out, -52.0)


def test_too_many_filters_for_resolution():
    cfg = DspConfig(block="mfe", num_mel_filters=200, fft_size=64)
    with pytest.raises(ConfigError):
        mel_filter_matrix(cfg, 16000)


# ---------------------------------------------------------------- mfcc

def test_dct_of_constant():
    n = 16
    c = 3.25
    out = mfcc(np.full(n, c), n)
    assert abs(out[0] - c * np.sqrt(n)) < 1e-12
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-12)


def test_dct_orthonormal_roundtrip():
    import scipy.fft

    rng = np.random.default_rng(9)
    x = rng.normal(size=24)
    coeffs = mfcc(x, 24)
    back = scipy.fft.idct(coeffs, type=2, norm="ortho")
    np.testing.assert_allclose(back, x, rtol=1e-9, atol=1e-12)


def test_dct_matches_direct_formula():
    rng = np.random.default_rng(13)
    for _ in range(20):
        x = rng.normal(size=int(rng.integers(4, 40)))
        np.testing.assert_allclose(mfcc(x, len(x)), direct_dct2_ortho(x), rtol=1e-9, atol=1e-12)


def test_mfcc_truncates():
    x = np.random.default_rng(1).normal(size=40)
    assert mfcc(x, 13).shape == (13,)
    with pytest.raises(ConfigError):
        mfcc(x, 41)


# ---------------------------------------------------------------- dsp_process

def _sample(data, sr=16000, label="a"):
    return Sample(
        id="t", label=label, split="train", sample_rate_hz=sr,
        channels=data.shape[1], data=data, metadata={},
    )


def test_raw_block_flattens():
    s = _sample(np.arange(300.0).reshape(100, 3), sr=100)
    fm = dsp_process(s, DspConfig(block="raw"))
    assert (fm.rows, fm.cols) == (1, 300)
    np.testing.assert_array_equal(fm.flatten(), np.arange(300.0))


def test_mfe_shape_table_row():
    rng = np.random.default_rng(0)
    s = _sample(rng.normal(size=(16000, 1)))
    cfg = DspConfig(block="mfe", frame_length_s=0.02, frame_stride_s=0.01,
                    num_mel_filters=40, fft_size=512)
    fm = dsp_process(s, cfg)
    assert (fm.rows, fm.cols) == (99, 40)


def test_mfcc_shape_table_row():
    rng = np.random.default_rng(0)
    s = _sample(rng.normal(size=(16000, 1)))
    cfg = DspConfig(block="mfcc", frame_length_s=0.02, frame_stride_s=0.01,
                    num_mel_filters=32, num_cepstral_coeffs=13, fft_size=512)
    fm = dsp_process(s, cfg)
    assert (fm.rows, fm.cols) == (99, 13)


def test_mfe_rejects_multichannel():
    s = _sample(np.zeros((16000, 2)))
    with pytest.raises(DspError):
        dsp_process(s, DspConfig(block="mfe"))


def test_dsp_process_deterministic():
    rng = np.random.default_rng(2)
    s = _sample(rng.normal(size=(16000, 1)))
    cfg = DspConfig(block="mfcc", fft_size=512)
    a = dsp_process(s, cfg).values
    b = dsp_process(s, cfg).values
    np.testing.assert_array_equal(a, b)


def test_full_pipeline_matches_independent_oracle():
    """frame -> window -> naive dft -> direct mel -> direct dct, end to end."""
    sr = 16000
    rng = np.random.default_rng(21)
    x = rng.normal(size=sr)
    cfg = DspConfig(block="mfcc", frame_length_s=0.02, frame_stride_s=0.01,
                    num_mel_filters=20, num_cepstral_coeffs=10, fft_size=512)
    got = block_features(x, cfg, sr)

    frame_n, stride = 320, 160
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(frame_n) / (frame_n - 1))
    floor = 10.0 ** (cfg.noise_floor_db / 10.0)
    for i in [0, 17, 98]:
        frame = x[i * stride : i * stride + frame_n] * win
        power = naive_dft_power(frame, 512)
        energies = np.maximum(direct_mel_energies(power, cfg, sr), floor)
        want = direct_dct2_ortho(10.0 * np.log10(energies))[:10]
        np.testing.assert_allclose(got[i], want, rtol=1e-6, atol=1e-9)


def test_window_shorter_sample_errors():
    s = _sample(np.zeros((8000, 1)))
    with pytest.raises(DspError):
        dsp_process(s, DspConfig(block="mfe", window_size_s=1.0, fft_size=512))


def test_next_pow2():
    assert [next_pow2(v) for v in (1, 2, 3, 320, 512, 513)] == [1, 2, 4, 512, 512, 1024]


def test_feature_matrix_export(tmp_path):
    fm = FeatureMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
    p = tmp_path / "f.bin"
    fm.to_f32_bin(p)
    assert np.fromfile(p, dtype="<f4").tolist() == [1.0, 2.0, 3.0, 4.0]
    c = tmp_path / "f.csv"
    fm.to_csv(c)
    back = np.loadtxt(c, delimiter=",")
    np.testing.assert_allclose(back, fm.values)
