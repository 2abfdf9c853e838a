import struct

import numpy as np
import pytest

from mertk.dsp import (
    L3NET_FRONTEND,
    MFCC_FRONTEND,
    VGGISH_FRONTEND,
    AudioClip,
    SpectrogramConfig,
    deltas,
    frame_windows,
    frontend_mel,
    hz_to_mel,
    l3net_frontend,
    load_audio,
    log_mel_spectrogram,
    mel_filterbank,
    mel_to_hz,
    mfcc,
    mfcc_features,
    mfcc_summary,
    resample,
    stft,
    wav_duration,
    write_wav,
)
from mertk.errors import (
    ClipShorterThanWindow,
    ClipTooShort,
    CorruptContainer,
    EmptyAudio,
    TooFewFrames,
    UnsupportedFormat,
)
from oracles import dft_power


def sine(freq, seconds, sr, amp=0.5):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


# --- clips and WAV I/O -----------------------------------------------------

def test_audio_clip_rejects_stereo_and_nan():
    with pytest.raises(ValueError):
        AudioClip(np.zeros((10, 2)), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(4), 0)


def test_wav_pcm16_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 1000)
    write_wav(tmp_path / "a.wav", x, 8000)
    clip = load_audio(tmp_path / "a.wav")
    assert clip.sample_rate == 8000 and clip.source_id == "a"
    # one quantisation step of 16-bit PCM
    assert np.max(np.abs(clip.samples - x)) <= 1.5 / 32768
    assert wav_duration(tmp_path / "a.wav") == pytest.approx(1000 / 8000)


def test_wav_float32_round_trip(tmp_path, rng):
    x = rng.uniform(-1, 1, 777)
    write_wav(tmp_path / "f.wav", x, 22050, subtype="float32")
    np.testing.assert_array_equal(load_audio(tmp_path / "f.wav").samples, x.astype(np.float32))


def _wav_bytes(tag, channels, rate, bits, data):
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * channels * bits // 8, channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_stereo_pcm_is_downmixed(tmp_path):
    frames = np.array([[1000, 3000], [-2000, 0]], dtype="<i2")
    (tmp_path / "s.wav").write_bytes(_wav_bytes(1, 2, 8000, 16, frames.tobytes()))
    np.testing.assert_allclose(load_audio(tmp_path / "s.wav").samples, [2000 / 32768, -1000 / 32768])


def test_wav_errors(tmp_path):
    (tmp_path / "junk.wav").write_bytes(b"not a wave file at all")
    with pytest.raises(CorruptContainer):
        load_audio(tmp_path / "junk.wav")
    (tmp_path / "u8.wav").write_bytes(_wav_bytes(1, 1, 8000, 8, b"\x80" * 10))
    with pytest.raises(UnsupportedFormat):
        load_audio(tmp_path / "u8.wav")
    (tmp_path / "empty.wav").write_bytes(_wav_bytes(1, 1, 8000, 16, b""))
    with pytest.raises(EmptyAudio):
        load_audio(tmp_path / "empty.wav")
    good = _wav_bytes(1, 1, 8000, 16, b"\x00\x01" * 50)
    (tmp_path / "cut.wav").write_bytes(good[:-20])
    with pytest.raises(CorruptContainer):
        load_audio(tmp_path / "cut.wav")


# --- resampling and windowing ---------------------------------------------

def test_resample_identity_and_length():
    clip = sine(440, 0.5, 44100)
    assert resample(clip, 44100) is clip
    for target in (16000, 22050, 48000):
        assert len(resample(clip, target).samples) == round(len(clip.samples) * target / 44100)


def test_resample_keeps_a_tone_in_band():
    out = resample(sine(1000, 1.0, 44100), 16000)
    spec = np.abs(np.fft.rfft(out.samples))
    assert np.argmax(spec) * 16000 / len(out.samples) == pytest.approx(1000, abs=2)
    # amplitude preserved away from the edges
    assert np.max(np.abs(out.samples[1000:-1000])) == pytest.approx(0.5, abs=0.01)


def test_frame_windows_positions():
    clip = AudioClip(np.arange(16000, dtype=float), 16000)
    wins = frame_windows(clip, 0.96, 0.1)
    assert len(wins) == 1 + int((1.0 - 0.96) / 0.1)
    wins = frame_windows(AudioClip(np.arange(32000, dtype=float), 16000), 0.96, 0.1)
    assert len(wins) == 11  # floor((2 - 0.96) / 0.1) + 1
    for i, w in enumerate(wins):
        assert w.samples[0] == np.floor(i * 0.1 * 16000 + 1e-9)
        assert len(w.samples) == 15360
    with pytest.raises(ClipShorterThanWindow):
        frame_windows(AudioClip(np.zeros(100), 16000), 0.96, 0.1)


# --- spectra --------------------------------------------------------------

def test_stft_matches_direct_dft(rng):
    cfg = SpectrogramConfig(n_fft=64, hop=16, n_mels=8, window="rectangular", padding="none")
    x = rng.standard_normal(200)
    S = stft(AudioClip(x, 8000), cfg)
    assert S.shape == (33, 1 + (200 - 64) // 16)
    for f in range(S.shape[1]):
        np.testing.assert_allclose(np.abs(S[:, f]) ** 2, dft_power(x[f * 16:f * 16 + 64]), rtol=1e-10, atol=1e-9)


def test_stft_parseval(rng):
    cfg = SpectrogramConfig(n_fft=128, hop=128, n_mels=8, window="rectangular", padding="none")
    x = rng.standard_normal(128)
    P = np.abs(stft(AudioClip(x, 8000), cfg)[:, 0]) ** 2
    full = P[0] + P[-1] + 2 * P[1:-1].sum()  # rfft folds the conjugate half
    assert full / 128 == pytest.approx((x ** 2).sum(), rel=1e-12)


def test_stft_too_short():
    with pytest.raises(ClipTooShort):
        stft(AudioClip(np.zeros(10), 8000), SpectrogramConfig(n_fft=64, hop=16, n_mels=8, padding="none"))


def test_mel_scale_reference_points():
    assert hz_to_mel(0.0) == 0.0
    assert abs(hz_to_mel(1000.0) - 1000.0) < 0.1
    f = np.linspace(0, 24000, 97)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-8)
    assert np.all(np.diff(hz_to_mel(f)) > 0)


@pytest.mark.parametrize("fe", [L3NET_FRONTEND, l3net_frontend(128), VGGISH_FRONTEND, MFCC_FRONTEND],
                         ids=["l3-256", "l3-128", "vggish", "mfcc"])
def test_filterbank_well_formed(fe):
    fb = mel_filterbank(fe.config, fe.sample_rate)
    assert fb.shape == (fe.config.n_mels, fe.config.n_fft // 2 + 1)
    assert np.all(fb >= 0) and np.all(fb.sum(axis=1) > 0)
    # peaks move upward in frequency
    assert np.all(np.diff(fb.argmax(axis=1)) >= 0)
    f_max = fe.config.resolved_f_max(fe.sample_rate)
    bins = np.arange(fb.shape[1]) * fe.sample_rate / fe.config.n_fft
    assert fb[:, bins > f_max + fe.sample_rate / fe.config.n_fft].sum() == 0


def test_frontend_frame_counts():
    assert frontend_mel(sine(440, 1.0, 48000), L3NET_FRONTEND).shape == (256, 199)
    assert frontend_mel(sine(440, 0.96, 16000), VGGISH_FRONTEND).shape == (64, 96)
    assert MFCC_FRONTEND.config.n_frames(30 * 22050) == 1501


def test_log_mel_floor_on_silence():
    cfg = VGGISH_FRONTEND.config
    mel = log_mel_spectrogram(AudioClip(np.zeros(16000), 16000), cfg)
    assert np.all(mel.values == np.log(cfg.log_floor))


def test_tone_energy_lands_in_its_band():
    cfg = VGGISH_FRONTEND.config
    mel = log_mel_spectrogram(sine(1000, 1.0, 16000), cfg).values
    centres = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))[1:-1]
    assert abs(centres[mel.mean(axis=1).argmax()] - 1000) < 60


# --- MFCC -----------------------------------------------------------------

def test_deltas_of_ramp_and_edges():
    x = np.arange(10, dtype=float)[None, :] * 3.0
    d = deltas(x)
    np.testing.assert_allclose(d[0, 1:-1], 3.0)
    assert d[0, 0] == 1.5 and d[0, -1] == 1.5


def test_mfcc_summary_layout():
    m = mfcc(sine(440, 2.0, 22050))
    s = mfcc_summary(m)
    np.testing.assert_allclose(s[:20], m.coeffs.mean(axis=1))
    np.testing.assert_allclose(s[20:40], m.coeffs.std(axis=1), atol=1e-12)
    np.testing.assert_allclose(s[40:60], m.deltas.mean(axis=1))
    assert mfcc_summary(m, include_delta2=True).shape == (120,)


def test_mfcc_features_resamples_input():
    a = mfcc_features(sine(440, 2.0, 22050))
    b = mfcc_features(sine(440, 2.0, 44100))
    assert a.shape == b.shape == (80,)
    assert np.max(np.abs(a[:20] - b[:20])) / np.max(np.abs(a[:20])) < 0.05


def test_mfcc_too_few_frames():
    cfg = SpectrogramConfig(n_fft=256, hop=128, n_mels=40, padding="none")
    with pytest.raises(TooFewFrames):
        mfcc_summary(mfcc(AudioClip(np.ones(256), 8000), cfg))


def test_spectrogram_config_validation():
    with pytest.raises(ValueError):
        SpectrogramConfig(n_fft=64, hop=0, n_mels=8).validate()
    with pytest.raises(ValueError):
        SpectrogramConfig(n_fft=64, hop=16, n_mels=8, f_min=5000, f_max=4000).validate(16000)


def test_unpadded_frame_count():
    cfg = SpectrogramConfig(n_fft=512, hop=256, n_mels=16)
    assert cfg.n_frames(1024) == 3
    assert log_mel_spectrogram(AudioClip(np.ones(1024), 8000), cfg).shape == (16, 3)


def test_summary_ignores_frame_order():
    m = mfcc(sine(440, 2.0, 22050))
    rev = type(m)(m.coeffs[:, ::-1], m.deltas[:, ::-1])
    np.testing.assert_allclose(mfcc_summary(rev), mfcc_summary(m), rtol=1e-12, atol=1e-12)
