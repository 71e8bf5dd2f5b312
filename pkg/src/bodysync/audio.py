"""Mel-spectrogram speech features.

Framing is rigidly left-aligned: frame j covers samples [j*hop, j*hop + win)
with the tail zero-padded, so T' = ceil(n_samples / hop) and one second of
16 kHz audio yields exactly 100 frames.  This keeps the 4-audio-frames-per-
video-frame alignment exact (video 25 fps, audio hop 10 ms).

Frozen analysis choices (the protocol fixes only win=25ms, hop=10ms, 80
bins): Hann window, 512-point FFT, power spectrum, 80 triangular HTK-mel
filters spanning 0-8 kHz, natural log with floor 1e-10.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

SAMPLE_RATE = 16000
WIN_MS = 25
HOP_MS = 10
WIN = SAMPLE_RATE * WIN_MS // 1000   # 400
HOP = SAMPLE_RATE * HOP_MS // 1000   # 160
N_FFT = 512
N_MELS = 80
FMIN = 0.0
FMAX = 8000.0
LOG_FLOOR = 1e-10
AUDIO_FRAMES_PER_VIDEO_FRAME = 4


class AudioError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # mono float amplitudes in [-1, 1]
    rate: int = SAMPLE_RATE


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray   # (T', 80) natural-log mel power
    hop_ms: int = HOP_MS
    win_ms: int = WIN_MS

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, n_fft=N_FFT, rate=SAMPLE_RATE, fmin=FMIN, fmax=FMAX):
    """(n_mels, n_fft//2 + 1) triangular filters on the HTK mel scale."""
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    fb = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - lo) / (ctr - lo)
        down = (hi - bin_freqs) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


_FILTERBANK = mel_filterbank()
_WINDOW = np.hanning(WIN)


def compute_mel_spectrogram(w: Waveform) -> MelSpectrogram:
    """Log-mel power spectrogram of a 16 kHz waveform; deterministic."""
    x = np.asarray(w.samples, dtype=float)
    if w.rate != SAMPLE_RATE:
        raise AudioError(f"waveform rate must be {SAMPLE_RATE} Hz, got {w.rate}")
    if x.ndim != 1:
        raise AudioError(f"waveform must be mono 1-D, got shape {x.shape}")
    if x.size < WIN:
        raise AudioError(f"waveform too short: {x.size} samples < one {WIN}-sample window")
    if not np.all(np.isfinite(x)):
        raise AudioError("waveform contains non-finite samples")
    n_frames = -(-x.size // HOP)  # ceil
    padded = np.zeros((n_frames - 1) * HOP + WIN)
    padded[: x.size] = x
    idx = np.arange(WIN)[None, :] + HOP * np.arange(n_frames)[:, None]
    frames = padded[idx] * _WINDOW
    power = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1)) ** 2
    mel = power @ _FILTERBANK.T
    return MelSpectrogram(frames=np.log(np.maximum(mel, LOG_FLOOR)))


def slice_audio_window(mel: MelSpectrogram, start_video_frame: int, window_T: int) -> np.ndarray:
    """Audio rows aligned with video frames [start, start + window_T).

    Returns rows [4*start, 4*start + 4*window_T): 100 audio frames per
    25 video frames.
    """
    s = AUDIO_FRAMES_PER_VIDEO_FRAME * start_video_frame
    e = s + AUDIO_FRAMES_PER_VIDEO_FRAME * window_T
    if start_video_frame < 0 or e > mel.n_frames:
        raise IndexError(
            f"audio window rows [{s}, {e}) out of range for spectrogram with "
            f"{mel.n_frames} frames"
        )
    return mel.frames[s:e]


def load_wav(path) -> Waveform:
    """Read 16-bit PCM mono audio; resample to 16 kHz by polyphase filtering."""
    with wave.open(str(path), "rb") as f:
        if f.getsampwidth() != 2:
            raise AudioError(f"{path}: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit")
        if f.getnchannels() != 1:
            raise AudioError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    x = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    if rate != SAMPLE_RATE:
        frac = Fraction(SAMPLE_RATE, rate)
        x = resample_poly(x, frac.numerator, frac.denominator)
        x = np.clip(x, -1.0, 1.0)
    return Waveform(samples=x, rate=SAMPLE_RATE)


def save_wav(path, w: Waveform) -> None:
    pcm = np.clip(np.round(np.asarray(w.samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.rate)
        f.writeframes(pcm.tobytes())
