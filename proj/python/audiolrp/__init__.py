"""Audio classification with layer-wise relevance propagation."""

from ._core import (
    SAMPLE_RATE,
    SIGNAL_LENGTH,
    Classifier,
    ConfigError,
    DataError,
    Error,
    NumericError,
    config_hash,
    read_wav,
    render_heatmap,
    render_waveform,
    resample_to_8k,
    run,
    scale_frequency_axis,
    select_indices,
    spectrogram,
    stft,
)

__all__ = [
    "SAMPLE_RATE",
    "SIGNAL_LENGTH",
    "Classifier",
    "ConfigError",
    "DataError",
    "Error",
    "NumericError",
    "config_hash",
    "read_wav",
    "render_heatmap",
    "render_waveform",
    "resample_to_8k",
    "run",
    "scale_frequency_axis",
    "select_indices",
    "spectrogram",
    "stft",
]
