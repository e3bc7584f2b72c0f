"""Frequency-blended local/global temporal attention kernels.

Thin wrapper around the C++ extension module; everything public lives
in ``freelong._freelong`` and is re-exported here.
"""

from ._freelong import (  # noqa: F401
    RNG_ALGORITHM,
    AttentionWeights,
    FreelongIoError,
    FreelongNumericalError,
    FreelongValidationError,
    attention_diagonality,
    band_energy_fraction,
    band_masks,
    bench_attention,
    embedding_for_id,
    fft3,
    frequency_report,
    gaussian_lpf,
    global_attention,
    ifft3,
    local_attention,
    project_qkv,
    read_tensor,
    relative_band_ratio,
    reschedule_noise,
    run_toy_denoise,
    sample_gaussian,
    segment_conditioning,
    sliding_window_attention,
    sliding_window_offsets,
    spectral_blend,
    spectralblend_ta,
    temporal_flicker,
    tensor_checksum,
    write_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
