from .losses import loss_dm, loss_fft_dm, loss_fm, loss_mae, spectral_terms
from .process import (
    SAMPLERS,
    ddim_forward,
    ddim_reverse_step,
    ddim_sample,
    direct_predict,
    fm_forward,
    fm_sample_rk2,
    fm_target_velocity,
    predict_x0,
    run_sampler,
)
from .schedule import NoiseSchedule, cosine_schedule, step_indices
