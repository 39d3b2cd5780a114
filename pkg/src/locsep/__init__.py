"""Location-guided multichannel speech separation."""

__version__ = "0.1.0"

from .audio import Spectrogram, TimeSignal, istft, read_wav, stft, write_wav
from .beamformers import (apply_beamformer, gev_weights, r1_mwf_weights,
                          sdw_mwf_weights)
from .evaluation import EvalRecord, bucket_report, doa_error, si_sdr
from .front import (Mask, csipd_features, ds_beamform, heuristic_mask,
                    load_external_mask, oracle_mask, save_mask)
from .geometry import (ArrayGeometry, SourceDirection, linear_array,
                       steering_vector, tdoa)
from .localization import (angular_spectrum, gcc_phat, oracle_select,
                           top_k_peaks)
from .pipeline import PipelineConfig, separate
from .scene import (SceneConfig, render_scene, sample_scene, simulate_rir,
                    synth_noise)
from .stats import batch_cov, recursive_cov, update_noise_cov, update_source_cov
