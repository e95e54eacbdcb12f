"""Self-supervised CT reconstruction under spatially correlated noise.

The package trains image-to-image networks directly on noisy sinograms:

* the doubled-noise method (NN2I) adds a second, known noise realization and
  fits a weighted measurement-domain consistency target,
* its one-step predecessor (NN2N) fits plain measurement consistency,
* the angle-splitting baseline (N2I) trains on FBPs of complementary views.

See README.md for the experiment harness and CLI.
"""

from .config import (DatasetConfig, ExperimentConfig, NoiseConfig, SplitConfig,
                     from_dict, load_config, paper_preset, save_config,
                     split_dataset, to_dict, validate)
from .geometry import (GradField, ImageGrid, ScanGeometry, Sinogram,
                       default_num_detectors, inscribed_circle_mask)
from .harness import (RunRecord, StageError, compare_methods,
                      default_method_specs, evaluate_run, infer_run,
                      robustness_sweep, run_experiment, synthesize)
from .metrics import MetricReport, psnr, ssim
from .methods import (MethodSpec, TrainState, TrainingSample,
                      check_conditional_identity, check_theorem1_linear,
                      eval_stream, infer, n2i_train_pair, nn2i_loss,
                      nn2n_loss, parse_method_label, select_checkpoint, train)
from .network import (NetConfig, OptimState, ParamVector, adam_step,
                      init_params, load_params, loss_grad, net_forward,
                      param_count, paper_net_config, save_params)
from .noise import (ITER_EVAL, NoiseSpec, RngStream, gaussian_kernel,
                    noise_for_geometry, sample_correlated_noise)
from .phantoms import disk_phantom, phantom_set, random_phantom, shepp_logan
from .tomo import (fbp, get_projector, grad_adjoint, grad_forward,
                   radon_adjoint, radon_forward)

__version__ = "0.1.0"
