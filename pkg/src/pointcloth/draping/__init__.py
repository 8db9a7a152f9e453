from .checkpoint import (CheckpointError, load_checkpoint, load_model, read_codes, save_checkpoint,
                         save_model, write_codes)
from .fitting import (FitConfig, FitError, FitResult, SilhouetteObjective, average_codes,
                      fit_outfit_code, random_codes)
from .model import (N_POINTS, CodeError, DrapingModel, ModelConfig, clip_code, deform, deform_seeds,
                    encode_code, make_seeds)
from .training import (TrainConfig, TrainingDiverged, TrainResult, body_clouds, evaluate_emd,
                       glo_train, init_codes)
