"""ebcast: gridded-scene channel simulation, environment-basis extraction,
and partial-to-whole CSI reconstruction."""

__version__ = "0.1.0"

from .channel import (ArrayConfig, ChannelMatrix, OfdmConfig, channel_from_paths,
                      flatten, steering_vector, unflatten)
from .errors import (ConditioningError, ConfigurationError, EbcastError,
                     InvalidInputError, OutOfBoundsError, RankDeficiencyError,
                     StoreIntegrityError)
from .evaluate import (DataCondition, MetricRecord, SweepConfig, SweepResult,
                       achievable_rate, cosine_similarity, empirical_cdf,
                       export_dataset, load_dataset, nmse, nmse_db, run_sweep)
from .observation import (NoiseSpec, ObservationMask, add_noise, make_mask,
                          mix_interference, noise_variance, observe,
                          round_half_up)
from .reconstruct import (LmmseModel, ReconstructionResult, hold_last,
                          lmmse_fit, lmmse_predict, lmmse_reconstruct, project,
                          project_reconstruct, synthesize, zero_fill)
from .scene import (CellDescriptor, PathParams, PathSet, SceneConfig, SceneGrid,
                    cell_location_paths, generate_scene, load_scene,
                    location_paths, save_scene)
from .subspace import (EbBasis, EbStore, VertexSnapshotSet, build_store,
                       collect_vertex_snapshots, energy_ratio, extract_eb,
                       grid_lookup, load_store, save_store)

__all__ = [name for name in dir() if not name.startswith("_")]
