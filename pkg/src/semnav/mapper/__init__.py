from .config import ProjectionConfig
from .projection import (ModalityGrid, bin_cells, floor_bin, unproject_and_bin,
                         scatter_max)
from .model import (MapperParams, SpatialMapper, MapperStep, MapBoundsError,
                    localization_loss, relative_pose_mm, pose_to_index,
                    index_to_world, pose_onehot, save_mapper, load_mapper,
                    save_map_snapshot, dump_map_csv, ENCODER_STRIDE)

__all__ = [
    "ProjectionConfig", "ModalityGrid", "bin_cells", "floor_bin",
    "unproject_and_bin",
    "scatter_max", "MapperParams", "SpatialMapper", "MapperStep",
    "MapBoundsError", "localization_loss", "relative_pose_mm", "pose_to_index",
    "index_to_world", "pose_onehot", "save_mapper", "load_mapper",
    "save_map_snapshot", "dump_map_csv", "ENCODER_STRIDE",
]
