from .config import TrainConfig
from .trainer import (DaggerSchedule, mixing_probability, build_graphs,
                      MapperEpisode, generate_mapper_episodes, split_holdout,
                      holdout_ape, PretrainResult, pretrain_mapper,
                      PoolEpisode, pool_hash, generate_pool, rollout_onpolicy,
                      DaggerResult, dagger_train_policy, ablation_variants,
                      ablation_matrix, MODALITY_SETS, write_log)

__all__ = [
    "TrainConfig", "DaggerSchedule", "mixing_probability", "build_graphs",
    "MapperEpisode", "generate_mapper_episodes", "split_holdout",
    "holdout_ape", "PretrainResult", "pretrain_mapper",
    "PoolEpisode", "pool_hash", "generate_pool", "rollout_onpolicy",
    "DaggerResult", "dagger_train_policy", "ablation_variants",
    "ablation_matrix", "MODALITY_SETS", "write_log",
]
