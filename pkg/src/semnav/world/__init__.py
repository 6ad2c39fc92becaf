from .scene import (Scene, SceneObject, SceneGenerationError, generate_scene,
                    save_scene, load_scene, CLASS_NAMES, WALL_HEIGHT_MM)
from .graph import (Action, ACTIONS, Pose, EnvGraph, build_graph, UNREACHABLE,
                    bfs_from_source, forward_delta, heading_angle)
from .render import (Observation, RenderConfig, NoiseConfig, render_observation,
                     SEG_VOID, SEG_FLOOR, SEG_WALL, SEG_OBJECT_BASE)
from .episodes import Episode, sample_episode, expert_action

__all__ = [
    "Scene", "SceneObject", "SceneGenerationError", "generate_scene",
    "save_scene", "load_scene", "CLASS_NAMES", "WALL_HEIGHT_MM",
    "Action", "ACTIONS", "Pose", "EnvGraph", "build_graph", "UNREACHABLE",
    "bfs_from_source", "forward_delta", "heading_angle",
    "Observation", "RenderConfig", "NoiseConfig", "render_observation",
    "SEG_VOID", "SEG_FLOOR", "SEG_WALL", "SEG_OBJECT_BASE",
    "Episode", "sample_episode", "expert_action",
]
