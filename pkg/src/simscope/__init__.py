"""simscope: diagnose vision-model failure modes with simulated scenes.

Composable scene controls, policy-guided search over their parameter space,
a deterministic built-in renderer (swappable over a wire protocol), a
client-server orchestrator with exactly-once logging, and the analysis
suite plus dashboard API that turn the logs into insights.
"""

from .assets import (
    AssetLibrary,
    EnvironmentAsset,
    MeshAsset,
    TextureAsset,
    load_environment,
    load_mesh,
    load_texture,
)
from .controls import (
    ControlDescriptor,
    ControlInstantiation,
    ControlRegistry,
    apply_post,
    apply_rendered,
    compose,
    register_control_type,
)
from .evaluator import (
    PredictionResult,
    evaluate_classification,
    evaluate_detection,
    register_evaluator,
)
from .orchestrator import Orchestrator, ThroughputMeter, run_experiment
from .policy import (
    GridPolicy,
    PolicyProposal,
    RandomPolicy,
    SearchSpace,
    build_space,
    register_policy,
)
from .render import RenderOutput, barycentric_uv, render, sample_equirect
from .scene import SceneState, default_scene

__version__ = "0.1.0"

__all__ = [
    "AssetLibrary",
    "ControlDescriptor",
    "ControlInstantiation",
    "ControlRegistry",
    "EnvironmentAsset",
    "GridPolicy",
    "MeshAsset",
    "Orchestrator",
    "PolicyProposal",
    "PredictionResult",
    "RandomPolicy",
    "RenderOutput",
    "SceneState",
    "SearchSpace",
    "TextureAsset",
    "ThroughputMeter",
    "apply_post",
    "apply_rendered",
    "barycentric_uv",
    "build_space",
    "compose",
    "default_scene",
    "evaluate_classification",
    "evaluate_detection",
    "load_environment",
    "load_mesh",
    "load_texture",
    "register_control_type",
    "register_evaluator",
    "register_policy",
    "render",
    "run_experiment",
    "sample_equirect",
]
