from .engine import SimConfig, Simulator, apply_plan, run, snapshot
from .state import (
    Action,
    ActionKind,
    ClusterSnapshot,
    GpuState,
    Plan,
    RequestRecord,
    SimResult,
    VideoPhase,
    VideoRuntimeState,
)

__all__ = [
    "Action", "ActionKind", "ClusterSnapshot", "GpuState", "Plan", "RequestRecord", "SimConfig", "SimResult",
    "Simulator", "VideoPhase", "VideoRuntimeState", "apply_plan", "run", "snapshot",
]
