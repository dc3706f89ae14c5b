from .batching import ImageBudgetOption, dynamic_wait_budget, edf_image_batch, edf_plans
from .candidates import CandidateAction, VideoCandidate, gen_video_candidates
from .knapsack import Selection, dp_solve
from .scheduler import GenServeConfig, GenServeScheduler, PreemptionOnlyScheduler
from .slack import ResumePolicy, compute_slack, eq3_slack, resume_check, select_victims

__all__ = [
    "CandidateAction", "GenServeConfig", "GenServeScheduler", "ImageBudgetOption", "PreemptionOnlyScheduler",
    "ResumePolicy", "Selection", "VideoCandidate", "compute_slack", "dp_solve",
    "dynamic_wait_budget", "edf_image_batch", "edf_plans", "eq3_slack", "gen_video_candidates",
    "resume_check", "select_victims",
]
