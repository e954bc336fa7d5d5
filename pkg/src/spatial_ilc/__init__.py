"""Spatial iterative learning control for minimum-lap-time flight through a virtual tube."""

from .baseline import ArcCase, DpConfig, DpInfeasible, DpResult, arc_lap_time, arc_optimal_time, arc_time_ratio, dp_lap_time, dp_solve
from .config import ConfigError, Params, load_params, load_track
from .controller import ErrorProfile, IlcController, IlcParams, SpeedProfile, chi, command, gain_k0, update_profile
from .dynamics import DroneState, LapTrace, Outcome, PlantParams, run_lap, saturate, step
from .geometry import GeneratorCurve, Projection, RadiusProfile, VirtualTube, build_tube, circle_tube, project
from .learner import LearningConfig, LearningConfigError, LearningRun, handle_failure, next_profile, run_learning

__version__ = "0.1.0"
