"""Simulated quadruped object catching: perception, prediction, selection and leg control."""

from .ballistics import NoiseModel, ThrowSpec, generate_observations, truth_position
from .frames import CameraIntrinsics, PixelDetection, RobotPoint, pixel_to_robot, robot_to_pixel
from .gmm import GaussianMixture, fit_em, select_k
from .predictor import RegressionAccumulators, TrajectoryFit, ingest, solve
from .selector import CatchPlan, SelectorContext, refresh
from .simulator import EpisodeResult, SimConfig, run_episode

__version__ = "0.1.0"
