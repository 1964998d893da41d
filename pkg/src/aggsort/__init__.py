"""Vision-guided aggregate sorting: pose algebra, arm kinematics, camera and
stereo models, sizing, hand-eye calibration and a sorting simulator."""

__version__ = "0.1.0"
