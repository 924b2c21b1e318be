# Visualization package initialization
from .trajectory_visualizer import TrajectoryVisualizer
from .alarm_visualizer import AlarmVisualizer
