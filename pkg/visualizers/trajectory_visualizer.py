import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from config import logger
from harness.simulation import RunRecord


class TrajectoryVisualizer:
    """Generate SVG plots of drone and ground-vehicle trajectories"""

    def __init__(self, output_dir="data/output/plots"):
        """Initialize the visualizer with output directory"""
        self.output_dir = output_dir
        self.logger = logger.getChild("trajectory_visualizer")
        os.makedirs(self.output_dir, exist_ok=True)

    def _save(self, filename, save):
        if save:
            filepath = os.path.join(self.output_dir, filename)
            plt.savefig(filepath, format="svg")
            plt.close()
            return filepath
        plt.show()
        plt.close()
        return None

    def generate_xy_trajectory_chart(self, record: RunRecord, nominal: RunRecord = None, save=True,
                                     filename="trajectory_xy.svg"):
        """Top view of the drone (attacked and nominal) and the ground vehicle

        Args:
            record (RunRecord): run to plot
            nominal (RunRecord): paired attack-free run, optional
            save (bool): Whether to save the chart to file

        Returns:
            str: Path to saved chart or None if not saved
        """
        try:
            plt.figure(figsize=(9, 8))
            plt.plot(record.marker[:, 0], record.marker[:, 1], color="gray", linestyle="--",
                     linewidth=1.5, label="Ground vehicle")
            label = "Drone (attacked)" if record.attack_active.any() else "Drone"
            plt.plot(record.true_state[:, 0], record.true_state[:, 1], color="tab:red", linewidth=2, label=label)
            if nominal is not None:
                plt.plot(nominal.true_state[:, 0], nominal.true_state[:, 1], color="tab:blue",
                         linewidth=1.5, alpha=0.8, label="Drone (nominal)")

            start = record.attack_start_step
            if start is not None and start < len(record):
                plt.scatter(record.true_state[start, 0], record.true_state[start, 1], marker="s", s=80,
                            color="magenta", zorder=5, label="Attack start")
            stop = record.attack_stop_step
            if stop is not None and stop < len(record):
                plt.scatter(record.true_state[stop, 0], record.true_state[stop, 1], marker="x", s=80,
                            color="black", zorder=5, label=f"Attack stop ({record.stop_reason})")

            plt.title(f"Trajectories, {record.mission} seed {record.seed}")
            plt.xlabel("x (m)")
            plt.ylabel("y (m)")
            plt.axis("equal")
            plt.grid(True, linestyle="--", alpha=0.7)
            plt.legend(loc="best")
            plt.tight_layout()
            return self._save(filename, save)
        except Exception as e:
            self.logger.error(f"Error generating trajectory chart: {str(e)}")
            plt.close()
            return None

    def generate_separation_chart(self, record: RunRecord, alpha=None, save=True, filename="separation.svg"):
        """Horizontal drone-marker separation and altitude over time"""
        try:
            time = record.time
            fig, (ax_sep, ax_alt) = plt.subplots(2, 1, figsize=(12, 8), sharex=True)
            ax_sep.plot(time, record.separation, linewidth=2, label="Separation")
            if alpha is not None:
                ax_sep.axhline(alpha, color="tab:red", linestyle=":", label=f"alpha = {alpha:g} m")
            if record.attack_start_step is not None:
                ax_sep.axvline(record.attack_start_step * record.dt, color="magenta", linestyle="--",
                               label="Attack start")
            ax_sep.set_ylabel("|P_xy| (m)")
            ax_sep.grid(True, linestyle="--", alpha=0.7)
            ax_sep.legend(loc="best")

            height = record.true_state[:, 2] - record.marker[:, 2]
            ax_alt.plot(time, height, linewidth=2, color="tab:green", label="True")
            ax_alt.plot(time, record.estimate[:, 2] - record.marker[:, 2], linewidth=1, color="tab:orange",
                        alpha=0.8, label="Estimated")
            ax_alt.set_xlabel("Time (s)")
            ax_alt.set_ylabel("Height above marker (m)")
            ax_alt.grid(True, linestyle="--", alpha=0.7)
            ax_alt.legend(loc="best")

            fig.suptitle(f"Separation, {record.mission} seed {record.seed}")
            fig.tight_layout()
            return self._save(filename, save)
        except Exception as e:
            self.logger.error(f"Error generating separation chart: {str(e)}")
            plt.close()
            return None

    def generate_all_visualizations(self, record: RunRecord, nominal: RunRecord = None, alpha=None):
        """Generate every trajectory chart of a run

        Returns:
            list: paths of the charts that were written
        """
        paths = [
            self.generate_xy_trajectory_chart(record, nominal),
            self.generate_separation_chart(record, alpha),
        ]
        written = [p for p in paths if p]
        self.logger.info(f"Generated {len(written)} trajectory charts in {self.output_dir}")
        return written
