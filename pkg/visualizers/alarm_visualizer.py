import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from matplotlib.colors import ListedColormap

from config import logger
from harness.monte_carlo import MonteCarloReport, verdict_matrix


class AlarmVisualizer:
    """Generate SVG plots of detector alarm rates"""

    def __init__(self, output_dir="data/output/plots"):
        """Initialize the visualizer with output directory"""
        self.output_dir = output_dir
        self.logger = logger.getChild("alarm_visualizer")
        os.makedirs(self.output_dir, exist_ok=True)

    def generate_alarm_rate_chart(self, report: MonteCarloReport, save=True, filename="alarm_rates.svg"):
        """Per-step average alarm rate of each detector, nominal against attacked

        Args:
            report (MonteCarloReport): batch statistics
            save (bool): Whether to save the chart to file

        Returns:
            str: Path to saved chart or None if not saved
        """
        try:
            names = list(report.per_step_fa)
            if not names:
                self.logger.warning("No detector rates to plot")
                return None
            fig, axes = plt.subplots(len(names), 1, figsize=(12, 3.5 * len(names)), sharex=True, squeeze=False)
            steps = np.arange(report.window_steps)
            for ax, name in zip(axes[:, 0], names):
                ax.plot(steps, report.per_step_fa[name], color="tab:blue", linewidth=1.2, label="Nominal (p_FA)")
                ax.axhline(report.p_fa[name], color="tab:blue", linestyle=":", linewidth=1)
                stats = report.stats.get(name)
                if stats is not None:
                    ax.plot(steps, stats.per_step_td, color="tab:red", linewidth=1.2, alpha=0.8,
                            label="Attacked (p_TD)")
                    ax.axhline(stats.p_td, color="tab:red", linestyle=":", linewidth=1)
                ax.set_ylim(-0.02, 1.02)
                ax.set_ylabel("Alarm rate")
                ax.set_title(name)
                ax.grid(True, linestyle="--", alpha=0.7)
                ax.legend(loc="upper right")
            axes[-1, 0].set_xlabel("Steps after window start")
            fig.suptitle(f"Average alarm rate over {report.n_runs} runs ({report.scenario})")
            fig.tight_layout()

            if save:
                filepath = os.path.join(self.output_dir, filename)
                plt.savefig(filepath, format="svg")
                plt.close()
                return filepath
            plt.show()
            plt.close()
            return None
        except Exception as e:
            self.logger.error(f"Error generating alarm rate chart: {str(e)}")
            plt.close()
            return None

    def generate_alarm_heatmap(self, records, detector, length, require_attack=False, save=True, filename=None):
        """Run x step alarm map of one detector; masked cells are left blank

        Args:
            records (list): RunRecords of one batch
            detector (str): detector name
            length (int): evaluation window in steps
            require_attack (bool): mask steps where the attack was not active

        Returns:
            str: Path to saved chart or None if not saved
        """
        try:
            alarms, mask = verdict_matrix(records, detector, length, require_attack)
            data = pd.DataFrame(np.where(mask, alarms.astype(float), np.nan),
                                index=[f"seed {r.seed}" for r in records])

            plt.figure(figsize=(14, max(3, 0.3 * len(records) + 2)))
            cmap = ListedColormap(["#f0f0f0", "#d62728"])
            sns.heatmap(data, cmap=cmap, vmin=0, vmax=1, cbar=False, xticklabels=max(1, length // 10))
            plt.title(f"{detector} alarms per run and step")
            plt.xlabel("Steps after window start")
            plt.ylabel("Run")
            plt.tight_layout()

            if save:
                filepath = os.path.join(self.output_dir, filename or f"{detector}_alarm_heatmap.svg")
                plt.savefig(filepath, format="svg")
                plt.close()
                return filepath
            plt.show()
            plt.close()
            return None
        except Exception as e:
            self.logger.error(f"Error generating alarm heatmap: {str(e)}")
            plt.close()
            return None

    def generate_all_visualizations(self, report: MonteCarloReport, nominal, attacked=None):
        """Generate the rate chart and one heatmap per detector

        Returns:
            list: paths of the charts that were written
        """
        paths = [self.generate_alarm_rate_chart(report)]
        records = attacked if attacked else nominal
        for name in report.per_step_fa:
            paths.append(self.generate_alarm_heatmap(records, name, report.window_steps,
                                                     require_attack=bool(attacked)))
        written = [p for p in paths if p]
        self.logger.info(f"Generated {len(written)} alarm charts in {self.output_dir}")
        return written
