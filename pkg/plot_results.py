"""
Result Table Plotter
Draws the average squared error curves of a result CSV written by kasolve.
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from kasolve.errors import IoFailure
from kasolve.harness import ResultTable, read_table

LINE_STYLES: Dict[str, str] = {
    "ls": "k--",
    "map": "k:",
    "kaczmarz": "b-",
    "ka_kaczmarz": "r-",
    "lms": "b-",
    "ka_lms": "r-",
}

LABELS: Dict[str, str] = {
    "ls": "LS",
    "map": "MAP",
    "kaczmarz": "Kaczmarz",
    "ka_kaczmarz": "KA-Kaczmarz",
    "lms": "LMS",
    "ka_lms": "KA-LMS",
}


class ResultPlotter:
    """Creates semilog error plots from result tables"""

    def __init__(self, fig_width: float = 8, fig_height: float = 5):
        self.fig_width = fig_width
        self.fig_height = fig_height

    def draw_table(self, table: ResultTable, title: Optional[str] = None):
        """Plot every column of the table against its axis; returns the figure"""
        fig, ax = plt.subplots(figsize=(self.fig_width, self.fig_height))
        for name, values in table.columns.items():
            ax.semilogy(table.axis, values, LINE_STYLES.get(name, "-"),
                        label=LABELS.get(name, name), linewidth=1.5)

        ax.set_xlabel("SNR [dB]" if table.axis_name == "snr_db" else "Iteration k")
        ax.set_ylabel("Average squared error")
        if title is None:
            config = table.metadata.get("config", {})
            title = config.get("preset") or config.get("kind")
        if title:
            ax.set_title(title, fontsize=14, fontweight="bold")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        return fig

    def save(self, csv_path: Path, out_path: Optional[Path] = None) -> Path:
        """Read a result CSV and write the plot as PNG next to it (or to out_path)"""
        table = read_table(csv_path)
        out_path = out_path or Path(csv_path).with_suffix(".png")
        fig = self.draw_table(table)
        fig.savefig(out_path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Plot kasolve result tables")
    parser.add_argument("tables", nargs="+", help="result CSV files")
    parser.add_argument("--out-dir", default=None, help="directory for the PNG files (default: next to each CSV)")
    args = parser.parse_args(argv)

    plotter = ResultPlotter()
    for csv_path in map(Path, args.tables):
        out_path = None
        if args.out_dir is not None:
            out_path = Path(args.out_dir) / (csv_path.stem + ".png")
        try:
            written = plotter.save(csv_path, out_path)
        except IoFailure as e:
            print(f"Error plotting {csv_path}: {e}", file=sys.stderr)
            return 1
        print(f"- {written}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
