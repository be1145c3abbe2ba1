import logging

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed ids and no embedded date keep repeated runs byte-identical
SVG_STYLE = {"svg.hashsalt": "tibcad", "svg.fonttype": "none"}


def plot_roc_curves(curves, path, title="ROC"):
    """Plots ROC curves into one SVG figure

    Parameters:
    -----------
    curves : dict(str, RocCurve)
        Curves by legend label, drawn in insertion order
    path : str
        SVG file to write
    title : str (optional)
        Defaults to 'ROC'
    """
    with matplotlib.rc_context(SVG_STYLE):
        fig, ax = plt.subplots(figsize=(5, 5))
        for p, (label, curve) in enumerate(curves.items()):
            ax.plot(curve.fpr, curve.tpr,
                    color=plt.cm.tab10(p),
                    label=f"{label} (Az = {curve.auc:.3f})")
        ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right", fontsize="small")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.info("Saved ROC plot to %s", path)
