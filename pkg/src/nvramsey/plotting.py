"""SVG figures of maps and curves (matplotlib, non-interactive backend)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_map(path, array, title="", units=""):
    """Image of a 2-D map with a colour bar; NaN pixels are left blank."""
    arr = np.asarray(array, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    finite = arr[np.isfinite(arr)]
    lims = np.percentile(finite, [1, 99]) if finite.size else (0, 1)
    im = ax.imshow(arr, origin="lower", vmin=lims[0], vmax=lims[1], cmap="viridis")
    fig.colorbar(im, ax=ax, label=units)
    ax.set_title(title)
    ax.set_xlabel("x (pixel)")
    ax.set_ylabel("y (pixel)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def save_curves(path, x, curves, xlabel="", ylabel="", title="", loglog=False):
    """Line plot of ``curves`` (label -> y values) against shared ``x``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in curves.items():
        ax.plot(x, y, label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(curves) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
