"""Figure rendering for markovlens artifacts.

Three figure kinds:

- loss_curve: test/train loss against iteration with the entropy-rate and
  marginal-entropy baselines from the CSV header as horizontal lines, plus a
  numeric asymptote check on the last tenth of the curve;
- pq_grid: heat map of mean zero-position predictions over the (p, q) grid
  with the p + q = 1 diagonal marked;
- pred_scatter: per-position predictions at probe indices with the kernel
  transition probability and the stationary probability as baselines.

Rendering is pure: a pinned style, no timestamps in the output metadata, and
cell values passed through from the CSV without resampling, so identical
inputs produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import ArtifactError, column, meta_float, read_artifact

FigureKind = Literal["loss_curve", "pq_grid", "pred_scatter"]

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "markovlens-plots",
}

ASYMPTOTE_BAND = 0.02
ASYMPTOTE_TAIL_FRACTION = 0.1


class AsymptoteError(ArtifactError):
    """The tail of a loss curve is not within the band of the required baseline."""


@dataclass
class FigureSpec:
    kind: FigureKind
    source: str
    out: str
    require_asymptote: str | None = None  # "entropy_rate" or "marginal_entropy"
    asymptote_band: float = ASYMPTOTE_BAND


@dataclass
class RenderReport:
    out: str
    baselines: dict[str, float] = field(default_factory=dict)
    tail_mean: float | None = None
    nearest_baseline: str | None = None
    tail_max_dev: float | None = None
    cell_means: list[tuple[float, float, float]] | None = None


def _save(fig, out: str) -> None:
    if out.endswith(".svg"):
        fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out, metadata={"Software": "markovlens-plots"})
    plt.close(fig)


def _render_loss_curve(spec: FigureSpec) -> RenderReport:
    meta, table = read_artifact(spec.source)
    iterations = column(table, "iteration", spec.source)
    test_loss = column(table, "test_loss", spec.source)
    train_loss = column(table, "train_loss", spec.source)
    baselines = {
        "entropy_rate": meta_float(meta, "entropy_rate", spec.source),
        "marginal_entropy": meta_float(meta, "marginal_entropy", spec.source),
    }
    fig, ax = plt.subplots()
    ax.plot(iterations, test_loss, label="test loss", color="tab:blue")
    ax.plot(iterations, train_loss, label="train loss", color="tab:blue", alpha=0.35)
    ax.axhline(baselines["entropy_rate"], color="tab:green", linestyle="--",
               label=f"bigram loss {baselines['entropy_rate']:.4f}")
    ax.axhline(baselines["marginal_entropy"], color="tab:red", linestyle=":",
               label=f"unigram loss {baselines['marginal_entropy']:.4f}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss (nats)")
    ax.legend()
    _save(fig, spec.out)

    tail = max(1, int(np.ceil(len(test_loss) * ASYMPTOTE_TAIL_FRACTION)))
    tail_vals = test_loss[-tail:]
    devs = {name: float(np.abs(tail_vals - value).max()) for name, value in baselines.items()}
    nearest = min(devs, key=devs.get)
    report = RenderReport(
        out=spec.out,
        baselines=baselines,
        tail_mean=float(tail_vals.mean()),
        nearest_baseline=nearest,
        tail_max_dev=devs[nearest],
    )
    if spec.require_asymptote is not None:
        want = spec.require_asymptote
        if want not in baselines:
            raise ArtifactError(f"unknown baseline {want!r}")
        if devs[want] > spec.asymptote_band:
            raise AsymptoteError(
                f"last {tail} points deviate from {want} by {devs[want]:.4f} "
                f"(> {spec.asymptote_band})"
            )
    return report


def _render_pq_grid(spec: FigureSpec) -> RenderReport:
    meta, table = read_artifact(spec.source)
    p = column(table, "p", spec.source)
    q = column(table, "q", spec.source)
    pred = column(table, "final_pred_zero", spec.source)
    cells: dict[tuple[float, float], list[float]] = {}
    for pi, qi, pr in zip(p, q, pred):
        cells.setdefault((float(pi), float(qi)), []).append(float(pr))
    means = [(pi, qi, float(np.mean(v))) for (pi, qi), v in sorted(cells.items())]
    ps = np.array(sorted({m[0] for m in means}))
    qs = np.array(sorted({m[1] for m in means}))
    grid = np.full((len(qs), len(ps)), np.nan)
    for pi, qi, val in means:
        grid[np.searchsorted(qs, qi), np.searchsorted(ps, pi)] = val
    fig, ax = plt.subplots()
    extent = (ps.min(), ps.max(), qs.min(), qs.max())
    im = ax.imshow(grid, origin="lower", extent=extent, aspect="auto",
                   vmin=0.0, vmax=1.0, cmap="viridis")
    fig.colorbar(im, ax=ax, label="mean prediction at zero positions")
    diag = np.linspace(max(extent[0], 1 - extent[3]), min(extent[1], 1 - extent[2]), 50)
    ax.plot(diag, 1 - diag, color="white", linestyle="--", label="p + q = 1")
    ax.set_xlabel("p")
    ax.set_ylabel("q")
    ax.legend(loc="upper right")
    _save(fig, spec.out)
    return RenderReport(out=spec.out, cell_means=means)


def _render_pred_scatter(spec: FigureSpec) -> RenderReport:
    meta, table = read_artifact(spec.source)
    index = column(table, "index", spec.source)
    token = column(table, "current_token", spec.source)
    pred = column(table, "prediction", spec.source)
    baselines = {
        "transition_p": meta_float(meta, "transition_p", spec.source),
        "stationary_pi1": meta_float(meta, "stationary_pi1", spec.source),
    }
    zero = token == 0
    fig, ax = plt.subplots()
    ax.scatter(index[zero], pred[zero], s=12, color="tab:blue",
               label="prediction at zero positions")
    ax.axhline(baselines["transition_p"], color="tab:green", linestyle="--",
               label=f"transition probability {baselines['transition_p']:.4f}")
    ax.axhline(baselines["stationary_pi1"], color="tab:red", linestyle=":",
               label=f"stationary probability {baselines['stationary_pi1']:.4f}")
    ax.set_xlabel("probe index (current token 0)")
    ax.set_ylabel("predicted probability of 1")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    _save(fig, spec.out)
    return RenderReport(out=spec.out, baselines=baselines)


_RENDERERS = {
    "loss_curve": _render_loss_curve,
    "pq_grid": _render_pq_grid,
    "pred_scatter": _render_pred_scatter,
}


def render(spec: FigureSpec) -> RenderReport:
    if spec.kind not in _RENDERERS:
        raise ArtifactError(f"unknown figure kind {spec.kind!r}")
    with plt.rc_context(STYLE):
        return _RENDERERS[spec.kind](spec)
