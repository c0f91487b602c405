"""Evaluation: PCK at several thresholds, the per-keypoint average
normalized response at the ground-truth cell, and heatmap export.

PCK here normalizes by the figure bounding-box diagonal (the synthetic
figures have no calibrated head segment), reported as "PCK@alpha (diag)".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff
from .data import PoseDataset

DEFAULT_ALPHAS = (0.1, 0.2, 0.5)


@dataclass
class EvalReport:
    keypoint_names: tuple[str, ...]
    # pck[alpha] -> overall score; per_keypoint_pck[alpha] -> (K,) array (NaN where never visible)
    pck: dict[float, float] = field(default_factory=dict)
    per_keypoint_pck: dict[float, np.ndarray] = field(default_factory=dict)
    avg_response: np.ndarray | None = None
    per_keypoint_response: np.ndarray | None = None
    degenerate_rows: int = 0
    sample_count: int = 0


def figure_diagonal(locations: np.ndarray, visible: np.ndarray) -> float:
    """Bounding-box diagonal over the visible keypoints, floored at 1 pixel
    so a single-point figure still defines a threshold."""
    pts = locations[visible > 0]
    if len(pts) == 0:
        return 1.0
    span = pts.max(axis=0) - pts.min(axis=0)
    return float(max(np.hypot(span[0], span[1]), 1.0))


def pck(
    preds: np.ndarray,
    gts: np.ndarray,
    visible: np.ndarray,
    norms: np.ndarray,
    alphas=DEFAULT_ALPHAS,
) -> tuple[dict[float, float], dict[float, np.ndarray], np.ndarray]:
    """Fraction of visible keypoints with ||pred - gt|| <= alpha * norm.

    ``preds``/``gts`` are (N, K, 2), ``visible`` (N, K), ``norms`` (N,).
    Returns overall and per-keypoint scores plus per-keypoint visible counts;
    keypoints never visible report NaN rather than 0.
    """
    dist = np.linalg.norm(preds - gts, axis=-1)
    vis = visible > 0
    counts = vis.sum(axis=0)
    overall: dict[float, float] = {}
    per_kpt: dict[float, np.ndarray] = {}
    for alpha in alphas:
        correct = (dist <= alpha * norms[:, None]) & vis
        with np.errstate(invalid="ignore"):
            per = np.where(counts > 0, correct.sum(axis=0) / np.maximum(counts, 1), np.nan)
        per_kpt[alpha] = per
        overall[alpha] = float(correct.sum() / vis.sum()) if vis.sum() else float("nan")
    return overall, per_kpt, counts


def _gt_cell(location, grid_hw, image_hw):
    stride_r = image_hw[0] / grid_hw[0]
    stride_c = image_hw[1] / grid_hw[1]
    r = int(np.clip(np.rint((location[0] - (stride_r / 2.0 - 0.5)) / stride_r), 0, grid_hw[0] - 1))
    c = int(np.clip(np.rint((location[1] - (stride_c / 2.0 - 0.5)) / stride_c), 0, grid_hw[1] - 1))
    return r, c


def evaluate_model(model, dataset: PoseDataset, alphas=DEFAULT_ALPHAS, batch_size: int = 32) -> EvalReport:
    """Forward the whole dataset (no gradients) and score coordinates plus
    response quality against the dataset's ground-truth locations."""
    k = dataset.skeleton.num_keypoints
    preds, gts, vis, norms = [], [], [], []
    resp_sum = np.zeros(k)
    resp_count = np.zeros(k)
    degenerate = 0

    from .decoder import aggregate_response_grid

    with autodiff.no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = dataset.samples[start : start + batch_size]
            images = np.stack([s.image for s in batch])
            out = model.forward(images)
            coords = out.responses.coords
            grids = aggregate_response_grid(
                out.responses.responses.data, out.memory.scale_offsets, out.memory.scale_shapes
            )
            grid_hw = out.memory.scale_shapes[0]
            for bi, sample in enumerate(batch):
                locations = sample.locations
                if locations is None:
                    continue
                preds.append(coords[bi])
                gts.append(locations)
                vis.append(sample.presence)
                norms.append(figure_diagonal(locations, sample.presence))
                for ki in range(k):
                    if sample.presence[ki] == 0:
                        continue
                    grid = grids[bi, ki]
                    top = grid.max()
                    if grid.var() < 1e-9:
                        degenerate += 1
                    r, c = _gt_cell(locations[ki], grid_hw, out.image_hw)
                    resp_sum[ki] += (grid[r, c] / top) if top > 0 else grid[r, c]
                    resp_count[ki] += 1

    report = EvalReport(keypoint_names=dataset.skeleton.names, sample_count=len(preds))
    if preds:
        overall, per_kpt, _ = pck(np.stack(preds), np.stack(gts), np.stack(vis), np.asarray(norms), alphas)
        report.pck = overall
        report.per_keypoint_pck = per_kpt
    with np.errstate(invalid="ignore"):
        report.per_keypoint_response = np.where(resp_count > 0, resp_sum / np.maximum(resp_count, 1), np.nan)
    report.avg_response = (
        float(resp_sum.sum() / resp_count.sum()) if resp_count.sum() else float("nan")
    )
    report.degenerate_rows = degenerate
    return report


def write_report_csv(report: EvalReport, path, alphas=DEFAULT_ALPHAS) -> None:
    """Per-keypoint rows plus a TOTAL row, stable column order."""
    lines = ["keypoint," + ",".join(f"pck@{a}" for a in alphas) + ",avg_response"]

    def fmt(v) -> str:
        return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))

    for ki, name in enumerate(report.keypoint_names):
        cells = [fmt(report.per_keypoint_pck[a][ki]) if report.per_keypoint_pck else "" for a in alphas]
        cells.append(fmt(report.per_keypoint_response[ki]) if report.per_keypoint_response is not None else "")
        lines.append(name + "," + ",".join(cells))
    totals = [fmt(report.pck.get(a, float("nan"))) if report.pck else "" for a in alphas]
    totals.append(fmt(report.avg_response))
    lines.append("TOTAL," + ",".join(totals))
    Path(path).write_text("\n".join(lines) + "\n")


def export_heatmap(values: np.ndarray, grid_hw: tuple[int, int], path) -> None:
    """Write one response row or activation channel as a binary PGM.

    Values scale so the row maximum maps to 255 and the minimum to 0 with
    floor rounding; constant rows export as all zeros.  Bit-deterministic.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    h, w = grid_hw
    if values.size != h * w:
        raise ValueError(f"value count {values.size} does not match grid {h}x{w}")
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        scaled = np.zeros(values.size, dtype=np.uint8)
    else:
        scaled = np.floor((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(scaled.tobytes())
    except OSError as e:
        raise OSError(f"failed writing heatmap to {path}: {e}") from e
