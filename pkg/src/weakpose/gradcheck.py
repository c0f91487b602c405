"""Finite-difference verification of backward-pass gradients.

Central differences (f(x+h) - f(x-h)) / 2h are compared against the gradients
produced by reverse accumulation.  The comparison uses a relative error with
an absolute floor so near-zero gradient pairs compare absolutely:

    err = |analytic - numeric| / max(|analytic| + |numeric|, 1e-6)

ReLU has a kink at 0 and argmax-style selections are piecewise constant, so
check points must be nudged away from ties; the bundled suite does this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff
from .autodiff import Tensor

_ERR_FLOOR = 1e-6


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    mean_rel_error: float
    entries_checked: int


@dataclass
class GradcheckReport:
    params: list[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params), default=0.0)

    @property
    def mean_rel_error(self) -> float:
        if not self.params:
            return 0.0
        return float(np.mean([p.mean_rel_error for p in self.params]))

    def passes(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance

    def format_table(self) -> str:
        lines = [f"{'parameter':<40} {'max rel err':>12} {'mean rel err':>13} {'n':>6}"]
        for p in self.params:
            lines.append(f"{p.name:<40} {p.max_rel_error:>12.3e} {p.mean_rel_error:>13.3e} {p.entries_checked:>6}")
        lines.append(f"{'OVERALL':<40} {self.max_rel_error:>12.3e} {self.mean_rel_error:>13.3e}")
        return "\n".join(lines)


def _rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a) + abs(n), _ERR_FLOOR)


def gradcheck(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    step: float = 1e-3,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradcheckReport:
    """Compare reverse-mode gradients of the scalar ``f()`` against central
    differences over every entry of every parameter (or a seeded sample of
    ``max_entries`` entries per parameter when given).

    ``f`` must be deterministic and must read the parameter tensors by
    reference so perturbations are observed.
    """
    if isinstance(params, Mapping):
        named = list(params.items())
    else:
        named = [(f"param{i}", p) for i, p in enumerate(params)]
    if rng is None:
        rng = np.random.default_rng(0)
    for _, p in named:
        if not p.data.flags.c_contiguous:
            raise ValueError("gradcheck requires contiguous parameter arrays")

    autodiff.zero_grads([p for _, p in named])
    loss = f()
    loss.backward(params=[p for _, p in named])
    analytic = {name: p.grad.copy() for name, p in named}

    report = GradcheckReport()
    with autodiff.no_grad():
        for name, p in named:
            flat = p.data.reshape(-1)
            n_entries = flat.size
            if max_entries is not None and n_entries > max_entries:
                idx = rng.choice(n_entries, size=max_entries, replace=False)
                idx.sort()
            else:
                idx = np.arange(n_entries)
            errors = []
            for i in idx:
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(f().data)
                flat[i] = orig - step
                f_minus = float(f().data)
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * step)
                errors.append(_rel_error(float(analytic[name].reshape(-1)[i]), numeric))
            errors = np.asarray(errors)
            report.params.append(
                ParamCheck(
                    name=name,
                    max_rel_error=float(errors.max()) if errors.size else 0.0,
                    mean_rel_error=float(errors.mean()) if errors.size else 0.0,
                    entries_checked=int(errors.size),
                )
            )
    return report


# ---------------------------------------------------------------------------
# Bundled check suite: one finite-difference check per differentiable op and
# one end-to-end check of the full weak loss on a toy input.
# ---------------------------------------------------------------------------


@dataclass
class SuiteEntry:
    name: str
    tolerance: float
    report: GradcheckReport

    @property
    def passed(self) -> bool:
        return self.report.passes(self.tolerance)


def _rand(rng, *shape):
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


def _weighted_sum(t: Tensor, rng) -> Tensor:
    probe = Tensor(rng.uniform(-1.0, 1.0, size=t.shape))
    return autodiff.sum_(autodiff.mul(t, probe))


def run_suite(
    only: str | None = None, step: float = 1e-3, end_to_end_step: float = 2e-5
) -> list[SuiteEntry]:
    """Run the per-op finite-difference checks (optionally only those whose
    name contains ``only``).  End-to-end uses tolerance 1e-3, ops 1e-4.

    The end-to-end check takes a smaller step: a +-1e-3 sweep of one early
    conv weight pushes many downstream relu pre-activations across their
    kink at 0, which corrupts the difference quotient without saying
    anything about the gradient.  The small step keeps every unit on its
    own linear piece (the kink-avoidance rule), while double precision
    keeps cancellation error near 1e-11.
    """
    from . import decoder, encoder, graph, losses, nn
    from .cam import CamHead
    from .data import STICK_FIGURE_SKELETON
    from .model import ModelConfig, WeakPoseNet

    entries: list[SuiteEntry] = []

    def check(name, tolerance, f, params, max_entries=None, rng_seed=0, check_step=None):
        if only is not None and only not in name:
            return
        report = gradcheck(
            f, params, step=check_step or step, max_entries=max_entries, rng=np.random.default_rng(rng_seed)
        )
        entries.append(SuiteEntry(name, tolerance, report))

    rng = np.random.default_rng(7)

    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    check("matmul", 1e-4, lambda: _weighted_sum(autodiff.matmul(a, b), np.random.default_rng(1)), {"a": a, "b": b})

    x = _rand(rng, 3, 5)
    check("softmax", 1e-4, lambda: _weighted_sum(autodiff.softmax(x, axis=-1), np.random.default_rng(2)), {"x": x})

    img = _rand(rng, 5, 5, 2)
    kernel = _rand(rng, 3, 3, 2, 3)
    cbias = _rand(rng, 3)
    check(
        "conv2d",
        1e-4,
        lambda: _weighted_sum(autodiff.conv2d(img, kernel, cbias, stride=1, padding=1), np.random.default_rng(3)),
        {"input": img, "kernel": kernel, "bias": cbias},
    )

    # keep relu inputs away from the kink at 0
    xr = Tensor(rng.uniform(0.2, 1.0, size=(4, 4)) * rng.choice([-1.0, 1.0], size=(4, 4)), requires_grad=True)
    check("relu", 1e-4, lambda: _weighted_sum(autodiff.relu(xr), np.random.default_rng(4)), {"x": xr})

    xs = _rand(rng, 6)
    check("sigmoid", 1e-4, lambda: _weighted_sum(autodiff.sigmoid(xs), np.random.default_rng(5)), {"x": xs})

    xa, xb = _rand(rng, 3, 4), _rand(rng, 4)
    check(
        "add_mul_scale",
        1e-4,
        lambda: _weighted_sum(autodiff.scale(autodiff.mul(autodiff.add(xa, xb), xa), 0.7), np.random.default_rng(6)),
        {"a": xa, "b": xb},
    )

    xc, yc = _rand(rng, 2, 3), _rand(rng, 4, 3)
    check(
        "concat",
        1e-4,
        lambda: _weighted_sum(autodiff.concat([xc, yc], axis=0), np.random.default_rng(7)),
        {"x": xc, "y": yc},
    )

    xln = _rand(rng, 3, 6)
    gain, shift = _rand(rng, 6), _rand(rng, 6)
    check(
        "layer_norm",
        1e-4,
        lambda: _weighted_sum(autodiff.layer_norm(xln, gain, shift), np.random.default_rng(8)),
        {"x": xln, "gain": gain, "shift": shift},
    )

    xg = _rand(rng, 4, 4, 3)
    check(
        "global_avg_pool",
        1e-4,
        lambda: _weighted_sum(autodiff.global_avg_pool(xg), np.random.default_rng(9)),
        {"x": xg},
    )

    xre = _rand(rng, 3, 4)
    check(
        "reshape_transpose",
        1e-4,
        lambda: _weighted_sum(autodiff.transpose(autodiff.reshape(xre, (2, 6)), (1, 0)), np.random.default_rng(10)),
        {"x": xre},
    )

    layer_rng = np.random.default_rng(11)
    spe = encoder.SpatialEncoding(6, layer_rng)
    feat = _rand(rng, 3, 3, 6)
    mask = (np.random.default_rng(12).uniform(size=(3, 3)) > 0.5).astype(np.float64)
    check(
        "spatial_encoding",
        1e-4,
        lambda: _weighted_sum(spe(feat, mask), np.random.default_rng(13)),
        {"features": feat, **{f"spe.{n}": p for n, p in spe.named_parameters()}},
    )

    attn = encoder.MultiHeadAttention(8, 2, np.random.default_rng(14))
    xq = _rand(rng, 5, 8)
    check(
        "multi_head_attention",
        1e-4,
        lambda: _weighted_sum(attn(xq, xq)[0], np.random.default_rng(15)),
        {"x": xq, **{f"attn.{n}": p for n, p in attn.named_parameters()}},
    )

    block = encoder.AttentionBlock(8, 2, np.random.default_rng(16))
    xblk = _rand(rng, 4, 8)
    check(
        "encoder_layer",
        1e-4,
        lambda: _weighted_sum(block(xblk)[0], np.random.default_rng(17)),
        {"x": xblk, **{f"block.{n}": p for n, p in block.named_parameters()}},
    )

    cross = encoder.AttentionBlock(8, 2, np.random.default_rng(18))
    queries = _rand(rng, 3, 8)
    memory = _rand(rng, 6, 8)
    check(
        "cross_attention_layer",
        1e-4,
        lambda: _weighted_sum(cross(queries, context=memory)[0], np.random.default_rng(19)),
        {"queries": queries, "memory": memory, **{f"cross.{n}": p for n, p in cross.named_parameters()}},
    )

    gcn = graph.SemGCNLayer(4, 4, 3, np.random.default_rng(20))
    adjacency = graph.build_graph(3, [(0, 1), (1, 2)]).adjacency
    nodes = _rand(rng, 3, 4)
    check(
        "semgcn_layer",
        1e-4,
        lambda: _weighted_sum(gcn(nodes, adjacency), np.random.default_rng(21)),
        {"nodes": nodes, **{f"gcn.{n}": p for n, p in gcn.named_parameters()}},
    )

    feats = _rand(rng, 4, 6)
    check("part_diversity", 1e-4, lambda: decoder.part_diversity_loss(feats), {"features": feats})

    logits = _rand(rng, 2, 4)
    labels = np.random.default_rng(22).integers(0, 2, size=(2, 4)).astype(np.float64)
    check("bce_loss", 1e-4, lambda: losses.bce_loss(autodiff.sigmoid(logits), labels), {"logits": logits})

    raw = _rand(rng, 2, 3, 16)
    target = np.random.default_rng(23).uniform(size=(2, 3, 4, 4))
    check(
        "mse_heatmap_loss",
        1e-4,
        lambda: losses.mse_heatmap_loss(
            autodiff.reshape(autodiff.softmax(raw, axis=-1), (2, 3, 4, 4)), target
        ),
        {"raw": raw},
    )

    head = CamHead(6, 4, 5, np.random.default_rng(24))
    hf = _rand(rng, 4, 4, 6)
    check(
        "classify_head",
        1e-4,
        lambda: _weighted_sum(head.classify(head.keypoint_channels(hf)), np.random.default_rng(25)),
        {"features": hf, **{f"head.{n}": p for n, p in head.named_parameters()}},
    )

    if only is None or only in "end_to_end_weak_loss":
        toy_cfg = ModelConfig(channels=8, heads=2, encoder_depth=1, decoder_depth=1, graph_layers=1)
        model = WeakPoseNet(toy_cfg, STICK_FIGURE_SKELETON, seed=5)
        image = np.random.default_rng(26).uniform(0.0, 1.0, size=(16, 16, 1))
        presence = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
        weights = losses.LossWeights()
        with autodiff.no_grad():
            frozen_masks = model.forward(image[None]).coarse.masks

        def end_to_end():
            out = model.forward(image[None], spe_masks=frozen_masks)
            return losses.weak_loss(
                losses.bce_loss(out.probs_cnn, presence[None]),
                losses.bce_loss(out.probs_encoder, presence[None]),
                losses.bce_loss(out.probs_parts, presence[None]),
                decoder.part_diversity_loss(out.responses.part_features),
                weights,
            )

        check(
            "end_to_end_weak_loss",
            1e-3,
            end_to_end,
            dict(model.named_parameters()),
            check_step=end_to_end_step,
        )
    return entries


def format_suite(entries: list[SuiteEntry]) -> str:
    lines = []
    for e in entries:
        status = "PASS" if e.passed else "FAIL"
        lines.append(
            f"{e.name:<28} max rel err {e.report.max_rel_error:.3e}  tol {e.tolerance:.0e}  {status}"
        )
    return "\n".join(lines)
