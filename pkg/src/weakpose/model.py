"""Full model: backbone pyramid, activation-map head, spatial-guided
multi-scale encoder, graph-refined prototypes and the cross-attention pose
decoder, with the three presence-classification heads read at the CNN, the
encoder memory and the decoded part features.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff, nn
from .autodiff import Tensor
from .backbone import FeaturePyramidBackbone, PyramidFeatures
from .cam import CamHead, ClassActivationMaps, CoarseLocations, KeypointVectors, coarse_locations
from .data import SkeletonSpec, STICK_FIGURE_SKELETON
from .decoder import PoseDecoder, ResponseSet
from .encoder import ContextEncoder, ContextMemory
from .graph import PrototypeGenerator, SkeletonGraph, build_graph


@dataclass
class ModelConfig:
    """Architecture knobs.

    The defaults are the desk-scale configuration, sized so a full training
    run fits a small CPU budget; ``preset="paper"`` selects the
    full-fidelity width/depth (256 channels, 8 heads, 4 encoder and 6
    decoder layers).  The ablation flags switch off, one by one: the
    peak-driven position encoding (falling back to a fixed sinusoidal grid),
    the extra pyramid scales, and the graph-generated prototypes (falling
    back to a learned query embedding).
    """

    channels: int = 48
    heads: int = 2
    encoder_depth: int = 2
    decoder_depth: int = 2
    ffn_multiplier: int = 4
    vector_dim: int | None = None
    graph_layers: int = 2
    image_channels: int = 1
    convs_per_block: int = 2
    use_spatial_encoding: bool = True
    use_multiscale: bool = True
    use_graph_prototypes: bool = True
    share_encoder_scales: bool = True
    mask_mode: str = "binary"

    def validate(self) -> list[str]:
        problems = []
        if self.channels < 4 or self.channels % 4 != 0:
            problems.append(f"channels must be a positive multiple of 4, got {self.channels}")
        if self.heads < 1 or (self.channels % max(self.heads, 1)) != 0:
            problems.append(f"heads must divide channels, got heads={self.heads} channels={self.channels}")
        if self.encoder_depth < 1:
            problems.append(f"encoder_depth must be >= 1, got {self.encoder_depth}")
        if self.decoder_depth < 1:
            problems.append(f"decoder_depth must be >= 1, got {self.decoder_depth}")
        if self.ffn_multiplier < 1:
            problems.append(f"ffn_multiplier must be >= 1, got {self.ffn_multiplier}")
        if self.graph_layers < 0:
            problems.append(f"graph_layers must be >= 0, got {self.graph_layers}")
        if self.convs_per_block < 1:
            problems.append(f"convs_per_block must be >= 1, got {self.convs_per_block}")
        if self.image_channels not in (1, 3):
            problems.append(f"image_channels must be 1 or 3, got {self.image_channels}")
        if self.mask_mode not in ("binary", "gaussian"):
            problems.append(f"mask_mode must be 'binary' or 'gaussian', got {self.mask_mode!r}")
        return problems

    @classmethod
    def paper_preset(cls, **overrides) -> "ModelConfig":
        cfg = cls(channels=256, heads=8, encoder_depth=4, decoder_depth=6)
        return replace(cfg, **overrides)


@dataclass
class ModelOutputs:
    image_hw: tuple[int, int]
    pyramid: PyramidFeatures
    keypoint_channels: Tensor
    probs_cnn: Tensor
    cams: ClassActivationMaps
    coarse: CoarseLocations
    keypoint_vectors: KeypointVectors
    memory: ContextMemory
    prototypes: Tensor
    responses: ResponseSet
    probs_encoder: Tensor
    probs_parts: Tensor


class WeakPoseNet(nn.Module):
    """End-to-end network mapping an image batch to presence probabilities,
    part-aware response maps and decoded keypoint coordinates."""

    def __init__(self, config: ModelConfig, skeleton: SkeletonSpec = STICK_FIGURE_SKELETON, seed: int = 0):
        problems = config.validate()
        if problems:
            raise ValueError("invalid model config: " + "; ".join(problems))
        self.config = config
        self.skeleton = skeleton
        self.graph: SkeletonGraph = build_graph(skeleton.num_keypoints, skeleton.edges)
        k = skeleton.num_keypoints
        c = config.channels
        vector_dim = config.vector_dim or c
        rng = np.random.default_rng(seed)

        self.backbone = FeaturePyramidBackbone(
            rng, in_channels=config.image_channels, width=c, convs_per_block=config.convs_per_block
        )
        self.cam_head = CamHead(c, k, vector_dim, rng)
        self.encoder = ContextEncoder(
            c,
            config.heads,
            config.encoder_depth,
            num_scales=3 if config.use_multiscale else 1,
            rng=rng,
            share_scales=config.share_encoder_scales,
            ffn_multiplier=config.ffn_multiplier,
        )
        self.prototypes = PrototypeGenerator(vector_dim, c, k, config.graph_layers, rng)
        self.query_embed = nn.init_uniform(rng, (k, c), c)
        self.decoder = PoseDecoder(c, config.heads, config.decoder_depth, rng, config.ffn_multiplier)
        self.encoder_classifier = nn.Linear(c, k, rng)
        # each keypoint's presence is scored from its own part feature; the
        # scoring direction is shared so the evidence must live in the
        # feature itself (a per-keypoint direction could read global context
        # instead, which never forces the attention to the part)
        self.part_scorer_weight = nn.init_uniform(rng, (c,), c)
        self.part_scorer_bias = nn.init_uniform(rng, (k,), c)

    def forward(self, images, spe_masks: list[np.ndarray] | None = None) -> ModelOutputs:
        """Run the network on (B, H, W, ch) images (or one (H, W, ch) image).

        ``spe_masks`` overrides the peak-derived location masks; finite
        difference checks use this to hold the piecewise-constant mask fixed.
        """
        images = autodiff.as_tensor(images)
        squeeze = images.ndim == 3
        if squeeze:
            images = autodiff.reshape(images, (1,) + images.shape)
        h, w = images.shape[1], images.shape[2]

        pyramid = self.backbone.extract(images)
        x_kpt = self.cam_head.keypoint_channels(pyramid.f1)
        probs_cnn = self.cam_head.classify(x_kpt)
        cams = self.cam_head.activation_maps(x_kpt)
        vectors = self.cam_head.keypoint_vectors(x_kpt, self.cam_head.to_vector_channels(pyramid.f1))

        levels = list(pyramid.levels) if self.config.use_multiscale else [pyramid.f1]
        divisors = (1, 2, 4) if self.config.use_multiscale else (1,)
        coarse = coarse_locations(cams.maps.data, divisors, mask_mode=self.config.mask_mode)
        masks = spe_masks if spe_masks is not None else coarse.masks
        memory = self.encoder.encode(levels, masks if self.config.use_spatial_encoding else None)

        pooled = autodiff.mean(memory.memory, axis=-2)
        probs_encoder = autodiff.sigmoid(self.encoder_classifier(pooled))

        if self.config.use_graph_prototypes:
            prototypes = self.prototypes(vectors.vectors, self.graph)
        else:
            prototypes = self.query_embed

        responses = self.decoder.decode(prototypes, memory, (h, w))
        part_scores = autodiff.sum_(
            autodiff.mul(responses.part_features, self.part_scorer_weight), axis=-1
        ) + self.part_scorer_bias
        probs_parts = autodiff.sigmoid(part_scores)

        out = ModelOutputs(
            image_hw=(h, w),
            pyramid=pyramid,
            keypoint_channels=x_kpt,
            probs_cnn=probs_cnn,
            cams=cams,
            coarse=coarse,
            keypoint_vectors=vectors,
            memory=memory,
            prototypes=autodiff.as_tensor(prototypes),
            responses=responses,
            probs_encoder=probs_encoder,
            probs_parts=probs_parts,
        )
        return out

    def transformer_parameter_names(self) -> set[str]:
        """Names of the attention-side parameters (encoder, decoder,
        prototypes, graph layers) that train at the reduced learning rate."""
        prefixes = ("encoder.", "decoder.", "prototypes.", "query_embed")
        return {name for name, _ in self.named_parameters() if name.startswith(prefixes)}
