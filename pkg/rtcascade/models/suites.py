"""
Gradient-check cases for the network blocks and the full training objectives at a
toy scale (16^3 volumes, 8^3 patches, narrow widths).

Model cases differentiate with respect to every parameter tensor but only perturb a
few sampled elements of each, and judge elements whose true gradient is ~0 on their
absolute error.
"""
import numpy as np

from rtcascade.autograd import ops
from rtcascade.autograd.gradcheck import GradCheckReport, grad_check
from rtcascade.autograd.suites import OP_CASES, GradCase, run_cases
from rtcascade.autograd.tensor import Tensor, default_dtype
from rtcascade.core.constants import NUM_CLASSES
from rtcascade.models import decoder, dose, losses, segmentation
from rtcascade.models.dose import ConfigDose, LossWeights
from rtcascade.models.encoder import (
    ConfigEncoder,
    embed,
    init_encoder,
    reshape_tap,
    transformer_layer,
)
from rtcascade.models.params import ParameterSet
from rtcascade.models.segmentation import ConfigSeg

# Denominator floor of the relative error for whole-network cases. Elements with
# |analytic| + |numeric| below it are held to an absolute error of
# GRADCHECK_TOL * MODEL_FLOOR = 1e-8, which sits above the rounding noise of a
# central difference through a full forward pass in float64.
MODEL_FLOOR = 1e-4
# Perturbed elements per parameter tensor, drawn without replacement from the case
# generator. Every tensor is still covered, and the cost stays at two forward passes
# per sampled element.
SAMPLES_PER_TENSOR = 3
TOY_RESOLUTION = 16


def toy_seg_config(seed: int = 0, activation: str = "mish") -> ConfigSeg:
    return ConfigSeg(
        encoder=ConfigEncoder(
            resolution=TOY_RESOLUTION,
            patch=8,
            in_channels=1,
            embed_dim=8,
            num_layers=4,
            num_heads=2,
            mlp_ratio=2.0,
        ),
        decoder_channels=[8, 6, 4, 2],
        activation=activation,
        init_seed=seed,
    )


def toy_dose_config(seed: int = 0, cascade_input: str = "soft") -> ConfigDose:
    return ConfigDose(
        encoder=ConfigEncoder(
            resolution=TOY_RESOLUTION,
            patch=8,
            in_channels=10,
            embed_dim=6,
            num_layers=4,
            num_heads=2,
            mlp_ratio=2.0,
        ),
        decoder_channels=[8, 6, 4, 2],
        unet_channels=(2, 4, 4),
        dose_scale=1.0,
        cascade_input=cascade_input,
        init_seed=seed,
    )


def _onehot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    labels = rng.integers(0, NUM_CLASSES, size=shape)
    return (labels[None] == np.arange(NUM_CLASSES).reshape(-1, 1, 1, 1)).astype(
        np.float64
    )


def _toy_subject(rng: np.random.Generator) -> dict[str, np.ndarray]:
    shape = (TOY_RESOLUTION,) * 3
    onehot = _onehot(rng, shape)
    ptv = (rng.uniform(size=(1, *shape)) > 0.8).astype(np.float64)
    return {
        "ct": rng.uniform(0.0, 1.0, (1, *shape)),
        "onehot": onehot,
        "oars": onehot[1:],
        "ptv": ptv,
        "dose": rng.uniform(0.0, 1.0, (1, *shape)),
    }


def _params(builder: object, cfg: object) -> ParameterSet:
    params = ParameterSet()
    with default_dtype(np.float64):
        builder(cfg, params)  # type: ignore[operator]
    return params


def _tensors(params: ParameterSet) -> list[Tensor]:
    return [tensor for _, tensor in params.items()]


def _embed_case(rng: np.random.Generator) -> tuple:
    return embed, [
        Tensor(rng.standard_normal((8, 24))),
        Tensor(rng.standard_normal((24, 12))),
        Tensor(rng.standard_normal((8, 12))),
    ]


def _layer_case(rng: np.random.Generator) -> tuple:
    cfg = ConfigEncoder(
        resolution=16, patch=8, in_channels=1, embed_dim=12, num_layers=4, num_heads=3
    )
    params = ParameterSet()
    with default_dtype(np.float64):
        init_encoder(cfg, params, rng)
    layer = params.scope("layers.01")
    x = Tensor(rng.standard_normal((8, 12)))

    def f(x: Tensor, *_: Tensor) -> Tensor:
        return transformer_layer(x, layer, num_heads=3)

    return f, [x, *(t for _, t in layer.items())]


def _reshape_tap_case(rng: np.random.Generator) -> tuple:
    cfg = toy_seg_config().encoder

    def f(feature: Tensor) -> Tensor:
        return ops.sum(reshape_tap(feature, cfg))

    return f, [Tensor(rng.standard_normal((cfg.num_tokens, cfg.embed_dim)))]


def _multiscale_case(rng: np.random.Generator) -> tuple:
    params = ParameterSet()
    with default_dtype(np.float64):
        decoder.init_multiscale_block(params, 3, 4, rng)

    def f(x: Tensor, *_: Tensor) -> Tensor:
        return decoder.multiscale_block(x, params, "mish")

    return f, [Tensor(rng.standard_normal((3, 4, 4, 4))), *_tensors(params)]


def _decoder_stage_case(rng: np.random.Generator) -> tuple:
    params = ParameterSet()
    with default_dtype(np.float64):
        decoder.init_decoder_stage(params, below=4, skip=3, width=2, rng=rng)

    def f(skip: Tensor, below: Tensor, *_: Tensor) -> Tensor:
        return decoder.decoder_stage(skip, below, params, "mish")

    skip = Tensor(rng.standard_normal((3, 4, 4, 4)))
    below = Tensor(rng.standard_normal((4, 2, 2, 2)))
    return f, [skip, below, *_tensors(params)]


def _stage1_case(rng: np.random.Generator) -> tuple:
    cfg = toy_dose_config(seed=int(rng.integers(1 << 16)))
    params = _params(dose.init_dose_net, cfg)
    stage1 = params.scope("stage1")
    data = _toy_subject(rng)
    x_cop = np.concatenate([data["ct"], data["oars"], data["ptv"]])

    def f(*_: Tensor) -> Tensor:
        return ops.mean(dose.stage1_forward(Tensor(x_cop), cfg, stage1))

    return f, _tensors(stage1)


def _seg_objective_case(rng: np.random.Generator) -> tuple:
    cfg = toy_seg_config(seed=int(rng.integers(1 << 16)))
    params = _params(segmentation.init_seg_net, cfg)
    data = _toy_subject(rng)

    def f(*_: Tensor) -> Tensor:
        out = segmentation.forward(Tensor(data["ct"]), cfg, params)
        return losses.dice_ce_loss(out.probs, Tensor(data["onehot"]))

    return f, _tensors(params)


def _dose_objective_case(rng: np.random.Generator) -> tuple:
    cfg = toy_dose_config(seed=int(rng.integers(1 << 16)))
    params = _params(dose.init_dose_net, cfg)
    data = _toy_subject(rng)
    target = losses.build_gt_pyramid(Tensor(data["dose"]), dose.PYRAMID_LEVELS)
    x_cop = np.concatenate([data["ct"], data["oars"], data["ptv"]])

    def f(*_: Tensor) -> Tensor:
        pyramid = dose.forward(Tensor(x_cop), cfg, params)
        return losses.dose_loss(pyramid.levels, target, LossWeights())

    return f, _tensors(params)


def _joint_objective_case(rng: np.random.Generator) -> tuple:
    seed = int(rng.integers(1 << 16))
    seg_cfg = toy_seg_config(seed=seed)
    dose_cfg = toy_dose_config(seed=seed)
    root = ParameterSet()
    with default_dtype(np.float64):
        segmentation.init_seg_net(seg_cfg, root.scope("seg"))
        dose.init_dose_net(dose_cfg, root.scope("dose"))
    data = _toy_subject(rng)
    target = losses.build_gt_pyramid(Tensor(data["dose"]), dose.PYRAMID_LEVELS)

    def f(*_: Tensor) -> Tensor:
        out = dose.cascade_forward(
            Tensor(data["ct"]),
            Tensor(data["ptv"]),
            seg_cfg,
            root.scope("seg"),
            dose_cfg,
            root.scope("dose"),
        )
        seg_loss = losses.dice_ce_loss(out.seg.probs, Tensor(data["onehot"]))
        return ops.add(
            seg_loss, losses.dose_loss(out.pyramid.levels, target, LossWeights())
        )

    return f, _tensors(root)


BLOCK_CASES: tuple[GradCase, ...] = (
    GradCase("embed", _embed_case),
    GradCase("transformer_layer", _layer_case),
    GradCase("reshape_tap", _reshape_tap_case),
    GradCase("multiscale_block", _multiscale_case),
    GradCase("decoder_stage", _decoder_stage_case),
)
SEG_CASES: tuple[GradCase, ...] = (GradCase("seg_objective", _seg_objective_case),)
DOSE_CASES: tuple[GradCase, ...] = (
    GradCase("stage1_unet", _stage1_case),
    GradCase("dose_objective", _dose_objective_case),
)
E2E_CASES: tuple[GradCase, ...] = (
    GradCase("joint_objective", _joint_objective_case),
)

SCOPES = ("op", "seg", "dose", "e2e")


def run_model_cases(
    cases: tuple[GradCase, ...], instances: int = 1, seed: int = 0
) -> list[GradCheckReport]:
    reports = []
    for index, case in enumerate(cases):
        rng = np.random.default_rng([seed, 100 + index])
        worst = None
        for _ in range(instances):
            f, inputs = case.build(rng)
            report = grad_check(
                f,
                inputs,
                op_name=case.name,
                floor=MODEL_FLOOR,
                sample=SAMPLES_PER_TENSOR,
                rng=rng,
            )
            if worst is None or report.max_relative_error > worst.max_relative_error:
                worst = report
        reports.append(worst)
    return reports


def run_scope(scope: str, instances: int = 1, seed: int = 0) -> list[GradCheckReport]:
    """Gradient-check reports for one of `SCOPES`."""
    if scope == "op":
        return run_cases(OP_CASES, instances=max(instances, 10), seed=seed)
    if scope == "seg":
        return run_model_cases(BLOCK_CASES + SEG_CASES, instances, seed)
    if scope == "dose":
        return run_model_cases(DOSE_CASES, instances, seed)
    if scope == "e2e":
        return run_model_cases(E2E_CASES, instances, seed)
    raise ValueError(f"Unknown gradient-check scope '{scope}'")

