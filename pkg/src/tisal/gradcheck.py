"""Finite-difference verification of analytic gradients.

For each registered module a small float64 instance is built, all parameters
are re-randomized away from any special initialization point, the output is
reduced to a scalar through a fixed random weighting, and reverse-mode
gradients are compared against central finite differences on a seeded random
subsample of coordinates. The finite-difference side never reuses autograd:
it re-evaluates the forward pass at perturbed inputs.
"""

from __future__ import annotations

import numpy as np
import torch

from .model import TGSalNet, desk_config
from .model.fusion import FusionAttention, GlobalTextFusion, LocalTextFusion, Refinement
from .training import LossConfig, loss

DEFAULT_EPSILON = 1e-5
SAMPLES_PER_TENSOR = 3
_SKIP_FLOOR = 1e-10


def max_rel_error(f, tensors: list[torch.Tensor], epsilon: float = DEFAULT_EPSILON,
                  samples_per_tensor: int = SAMPLES_PER_TENSOR,
                  seed: int = 0) -> float:
    """Worst relative disagreement between autograd and central differences
    over a random subsample of the coordinates of `tensors`."""
    out = f()
    grads = torch.autograd.grad(out, tensors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor, grad in zip(tensors, grads):
        flat = tensor.data.reshape(-1)
        gflat = grad.reshape(-1)
        n = flat.numel()
        for i in rng.choice(n, size=min(samples_per_tensor, n), replace=False):
            i = int(i)
            original = flat[i].item()
            flat[i] = original + epsilon
            f_plus = float(f())
            flat[i] = original - epsilon
            f_minus = float(f())
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            analytic = float(gflat[i])
            scale = max(abs(analytic), abs(numeric))
            if scale < _SKIP_FLOOR:
                continue
            worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def _randomize(module: torch.nn.Module, generator: torch.Generator) -> None:
    for param in module.parameters():
        param.data = torch.randn(param.shape, generator=generator,
                                 dtype=torch.float64) * 0.2


def _rand(generator, *shape, grad=True):
    t = torch.randn(*shape, generator=generator, dtype=torch.float64)
    return t.requires_grad_(grad)


def _build_loss(seed: int):
    g = torch.Generator().manual_seed(seed)
    pred = torch.rand(2, 1, 6, 7, generator=g, dtype=torch.float64).requires_grad_(True)
    gt = torch.rand(2, 1, 6, 7, generator=g, dtype=torch.float64).requires_grad_(True)
    cfg = LossConfig()
    return (lambda: loss(pred, gt, cfg)), [pred, gt]


def _build(seed: int, module, inputs):
    """Wrap a module call into a fixed-weight scalar objective."""
    head_gen = torch.Generator().manual_seed(seed + 1)
    first = module(*inputs)
    weights = torch.randn(first.shape, generator=head_gen, dtype=torch.float64)

    def f():
        return (module(*inputs) * weights).sum()

    leaves = [t for t in inputs if isinstance(t, torch.Tensor) and t.requires_grad]
    return f, leaves + list(module.parameters())


def build_gtff(seed: int):
    g = torch.Generator().manual_seed(seed)
    module = GlobalTextFusion(6, 5, 8).double()
    _randomize(module, g)
    return _build(seed, module, [_rand(g, 2, 6, 4, 4), _rand(g, 2, 5)])


def build_ltff(seed: int):
    g = torch.Generator().manual_seed(seed)
    module = LocalTextFusion(6, 4, 8, 5, heads=2).double()
    _randomize(module, g)
    return _build(seed, module, [_rand(g, 2, 6, 4, 4), _rand(g, 2, 4, 4, 4),
                                 _rand(g, 2, 3, 5)])


def build_fusion_attention(seed: int):
    g = torch.Generator().manual_seed(seed)
    module = FusionAttention(8, 5, heads=2).double()
    _randomize(module, g)
    return _build(seed, module, [_rand(g, 2, 9, 8), _rand(g, 2, 4, 5)])


def build_hfr(seed: int):
    g = torch.Generator().manual_seed(seed)
    module = Refinement(6, 4, 8).double()
    _randomize(module, g)
    return _build(seed, module, [_rand(g, 2, 6, 4, 4), _rand(g, 2, 4, 4, 4)])


def build_forward(seed: int):
    torch.manual_seed(seed)
    net = TGSalNet(desk_config()).double()
    g = torch.Generator().manual_seed(seed)
    images = (torch.rand(1, 3, 32, 32, generator=g, dtype=torch.float64) - 0.5)
    images = images.requires_grad_(True)
    target = torch.rand(1, 1, 32, 32, generator=g, dtype=torch.float64)
    texts = ["the small dark square in the top left corner of the picture"]
    cfg = LossConfig()

    def f():
        return loss(net(images, texts), target, cfg)

    return f, [images, *(p for p in net.parameters() if p.requires_grad)]


MODULES = {
    "loss": _build_loss,
    "gtff": build_gtff,
    "ltff": build_ltff,
    "fusion_attention": build_fusion_attention,
    "hfr": build_hfr,
    "forward": build_forward,
}


def gradient_check(module_id: str, trials: int = 2,
                   epsilon: float = DEFAULT_EPSILON) -> float:
    """Max relative error between analytic and finite-difference gradients
    over `trials` independently seeded instances of one registered module."""
    if module_id not in MODULES:
        raise KeyError(f"unknown module {module_id!r}; choose from {sorted(MODULES)}")
    worst = 0.0
    for trial in range(trials):
        f, tensors = MODULES[module_id](seed=1000 + trial)
        worst = max(worst, max_rel_error(f, tensors, epsilon=epsilon,
                                         seed=2000 + trial))
    return worst
