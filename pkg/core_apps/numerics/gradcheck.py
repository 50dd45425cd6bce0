"""
Finite-difference gradient check over sampled parameter coordinates.
"""
import logging
from dataclasses import dataclass, field

import torch

from core_apps.common.replay import freeze_discrete_choices

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    samples: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor=1e-2):
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps tiny gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(
    loss_fn, named_parameters, n_samples=50, h=1e-3, tolerance=1e-3, seed=0
):
    """
    Compare autograd gradients with central differences.

    Discrete choices (sampling, grouping, matching, pooling arg-max) made by
    the first forward pass are replayed for every perturbed evaluation.

    Args:
        loss_fn (callable): returns a scalar loss tensor; called repeatedly.
        named_parameters (list): ``(name, Parameter)`` pairs to sample from.
        n_samples (int): number of coordinates.
        h (float): central-difference step.
        tolerance (float): pass threshold on the maximum relative error.
        seed (int): coordinate sampling seed.

    Returns:
        GradCheckReport: per-sample ``(name, index, analytic, numeric, rel)``.
    """
    named_parameters = [(n, p) for n, p in named_parameters if p.requires_grad]
    generator = torch.Generator().manual_seed(seed)
    report = GradCheckReport(max_rel_error=0.0, tolerance=tolerance)
    with freeze_discrete_choices() as recorder:
        for _, param in named_parameters:
            param.grad = None
        loss_fn().backward()

        sizes = torch.tensor([p.numel() for _, p in named_parameters], dtype=torch.float64)
        picks = torch.multinomial(
            sizes / sizes.sum(), n_samples, replacement=True, generator=generator
        )
        for pick in picks.tolist():
            name, param = named_parameters[pick]
            index = int(torch.randint(param.numel(), (1,), generator=generator))
            analytic = 0.0 if param.grad is None else float(param.grad.reshape(-1)[index])
            flat = param.data.view(-1)
            original = float(flat[index])
            with torch.no_grad():
                flat[index] = original + h
                recorder.rewind()
                plus = float(loss_fn())
                flat[index] = original - h
                recorder.rewind()
                minus = float(loss_fn())
                flat[index] = original
            numeric = (plus - minus) / (2 * h)
            rel = relative_error(analytic, numeric)
            report.samples.append((name, index, analytic, numeric, rel))
            report.max_rel_error = max(report.max_rel_error, rel)
            logger.debug(
                "gradcheck %s[%d]: analytic=%.6e numeric=%.6e rel=%.2e",
                name, index, analytic, numeric, rel,
            )
    return report
