"""
AdamW with decoupled weight decay, a cosine learning-rate schedule per
parameter group and global gradient-norm clipping.
"""
import math

import torch
from torch.optim.lr_scheduler import LambdaLR


def cosine_lr(step, base_lr, min_lr, total_steps):
    """
    Cosine annealing from ``base_lr`` at step 0 to ``min_lr`` at ``total_steps``.

    Halfway through the schedule the rate is the mean of the two endpoints.
    """
    if total_steps <= 0:
        return base_lr
    progress = min(max(step, 0), total_steps) / total_steps
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


def _factor(base_lr, min_lr, total_steps):
    def factor(step):
        return cosine_lr(step, base_lr, min_lr, total_steps) / base_lr

    return factor


class Optimizer:
    """
    Optimizer state for one training stage.

    **Attributes:**
        - optimizer (torch.optim.AdamW): per-parameter first/second moments.
        - scheduler (LambdaLR): cosine factor per group.
        - clip_norm (float): global gradient-norm bound applied before each update.
        - step_count (int): updates applied so far.

    Args:
        param_groups (list[dict]): each ``{"name", "params", "base_lr", "min_lr"}``;
            ``base_lr == min_lr`` gives a constant rate.
        total_steps (int): schedule length.
        weight_decay (float): decoupled weight decay.
        clip_norm (float): gradient clipping threshold.
    """

    def __init__(self, param_groups, total_steps, weight_decay, clip_norm, betas=(0.9, 0.999)):
        groups = [
            {"params": list(g["params"]), "lr": g["base_lr"], "name": g["name"]}
            for g in param_groups
        ]
        self.parameters = [p for g in groups for p in g["params"]]
        self.optimizer = torch.optim.AdamW(
            groups, lr=groups[0]["lr"], betas=betas, weight_decay=weight_decay
        )
        self.scheduler = LambdaLR(
            self.optimizer,
            lr_lambda=[
                _factor(g["base_lr"], g["min_lr"], total_steps) for g in param_groups
            ],
        )
        self.clip_norm = clip_norm
        self.total_steps = total_steps
        self.step_count = 0

    @property
    def lrs(self):
        return {g["name"]: g["lr"] for g in self.optimizer.param_groups}

    def zero_grad(self):
        self.optimizer.zero_grad(set_to_none=False)

    def step(self):
        """
        Clip, update and advance the schedule.

        Returns:
            float: global gradient norm before clipping.
        """
        norm = torch.nn.utils.clip_grad_norm_(self.parameters, self.clip_norm)
        self.optimizer.step()
        self.scheduler.step()
        self.step_count += 1
        return float(norm)

    def state_dict(self):
        return {
            "step_count": self.step_count,
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
        }

    def load_state_dict(self, state):
        self.optimizer.load_state_dict(state["optimizer"])
        self.scheduler.load_state_dict(state["scheduler"])
        self.step_count = state["step_count"]
