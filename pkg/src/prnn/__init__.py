"""Privileged-information sequence classification on a self-contained
fp64 autodiff core: joint depth+skeleton pre-training, multi-task
learning, and EM refinement through a latent-class bridging matrix."""

__version__ = "0.1.0"
