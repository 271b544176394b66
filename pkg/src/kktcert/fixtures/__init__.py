"""Problem files bundled with the package."""

from __future__ import annotations

from importlib import resources

from ..model import Problem, load_problem

NAMES = ("hyp1", "hyp1_scaled", "hyp2", "hyp3", "diskcomp", "degen", "affine", "interior")

# fixtures whose feasible set is convex and has an interior
CONVEX = ("hyp1", "hyp1_scaled", "hyp2", "hyp3", "affine", "interior")


def path(name: str):
    return resources.files(__name__) / f"{name}.prob"


def load(name: str) -> Problem:
    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(NAMES)}")
    return load_problem(path(name).read_text(), name=name)
