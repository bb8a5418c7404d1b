# kdda/trainers/seeds.py
import numpy as np

TEACHER = 1
STUDENT = 2
DOMAIN_HEAD = 3
REGRESSOR = 4
BATCHES = 5
SPLIT = 6
DATA = 7


def derive_seed(run_seed: int, role: int, index: int = 0) -> int:
    """
    Independent seed for one component of a run. Indices count teachers or
    domains, so a one-target multi-teacher run draws the same seeds as a
    single-target run.
    """
    return int(np.random.SeedSequence([run_seed, role, index]).generate_state(1)[0])
