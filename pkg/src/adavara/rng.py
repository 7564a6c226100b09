"""Seeding discipline.

Every random stream is a Philox generator keyed by ``SeedSequence([seed, role, *extra])``.
Roles are fixed small integers so that adding a new role never perturbs
existing streams.
"""

import numpy as np

ROLES = {
    "instance": 1,
    "arms": 2,
    "noise": 3,
    "agent": 4,
    "mdp_instance": 5,
    "mdp_transitions": 6,
    "mdp_rewards": 7,
    "mdp_start": 8,
    "rollout": 9,
}


def stream(seed, role, *extra):
    if isinstance(role, str):
        role = ROLES[role]
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(role), *(int(e) for e in extra)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
