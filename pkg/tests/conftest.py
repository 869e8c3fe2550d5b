import numpy as np
import pytest

from digimkt.model import instance_from_dict


def agent_doc(labor=1.0, costs=(1.0, 1.0), utility=None, orders=None):
    utility = utility or {"family": "linear", "coefficients": [1.0] * len(costs)}
    return {"labor": labor, "costs": list(costs), "utility": utility, "orders": orders or {}}


def build(agents, categories):
    """Instance from agent docs and per-category lists of (song id, owner).

    Missing orders default to songs first (listed order), then agents by index.
    """
    n = len(agents)
    for a in agents:
        for j, songs in enumerate(categories, start=1):
            a["orders"].setdefault(
                str(j), [f"song:{s}" for s, _ in songs] + [f"agent:{k}" for k in range(n)]
            )
    doc = {
        "agents": agents,
        "categories": [{"songs": [{"id": s, "owner": o} for s, o in songs]} for songs in categories],
    }
    return instance_from_dict(doc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
