import numpy as np
import pytest

from flexneeds.fixtures import feeder_path, profiles_path
from flexneeds.network import Branch, Load, Network, Node, load_network_file, load_profiles


@pytest.fixture(scope="session")
def feeder():
    return load_network_file(feeder_path())


@pytest.fixture(scope="session")
def feeder_profiles():
    return load_profiles(profiles_path(), dt_hours=1.0, fe_load=0.3, fe_pv=0.4)


def make_net(edges, n, *, loads=(), gens=(), vband=(0.95, 1.05), slack_v=1.01,
             base_s=100.0, base_v=400.0, smax=50.0):
    """Small radial test network; edges are (from, to, r_ohm[, x_ohm[, smax]])."""
    branches = []
    for e in edges:
        a, b, r = e[0], e[1], e[2]
        x = e[3] if len(e) > 3 else 0.5 * r
        s = e[4] if len(e) > 4 else smax
        branches.append(Branch(a, b, r, x, s))
    return Network(
        nodes=tuple(Node(i, vband[0], vband[1]) for i in range(n)),
        branches=tuple(branches),
        loads=tuple(loads),
        generators=tuple(gens),
        slack_node=0,
        slack_v_pu=slack_v,
        base_s_kva=base_s,
        base_v_volt=base_v,
    )


@pytest.fixture
def two_node():
    # base impedance is 1.6 ohm; r = x = 0.01 pu
    return make_net([(0, 1, 0.016, 0.016, 50.0)], 2, loads=(Load(1, "l1"),))
