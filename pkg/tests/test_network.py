import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexneeds.network import (
    Load,
    NetworkError,
    ProfileSet,
    admittance_weights,
    downstream_masks,
    load_network,
    load_profiles,
    nominal_node_profiles,
    parse_profiles,
    self_sufficiency,
    serialize_network,
    shared_path_impedance,
)

from conftest import make_net


def doc_2node():
    return {
        "nodes": [{"id": 0, "vmin": 0.95, "vmax": 1.05}, {"id": 1, "vmin": 0.95, "vmax": 1.05}],
        "branches": [{"from": 0, "to": 1, "r_ohm": 0.1, "x_ohm": 0.05, "smax_kva": 30.0}],
        "loads": [{"node": 1, "profile": "l1"}],
        "generators": [],
        "slack": {"node": 0, "v_pu": 1.01},
        "base": {"s_kva": 100.0, "v_volt": 400.0},
    }


def test_load_smallest_radial_feeder():
    net = load_network(json.dumps(doc_2node()))
    assert net.n_nodes == 2
    assert len(net.branches) == 1


def test_shipped_feeder_counts(feeder):
    assert feeder.n_nodes == 30
    assert len(feeder.branches) == 29


def test_cycle_is_rejected():
    doc = doc_2node()
    doc["nodes"].append({"id": 2, "vmin": 0.95, "vmax": 1.05})
    doc["branches"] += [
        {"from": 1, "to": 2, "r_ohm": 0.1, "x_ohm": 0.05, "smax_kva": 30.0},
        {"from": 2, "to": 0, "r_ohm": 0.1, "x_ohm": 0.05, "smax_kva": 30.0},
    ]
    with pytest.raises(NetworkError, match="non-radial"):
        load_network(json.dumps(doc))


def test_dangling_reference_names_element():
    doc = doc_2node()
    doc["loads"][0]["node"] = 99
    with pytest.raises(NetworkError, match="99"):
        load_network(json.dumps(doc))


def test_invalid_json_is_a_parse_error():
    with pytest.raises(NetworkError, match="JSON"):
        load_network("{not json")


def test_disconnected_graph_rejected():
    doc = doc_2node()
    doc["nodes"] += [{"id": 2, "vmin": 0.95, "vmax": 1.05}, {"id": 3, "vmin": 0.95, "vmax": 1.05}]
    # branch count stays n-1 via a parallel pair, so only the reachability
    # check can reject this document
    doc["branches"] += [
        {"from": 2, "to": 3, "r_ohm": 0.1, "x_ohm": 0.0, "smax_kva": 10.0},
        {"from": 3, "to": 2, "r_ohm": 0.2, "x_ohm": 0.0, "smax_kva": 10.0},
    ]
    with pytest.raises(NetworkError, match="disconnected"):
        load_network(json.dumps(doc))


def test_serialize_round_trip(feeder):
    again = load_network(serialize_network(feeder))
    assert again == feeder


def test_per_unit_round_trip(feeder):
    r_ohm = np.array([b.r_ohm for b in feeder.branches])
    back = feeder.branch_r_pu() * feeder.z_base_ohm
    assert np.all(np.abs(back - r_ohm) <= 1e-12 * np.abs(r_ohm))


def test_admittance_weight_values():
    # base 1000 V / 1000 kVA makes z_base exactly 1 ohm, so ohms act as pu
    net = make_net([(0, 1, 3.0, 4.0)], 2, base_s=1000.0, base_v=1000.0)
    w = admittance_weights(net)
    assert w[0, 1] == pytest.approx(0.2, abs=1e-15)

    net = make_net([(0, 1, 0.1, 0.0)], 2, base_s=1000.0, base_v=1000.0)
    assert admittance_weights(net)[0, 1] == pytest.approx(10.0, abs=1e-12)


def test_admittance_nonadjacent_zero():
    net = make_net([(0, 1, 0.1), (1, 2, 0.1)], 3)
    w = admittance_weights(net)
    assert w[0, 2] == 0.0


def test_zero_impedance_branch_rejected():
    net = make_net([(0, 1, 0.0, 0.0)], 2)
    with pytest.raises(NetworkError, match="zero impedance"):
        admittance_weights(net)


@st.composite
def random_radial(draw):
    n = draw(st.integers(min_value=2, max_value=12))
    edges = []
    for child in range(1, n):
        parent = draw(st.integers(min_value=0, max_value=child - 1))
        r = draw(st.floats(min_value=0.01, max_value=2.0))
        x = draw(st.floats(min_value=0.0, max_value=1.0))
        edges.append((parent, child, r, x))
    return make_net(edges, n)


@given(random_radial())
@settings(max_examples=50, deadline=None)
def test_weights_symmetric_zero_diagonal(net):
    w = admittance_weights(net)
    assert np.array_equal(w, w.T)
    assert np.all(np.diag(w) == 0.0)
    assert np.all(w >= 0.0)


def test_self_sufficiency_ratio():
    # daily load 2719 kWh vs PV 1709 kWh
    prof = ProfileSet(
        loads={"l": np.full(24, 2719.0 / 24)},
        pv_norm=np.full(24, (1709.0 / 24) / 1000.0),
        dt_hours=1.0, fe_load=0.3, fe_pv=0.4,
    )
    ratio = self_sufficiency(prof, np.array([1000.0]))
    assert ratio == pytest.approx(0.6285, abs=1e-4)


def test_self_sufficiency_edges():
    prof = ProfileSet(loads={"l": np.full(4, 10.0)}, pv_norm=np.zeros(4),
                      dt_hours=1.0, fe_load=0.0, fe_pv=0.0)
    assert self_sufficiency(prof, np.array([5.0])) == 0.0
    prof = ProfileSet(loads={"l": np.full(4, 10.0)}, pv_norm=np.full(4, 1.0),
                      dt_hours=1.0, fe_load=0.0, fe_pv=0.0)
    assert self_sufficiency(prof, np.array([10.0])) == pytest.approx(1.0, abs=1e-12)


def test_profiles_csv_parsing():
    text = "a,pv\n1.0,0.0\n2.0,0.5\n"
    prof = parse_profiles(text, dt_hours=0.5)
    assert prof.n_steps == 2
    assert prof.dt_hours == 0.5
    assert np.array_equal(prof.loads["a"], [1.0, 2.0])
    with pytest.raises(ValueError, match="pv"):
        parse_profiles("a,b\n1,2\n")
    with pytest.raises(ValueError, match="negative"):
        parse_profiles("a,pv\n-1.0,0.0\n")
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        parse_profiles("a,pv\n1.0,1.5\n")


def test_colocated_loads_aggregate():
    net = make_net([(0, 1, 0.1)], 2, loads=(Load(1, "a", pf=1.0), Load(1, "b", pf=1.0)))
    prof = ProfileSet(loads={"a": np.array([1.0, 2.0]), "b": np.array([3.0, 4.0])},
                      pv_norm=np.zeros(2), dt_hours=1.0, fe_load=0.3, fe_pv=0.4)
    p, q = nominal_node_profiles(net, prof)
    assert np.array_equal(p[1], [4.0, 6.0])
    assert np.array_equal(q[1], [0.0, 0.0])


def test_reactive_follows_power_factor():
    net = make_net([(0, 1, 0.1)], 2, loads=(Load(1, "a", pf=0.95),))
    prof = ProfileSet(loads={"a": np.array([10.0])}, pv_norm=np.zeros(1),
                      dt_hours=1.0, fe_load=0.3, fe_pv=0.4)
    _, q = nominal_node_profiles(net, prof)
    assert q[1, 0] == pytest.approx(10.0 * math.tan(math.acos(0.95)), rel=1e-12)


def test_shipped_profiles_consistent(feeder, feeder_profiles):
    p, _ = nominal_node_profiles(feeder, feeder_profiles)
    assert p.shape == (30, 24)
    assert p.sum() > 0


def test_downstream_masks_and_shared_path():
    # chain 0-1-2: subtree of branch (0,1) is {1, 2}; of (1,2) is {2}
    net = make_net([(0, 1, 0.16), (1, 2, 0.16)], 3)
    masks = downstream_masks(net)
    assert masks.tolist() == [[False, True, True], [False, False, True]]
    big_r, _ = shared_path_impedance(net)
    r_pu = 0.16 / net.z_base_ohm
    assert big_r[1, 1] == pytest.approx(r_pu, rel=1e-12)
    assert big_r[2, 2] == pytest.approx(2 * r_pu, rel=1e-12)
    assert big_r[1, 2] == pytest.approx(r_pu, rel=1e-12)
    assert big_r[0, 2] == 0.0
