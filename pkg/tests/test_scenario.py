import numpy as np
import pytest

from cfisac.channel import realize_channel
from cfisac.scenario import (
    DOWNLINK,
    MOBILE,
    STATIC,
    UPLINK,
    Reflector,
    ScenarioConfig,
    SchedulePolicy,
    assign_roles,
    generate_scenario,
    load_scenario,
    save_scenario,
    scenario_to_dict,
)


def test_default_volume_five_by_five():
    sc = generate_scenario(ScenarioConfig(n_rru=10, n_downlink=5), seed=7)
    assert len(sc.rrus) == 10
    assert len(sc.downlink_ids) == 5 and len(sc.uplink_ids) == 5
    for node in sc.rrus:
        assert sc.contains(node.position)
    for r in sc.reflectors:
        assert sc.contains(r.position)


def test_no_reflectors_gives_los_only():
    sc = generate_scenario(ScenarioConfig(n_static=0, n_mobile=0), seed=1)
    ch = realize_channel(sc)
    assert all(len(ps) == 1 and ps[0].kind == "LOS" for ps in ch.paths.values())


def test_same_seed_identical():
    cfg = ScenarioConfig()
    assert scenario_to_dict(generate_scenario(cfg, 3)) == scenario_to_dict(generate_scenario(cfg, 3))
    assert scenario_to_dict(generate_scenario(cfg, 3)) != scenario_to_dict(generate_scenario(cfg, 4))


def test_rejects_single_rru():
    with pytest.raises(ValueError):
        generate_scenario(ScenarioConfig(n_rru=1), 0)


def test_design_ranges():
    cfg = ScenarioConfig(n_static=20, n_mobile=20)
    sc = generate_scenario(cfg, 11)
    for node in sc.rrus:
        assert 10 <= node.position[2] <= 60
    pos = np.array([n.position for n in sc.rrus])
    dist = np.linalg.norm(pos[:, None] - pos[None], axis=2) + np.eye(len(pos)) * 1e9
    assert dist.min() >= 50
    for r in sc.reflectors:
        assert 0.05 <= abs(r.reflection_gain) <= 0.5
        if r.kind == STATIC:
            assert not np.any(r.velocity)
        else:
            assert np.linalg.norm(r.velocity) <= 30
    assert len(sc.static_reflectors) == 20 and len(sc.mobile_reflectors) == 20


@pytest.mark.parametrize("policy, n_down", [
    (SchedulePolicy("fixed", n_downlink=5), 5),
    (SchedulePolicy("single_downlink", downlink_id=3), 1),
])
def test_role_partition(policy, n_down):
    sc = assign_roles(generate_scenario(ScenarioConfig(), 0), 0, policy)
    down, up = set(sc.downlink_ids), set(sc.uplink_ids)
    assert len(down) == n_down and len(up) == 10 - n_down
    assert not down & up and down | up == {r.id for r in sc.rrus}


def test_alternating_roles():
    sc = generate_scenario(ScenarioConfig(), 0)
    s0 = assign_roles(sc, 0, SchedulePolicy("alternating"))
    s1 = assign_roles(sc, 1, SchedulePolicy("alternating"))
    assert s0.rru(0).role == DOWNLINK and s1.rru(0).role == UPLINK


def test_policy_leaving_empty_set_rejected():
    sc = generate_scenario(ScenarioConfig(), 0)
    with pytest.raises(ValueError):
        assign_roles(sc, 0, SchedulePolicy("fixed", n_downlink=10))
    with pytest.raises(ValueError):
        assign_roles(sc, 0, SchedulePolicy("fixed", n_downlink=0))


def test_reflector_invariants():
    with pytest.raises(ValueError):
        Reflector(0, np.zeros(3), np.ones(3), STATIC, 0.5)
    with pytest.raises(ValueError):
        Reflector(0, np.zeros(3), np.zeros(3), MOBILE, 1.5)
    with pytest.raises(ValueError):
        Reflector(0, np.zeros(3), np.zeros(3), MOBILE, 0.0)


def test_yaml_round_trip(tmp_path):
    cfg = ScenarioConfig(n_ue=2)
    sc = generate_scenario(cfg, 5)
    path = tmp_path / "s.yaml"
    save_scenario(sc, path, cfg)
    assert scenario_to_dict(load_scenario(path)) == scenario_to_dict(sc)


def test_positions_read_only():
    sc = generate_scenario(ScenarioConfig(), 0)
    with pytest.raises(ValueError):
        sc.rrus[0].position[0] = 1.0
