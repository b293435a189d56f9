import numpy as np
import pytest

import droopcert as dc
from droopcert.scenario import ScenarioError, bundled_scenario_path


def test_case_3bus_matches_published_parameters(scn_paper):
    d = scn_paper.droop
    np.testing.assert_array_equal(d.m_p, [0.040, 0.035, 0.050])
    np.testing.assert_array_equal(d.n_q, [0.020, 0.020, 0.015])
    np.testing.assert_array_equal(d.tau_v, [0.70, 0.80, 0.11])
    assert d.omega_nom == pytest.approx(2 * np.pi * 50.0)
    assert scn_paper.network.base_mva == 10.0
    assert scn_paper.network.base_kv == 10.0
    assert scn_paper.network.base_hz == 50.0

    # admittance assembled from the three published series impedances
    y12 = 1.0 / complex(0.08, 0.11)
    y23 = 1.0 / complex(0.10, 0.12)
    G, B = scn_paper.network.conductance, scn_paper.network.susceptance
    assert G[0, 1] == pytest.approx(-y12.real)
    assert B[0, 1] == pytest.approx(-y12.imag)
    assert G[1, 2] == pytest.approx(-y23.real)
    assert B[1, 2] == pytest.approx(-y23.imag)
    assert B[0, 0] == pytest.approx(2 * y12.imag)  # pure series sums

    assert scn_paper.domain.v_min == 0.95
    assert scn_paper.domain.v_max == 1.05
    assert scn_paper.domain.gamma_max == pytest.approx(np.deg2rad(20.0))


def test_all_bundled_scenarios_load():
    for name in dc.scenario.BUNDLED:
        scn = dc.bundled_scenario(name)
        assert scn.network.n_buses == 3


def test_negative_droop_gain_is_named(tmp_path):
    text = bundled_scenario_path("case_3bus").read_text()
    bad = text.replace("m_p = [0.040, 0.035, 0.050]",
                       "m_p = [0.040, -0.035, 0.050]")
    path = tmp_path / "bad.toml"
    path.write_text(bad)
    with pytest.raises(ScenarioError, match="m_p"):
        dc.load_scenario(path)


def test_parse_error_reports_file(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[network\nn_buses = 3\n")
    with pytest.raises(ScenarioError, match="parse error"):
        dc.load_scenario(path)


def test_missing_section_is_named(tmp_path):
    path = tmp_path / "nodomain.toml"
    text = bundled_scenario_path("case_3bus").read_text()
    text = text.replace("[domain]", "[domain_typo]")
    path.write_text(text)
    with pytest.raises(ScenarioError, match=r"\[domain\]"):
        dc.load_scenario(path)


def test_single_bus_scenario_loads(tmp_path):
    path = tmp_path / "one.toml"
    path.write_text("""
[network]
n_buses = 1
g_matrix = [[0.5]]
b_matrix = [[-1.0]]

[droop]
m_p = [0.04]
n_q = [0.0]
tau_v = [0.5]
f_nom_hz = 50.0
v_nom = [1.0]
p_ref = [0.0]
q_ref = [0.0]

[domain]
v_min = 0.9
v_max = 1.1
gamma_max_deg = 10.0

[solver]
""")
    scn = dc.load_scenario(path)
    assert scn.network.n_buses == 1
    assert scn.network.edges == ()


def test_full_network_with_kron_reduction(tmp_path):
    # 3-bus chain with the middle bus eliminated equals the series combination
    path = tmp_path / "full.toml"
    path.write_text("""
[network]
n_buses = 2
n_full_buses = 3
full_lines = [[1, 2, 0.02, 0.10], [2, 3, 0.05, 0.15]]
retained = [1, 3]

[droop]
m_p = [0.04, 0.04]
n_q = [0.02, 0.02]
tau_v = [0.5, 0.5]
f_nom_hz = 50.0
v_nom = [1.0, 1.0]
p_ref = [0.0, 0.0]
q_ref = [0.0, 0.0]

[domain]
v_min = 0.9
v_max = 1.1
gamma_max_deg = 15.0

[solver]
""")
    scn = dc.load_scenario(path)
    y_a = 1.0 / complex(0.02, 0.10)
    y_b = 1.0 / complex(0.05, 0.15)
    y_s = y_a * y_b / (y_a + y_b)
    assert scn.network.conductance[0, 1] == pytest.approx(-y_s.real)
    assert scn.network.susceptance[0, 1] == pytest.approx(-y_s.imag)


def test_unknown_disturbance_channel_is_rejected(tmp_path):
    text = bundled_scenario_path("case_3bus_slow").read_text()
    path = tmp_path / "badchan.toml"
    path.write_text(text.replace('channel = "p1"', 'channel = "p9"'))
    with pytest.raises(ScenarioError, match="p9"):
        dc.load_scenario(path)
