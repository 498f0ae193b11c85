import numpy as np
import pytest

from netcert import certify, frown, oracle
from netcert.model import Network, PerturbationSpec, generate_random_network

from conftest import boundary_sample, linear_two_class_net


def test_certified_at_linear_net():
    net = linear_two_class_net()
    # while eps < 0.5 both hidden neurons are one-signed, the analysis is
    # exact, and the margin is 1 - 2 eps
    ok, marg = certify.certified_at(net, [0.5], 0, 0.4, np.inf)
    assert ok and marg[0] == pytest.approx(0.2)
    ok, marg = certify.certified_at(net, [0.5], 0, 0.45, np.inf)
    assert ok and marg[0] == pytest.approx(0.1)
    ok, marg = certify.certified_at(net, [0.5], 0, 0.6, np.inf)
    assert not ok and marg[0] < 0


def test_search_linear_net_radius():
    cert = certify.search_epsilon(linear_two_class_net(), [0.5], 0, np.inf,
                                  rel_tol=1e-3)
    assert cert.epsilon_certified == pytest.approx(0.5, rel=1.5e-3)
    assert not cert.cap_hit and not cert.never_certified
    assert cert.iterations > 0 and cert.wall_time >= 0
    # certificate invariants: certified at the radius, not certified just above
    ok, marg = certify.certified_at(linear_two_class_net(), [0.5], 0,
                                    cert.epsilon_certified, np.inf)
    assert ok and marg.min() >= -1e-9
    ok, _ = certify.certified_at(
        linear_two_class_net(), [0.5], 0,
        cert.epsilon_certified * (1 + 2 * cert.rel_tol), np.inf)
    assert not ok


def test_targeted_mode():
    net = linear_two_class_net()
    cert = certify.search_epsilon(net, [0.5], 0, np.inf, target=1)
    assert cert.mode == "targeted"
    assert cert.epsilon_certified == pytest.approx(0.5, rel=1.5e-3)
    with pytest.raises(ValueError):
        certify.certified_at(net, [0.5], 0, 0.1, np.inf, target=0)
    with pytest.raises(ValueError):
        certify.certified_at(net, [0.5], 0, 0.1, np.inf, target=5)


def test_constant_gap_net_hits_cap():
    w1 = np.array([[1.0], [-1.0]])
    net = Network((w1, np.zeros((2, 2))),
                  (np.zeros(2), np.array([1.0, 0.0])), "relu")
    cert = certify.search_epsilon(net, [0.5], 0, np.inf, cap=10.0)
    assert cert.cap_hit
    assert cert.epsilon_certified == 10.0


def test_never_certified_flag():
    # prediction with a tied argmax elsewhere: force label to the loser
    net = linear_two_class_net()
    with pytest.warns(UserWarning):
        cert = certify.search_epsilon(net, [0.5], 1, np.inf)
    assert cert.never_certified
    assert cert.epsilon_certified == 0.0


def test_radius_ordering_crown_frown():
    cfg = frown.OptimizerConfig(max_iters=40, group_size=8)
    for seed in range(3):
        net = generate_random_network(seed, [6, 8, 8, 4], "sigmoid", scale=2.0)
        x0, label = boundary_sample(net, 40 + seed)
        cc = certify.search_epsilon(net, x0, label, np.inf, "crown", cap=2.0)
        cf = certify.search_epsilon(net, x0, label, np.inf, "frown", cap=2.0,
                                    frown_config=cfg)
        assert cc.epsilon_certified <= cf.epsilon_certified + 1e-9


def test_certified_radius_below_exact_adversarial_distortion():
    for seed in (1, 3):
        net = generate_random_network(seed, [3, 4, 4, 3], "relu", scale=1.0)
        x0, label = boundary_sample(net, seed)
        cert = certify.search_epsilon(net, x0, label, np.inf, "crown", cap=4.0)
        if cert.never_certified:
            continue
        # exact check at the certified radius: no class flip may exist
        spec = PerturbationSpec(x0, np.inf, cert.epsilon_certified)
        others = [j for j in range(3) if j != label]
        for j in others:
            c = np.zeros(3)
            c[label] = 1.0
            c[j] = -1.0
            er = oracle.exact_output_functional_range(net, spec, c)
            assert er.min >= -1e-7, (seed, j)


def test_lp_method_and_p2_rejection():
    net = linear_two_class_net()
    cert = certify.search_epsilon(net, [0.5], 0, np.inf, method="lp")
    assert cert.epsilon_certified == pytest.approx(0.5, rel=1.5e-3)
    from netcert.lp import LpUnsupportedError
    with pytest.raises(LpUnsupportedError):
        certify.certified_at(net, [0.5], 0, 0.1, 2, method="lp")


def test_certificate_serialization_round_trip():
    import json
    cert = certify.search_epsilon(linear_two_class_net(), [0.5], 0, 1)
    doc = json.loads(json.dumps(cert.to_dict()))
    assert doc["epsilon_certified"] == cert.epsilon_certified
    assert doc["p"] == 1.0
    assert doc["method"] == "crown"
    assert len(doc["margins"]) == 1
