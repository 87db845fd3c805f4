import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentforge.poly import Polynomial, PolySystem, build_ux, monomials_up_to
from momentforge.relax import (
    CERT_EIG_TOL,
    CERT_RESIDUAL_TOL,
    MomentVector,
    RelaxationError,
    SosCertificate,
    Verdict,
    build_moment_sdp,
    lasserre_value,
    moment_basis,
    sos_membership,
    support_value,
    verify_certificate,
)
from momentforge.sdp import Status

from conftest import ONEDIM_G, P, X1, XY, parse_system

# Reference values from an independent moment formulation solved with
# cvxpy/Clarabel (script and output kept next to the decisions ledger).
REFERENCE = {
    ("onedim", 4): -2.0416666525584573,
    ("onedim", 6): -2.00119081566577,
    ("xy_disks", 2): -0.12499998967832857,
    ("xy_disks", 4): -3.84752173139123e-05,
}
REFERENCE_TOL = 1e-6

INTERVAL = parse_system(["1-x^2"], X1)


def test_basis_examples(onedim):
    b = moment_basis(1, INTERVAL, 2)
    assert b.half_degrees == (1, 0)
    assert b.bases == (((0,), (1,)), ((0,),))
    b = moment_basis(2, PolySystem(2, ()), 2)
    assert b.bases == (((0, 0), (1, 0), (0, 1)),) and b.sizes == [3]
    b = moment_basis(1, onedim, 3)
    assert b.participating == (0,)
    for d in range(7):
        b = moment_basis(2, parse_system(["1-x^2-y^2", "x^3"], XY), d)
        assert b.half_degrees[0] == d // 2
        assert all(s == math.comb(2 + k, 2) for s, k in zip(b.sizes, b.half_degrees))


def test_moment_sdp_blocks_by_hand():
    msdp = build_moment_sdp(P("x", X1), INTERVAL, 2)
    blocks = msdp.blocks_at({(1,): 0.3, (2,): 0.5})
    assert np.allclose(blocks[0], [[1.0, 0.3], [0.3, 0.5]])
    assert np.allclose(blocks[1], [[0.5]])
    assert msdp.objective_at({(1,): 0.3, (2,): 0.5}) == 0.3


def test_moment_sdp_objectives():
    one = build_moment_sdp(Polynomial.constant(2, 1.0), parse_system(["1-x^2-y^2"], XY), 2)
    assert one.objective_at({(1, 0): 5.0, (1, 1): -3.0}) == 1.0
    xy = build_moment_sdp(P("x*y"), parse_system(["1-x^2-y^2"], XY), 2)
    assert xy.objective_at({(1, 1): 0.7}) == 0.7


def test_degree_of_objective_checked():
    with pytest.raises(RelaxationError):
        build_moment_sdp(P("x^3", X1), INTERVAL, 2)
    with pytest.raises(RelaxationError):
        support_value(P("x^2", X1), INTERVAL, 2)


def test_lasserre_examples(onedim):
    r = lasserre_value(P("x", X1), INTERVAL, 2)
    assert r.status == "Optimal" and r.value == pytest.approx(-1.0, abs=1e-7)
    for d in (0, 2, 4):
        assert lasserre_value(Polynomial.constant(1, 2.5), INTERVAL, d).value == pytest.approx(2.5, abs=1e-9)
    f = P("2-x", X1)
    for d in (4, 6, 8, 10):
        r = lasserre_value(f, onedim, d, box=[(0.0, 2.0)])
        assert r.status == "Optimal" and r.value < 0


def test_support_examples(onedim):
    assert support_value(P("x", X1), INTERVAL, 2) == pytest.approx(-1.0, abs=1e-7)
    assert support_value(Polynomial.constant(1, 1.0), INTERVAL, 2) == pytest.approx(1.0, abs=1e-9)
    assert support_value(P("-x", X1), onedim, 6) < -2.0


@pytest.mark.parametrize("d", [4, 6])
def test_onedim_against_reference(onedim, d):
    assert support_value(P("-x", X1), onedim, d, box=[(0.0, 2.0)]) == pytest.approx(REFERENCE[("onedim", d)], abs=REFERENCE_TOL)


@pytest.mark.parametrize("d", [2, 4])
def test_xy_disks_against_reference(disks, d):
    r = lasserre_value(P("x*y"), disks, d)
    assert r.status == "Optimal"
    assert r.value == pytest.approx(REFERENCE[("xy_disks", d)], abs=REFERENCE_TOL)


def test_box_hint_leaves_value_unchanged(disks):
    f = P("x*y + 0.5*x - y^2")
    plain = lasserre_value(f, disks, 4)
    hinted = lasserre_value(f, disks, 4, box=[(-3.0, 1.0), (0.0, 5.0)])
    assert hinted.value == pytest.approx(plain.value, abs=1e-7)
    # moments come back in the original coordinates
    assert hinted.moments.apply(f) == pytest.approx(hinted.value, abs=1e-9)


def test_infeasible_and_unbounded_statuses():
    r = lasserre_value(P("x", X1), parse_system(["-1-x^2"], X1), 2)
    assert r.status == Status.PRIMAL_INFEASIBLE.value and r.value == math.inf
    # at d = 1 only the linear localizer -y_1 >= 0 remains: a genuine ray
    r = lasserre_value(P("x", X1), parse_system(["-x"], X1), 1)
    assert r.status == Status.DUAL_INFEASIBLE.value and r.value == -math.inf


def test_member_examples(disks):
    r = sos_membership(P("1-x^2", X1), INTERVAL, 2)
    assert r.verdict is Verdict.MEMBER
    r = sos_membership(P("x+1", X1), INTERVAL, 2)
    assert r.verdict is Verdict.MEMBER
    # the only certificate: (1+x)^2/2 + (1-x^2)/2
    q0, q1 = r.certificate.grams
    # the optimum sits on the boundary of the PSD cone, where the solver
    # converges at the square root of its tolerance
    assert np.allclose(q0, [[0.5, 0.5], [0.5, 0.5]], atol=1e-4)
    assert np.allclose(q1, [[0.5]], atol=1e-4)
    sig0, sig1 = r.certificate.sigmas()
    assert sig0.allclose(P("(1+x)^2", X1).scale(0.5), atol=1e-4)
    for d in (2, 4, 6, 8):
        r = sos_membership(P("x*y"), disks, d)
        assert r.verdict is Verdict.NOT_MEMBER and r.margin_upper <= -1e-7


def test_member_of_positive_constant_is_strict():
    r = sos_membership(Polynomial.constant(2, 3.0), parse_system(["1-x^2-y^2"], XY), 2)
    assert r.verdict is Verdict.MEMBER and r.margin >= 1e-9


def test_verify_certificate_examples():
    r = sos_membership(P("x+1", X1), INTERVAL, 2)
    rep = verify_certificate(r.certificate, P("x+1", X1), INTERVAL)
    assert rep.residual <= 1e-7 and rep.sound
    zero = SosCertificate(1, 2, (0,), (((0,), (1,)),), [np.zeros((2, 2))])
    assert verify_certificate(zero, Polynomial.zero(1), INTERVAL).residual == 0.0
    bad = SosCertificate.from_json(r.certificate.to_json())
    bad.grams[0][0, 0] += 1e-3
    rep = verify_certificate(bad, P("x+1", X1), INTERVAL)
    assert rep.residual == pytest.approx(1e-3, rel=1e-3)
    with pytest.raises(RelaxationError):
        verify_certificate(SosCertificate(1, 2, (3,), (((0,),),), [np.eye(1)]), P("x", X1), INTERVAL)


def test_certificate_round_trip(tmp_path):
    cert = sos_membership(P("x+1", X1), INTERVAL, 2).certificate
    back = SosCertificate.loads(cert.dumps())
    assert back.dumps() == cert.dumps()
    assert verify_certificate(back, P("x+1", X1), INTERVAL).residual == cert.residual


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 1), st.sampled_from([2, 4, 6]))
def test_point_evaluation_is_feasible(theta, r, d):
    g = parse_system(["1-(x-1)^2-y^2", "1-x^2-(y-1)^2"], XY)
    # points of the lens: the chord midpoint (0.5, 0.5) plus a scaled offset
    x = np.array([0.5, 0.5]) + 0.29 * r * np.array([np.cos(theta), np.sin(theta)])
    assert np.all(g.values(x) >= 0)
    msdp = build_moment_sdp(P("x*y"), g, d)
    y = MomentVector.point_evaluation(x, d)
    for M in msdp.blocks_at(y):
        assert np.linalg.eigvalsh(M)[0] >= -1e-9
    assert msdp.objective_at(y) == pytest.approx(x[0] * x[1], abs=1e-12)


def test_hierarchy_small_randomized():
    rng = np.random.default_rng(17)
    g = parse_system(["1-x^2-y^2"], XY)
    for _ in range(4):
        f = Polynomial(2, {a: rng.uniform(-1, 1) for a in monomials_up_to(2, 3)})
        vals = [lasserre_value(f, g, d).value for d in (4, 6)]
        assert vals[1] >= vals[0] - 1e-7
        # any point of the disk bounds the relaxation from above
        pts = rng.uniform(-0.7, 0.7, size=(200, 2))
        assert vals[1] <= float(np.min(f.eval(pts))) + 1e-6


def test_certified_property_and_moment_check():
    r = lasserre_value(P("x", X1), INTERVAL, 4)
    assert r.certified == "optimal" and r.moment_feasible
    assert r.moments[(0,)] == 1.0
    assert all(math.isfinite(v) for v in r.moments.values.values())
