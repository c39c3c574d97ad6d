import math

import numpy as np
import pytest

from cvxrepair.cvxfeas import residual_value
from cvxrepair.errors import InvalidInputError, UnsupportedSizeError
from cvxrepair.linexact import (CONVERGED, NONCONVERGED, LinearSystem, RepairCertificate,
                                optimality_residuals, solve_exact, solve_qp_reference, verify_kkt)

from generators import inconsistent_linear

TWO = LinearSystem([[1], [-1]], [-1, -1])
SQUEEZE4 = LinearSystem([[1, 0], [-1, 0], [0, 1], [0, -1]], [-1, -1, -1, -1])


def test_two_constraint_example():
    cert = solve_exact(TWO)
    np.testing.assert_allclose(cert.x0, [0.0], atol=1e-12)
    np.testing.assert_allclose(cert.h0, [1.0, 1.0], atol=1e-12)
    assert cert.distance == pytest.approx(math.sqrt(2), abs=1e-12)
    np.testing.assert_allclose(cert.repaired_rhs, [0.0, 0.0], atol=1e-12)
    assert cert.status == CONVERGED
    np.testing.assert_allclose(cert.lam, 2 * cert.h0)
    np.testing.assert_array_equal(cert.mu, [0.0, 0.0])


def test_consistent_system():
    s = LinearSystem([[1]], [5])
    cert = solve_exact(s)
    np.testing.assert_array_equal(cert.h0, [0.0])
    assert cert.distance == 0.0
    x, h = solve_qp_reference(s)
    np.testing.assert_array_equal(h, [0.0])
    assert s.slack(x)[0] <= 0


def test_four_squeeze_matches_reference():
    cert = solve_exact(SQUEEZE4)
    _, h = solve_qp_reference(SQUEEZE4)
    np.testing.assert_allclose(cert.h0, h, atol=1e-8)
    assert cert.distance == pytest.approx(2.0, abs=1e-8)


def test_reference_two_constraint():
    x, h = solve_qp_reference(TWO)
    np.testing.assert_allclose(x, [0.0], atol=1e-12)
    np.testing.assert_allclose(h, [1.0, 1.0], atol=1e-12)


def test_kkt_passes_exactly_on_two_constraint():
    passed, report = verify_kkt(TWO, solve_exact(TWO))
    assert passed
    assert max(report.residuals.values()) < 1e-12
    assert report.summary() == "KKT conditions hold"


def test_kkt_names_violated_block():
    cert = solve_exact(TWO)
    h = cert.h0.copy()
    h[0] += 1e-3
    bad = RepairCertificate(cert.x0, h, TWO.rhs + h)
    passed, report = verify_kkt(TWO, bad)
    assert not passed
    assert "stationarity" in report.violated
    assert "stationarity" in report.summary()


def test_kkt_detects_infeasible_witness():
    cert = solve_exact(TWO)
    bad = RepairCertificate(cert.x0 + 0.5, cert.h0, cert.repaired_rhs)
    passed, report = verify_kkt(TWO, bad)
    assert not passed and "primal_feasibility" in report.violated


def test_reference_certificates_pass_kkt():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n, m = int(rng.integers(1, 4)), int(rng.integers(2, 5))
        s = inconsistent_linear(rng, n, m)
        x, h = solve_qp_reference(s)
        passed, report = verify_kkt(s, RepairCertificate(x, h, s.rhs + h))
        assert passed, report.summary()


def test_random_3x2_agrees_with_reference():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = inconsistent_linear(rng, 2, 3)
        cert = solve_exact(s)
        _, h = solve_qp_reference(s)
        assert cert.converged
        assert cert.distance == pytest.approx(np.linalg.norm(h), abs=1e-7)


def test_reference_matches_projected_gradient():
    # minimize ||[Ax - b]_+||^2 by plain gradient descent as an independent cross-check
    rng = np.random.default_rng(2)
    done = 0
    while done < 10:
        s = inconsistent_linear(rng, 2, 3)
        A, b = s.A, s.rhs
        # gradient descent crawls when A is nearly rank deficient
        if np.linalg.svd(A, compute_uv=False).min() < 0.2:
            continue
        done += 1
        L = 2 * np.linalg.norm(A, 2) ** 2
        x = np.zeros(2)
        for _ in range(20_000):
            x = x - 2 * A.T @ np.maximum(A @ x - b, 0) / L
        ref = np.linalg.norm(np.maximum(A @ x - b, 0))
        _, h = solve_qp_reference(s)
        assert np.linalg.norm(h) == pytest.approx(ref, abs=1e-6)


def test_equivalence_chain():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n, m = int(rng.integers(1, 4)), int(rng.integers(2, 5))
        s = inconsistent_linear(rng, n, m)
        cert = solve_exact(s)
        res = optimality_residuals(s, cert)
        assert max(res.values()) <= 1e-8, res
        assert verify_kkt(s, cert)[0]
        assert np.all(cert.h0 >= 0)
        _, h = solve_qp_reference(s)
        assert cert.distance == pytest.approx(np.linalg.norm(h), abs=1e-7)


def test_h0_unique_across_starts():
    rng = np.random.default_rng(4)
    for _ in range(5):
        # n = 3 with m = 2 leaves a whole line of minimizers x0
        s = inconsistent_linear(rng, 3, 2)
        certs = [solve_exact(s, seed=k) for k in range(10)]
        H = np.array([c.h0 for c in certs])
        assert np.max(np.ptp(H, axis=0)) <= 1e-7
        X = np.array([c.x0 for c in certs])
        assert np.max(np.ptp(X, axis=0)) > 1e-3


def test_residual_identity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = inconsistent_linear(rng, int(rng.integers(1, 4)), int(rng.integers(2, 5)))
        cert = solve_exact(s)
        val = residual_value(s.to_convex_system(), cert.x0)
        assert cert.distance ** 2 == pytest.approx(val, abs=1e-10)


def test_zero_rows():
    s = LinearSystem([[1, 0], [0, 0], [-1, 0]], [-1, 2, -1])
    cert = solve_exact(s)
    np.testing.assert_allclose(cert.h0, [1, 0, 1], atol=1e-12)
    _, h = solve_qp_reference(s)
    np.testing.assert_allclose(h, cert.h0, atol=1e-9)
    with pytest.raises(InvalidInputError):
        LinearSystem([[1, 0], [0, 0]], [1, 0])
    all_zero = LinearSystem([[0, 0]], [1])
    assert solve_exact(all_zero).distance == 0.0


def test_bad_shapes():
    with pytest.raises(InvalidInputError):
        LinearSystem([[1, 0]], [1, 2])
    with pytest.raises(InvalidInputError):
        LinearSystem([[np.nan]], [1])
    with pytest.raises(InvalidInputError):
        LinearSystem.from_dict({"A": [[1]]})


def test_dict_round_trip():
    d = SQUEEZE4.to_dict()
    s = LinearSystem.from_dict(d)
    np.testing.assert_array_equal(s.A, SQUEEZE4.A)
    np.testing.assert_array_equal(s.rhs, SQUEEZE4.rhs)


def test_enumeration_cap():
    A = np.ones((13, 1))
    with pytest.raises(UnsupportedSizeError):
        solve_qp_reference(LinearSystem(A, np.ones(13)))
    x, h = solve_qp_reference(LinearSystem(A, np.ones(13)), cap=13)
    assert np.all(h == 0)


def test_budget_exhaustion_flags_nonconverged():
    rng = np.random.default_rng(6)
    s = inconsistent_linear(rng, 3, 4)
    cert = solve_exact(s, seed=1, max_iter=2)
    assert cert.status == NONCONVERGED
    assert cert.iterations == 2
    assert np.all(cert.h0 >= 0)


def test_plain_iteration_reaches_same_answer():
    rng = np.random.default_rng(7)
    s = inconsistent_linear(rng, 2, 3)
    fast = solve_exact(s)
    plain = solve_exact(s, accelerate=False)
    assert plain.converged
    np.testing.assert_allclose(plain.h0, fast.h0, atol=1e-7)
    assert plain.iterations >= fast.iterations


def test_line_minimum_matches_scan():
    from cvxrepair.linexact import _line_minimum

    rng = np.random.default_rng(8)
    T = np.linspace(0, 10, 200_001)
    for _ in range(50):
        r, s = rng.standard_normal(5), rng.standard_normal(5)
        phi = np.sum(np.maximum(r[:, None] + T * s[:, None], 0) ** 2, axis=0)
        t = _line_minimum(r, s)
        got = np.sum(np.maximum(r + t * s, 0) ** 2)
        assert got <= phi.min() + 1e-12
