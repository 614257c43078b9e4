import numpy as np
import pytest

from singprop import library as lib
from singprop.brownian import (coarsen, derive_seed, export_path, import_path, path_bytes,
                               path_from_bytes, sample_brownian, truncate, zero_path)
from singprop.errors import BlowUp, InvalidFactor, InvalidSteps, OrderExceeded
from singprop.flow import (PhasePoint, ensemble_increments, flow_composed, halfwave_moment_bound,
                           homogeneity_check, integrate_flow, integrate_flow_ito, inverse_flow,
                           moment_probe)
from singprop.symbols import SymbolExpansion, make_symbol
from singprop.transport import (random_symbol_probe, remainder_symbol, transport_Q0, transport_Qj,
                                transport_residual, transported_expansion, transported_symbol)


def path(seed=0, n=1024, T=1.0):
    return sample_brownian(seed, T, n)


# ---------------------------------------------------------------- Brownian


def test_same_seed_same_path():
    np.testing.assert_array_equal(path(5).increments, path(5).increments)


def test_zero_path_is_identically_zero():
    assert np.all(zero_path(1.0, 64).cumulative == 0.0)


def test_cumulative_starts_at_zero_and_sums_increments():
    p = path(1, 256)
    assert p.cumulative[0] == 0.0
    np.testing.assert_array_equal(p.cumulative[1:], np.cumsum(p.increments))


@pytest.mark.parametrize("n", [0, 1, 3, 100])
def test_sample_rejects_bad_step_counts(n):
    with pytest.raises(InvalidSteps):
        sample_brownian(0, 1.0, n)


def test_terminal_variance_over_many_seeds():
    wT = np.array([sample_brownian(derive_seed(11, m), 1.0, 2).cumulative[-1] for m in range(10_000)])
    sq = wT ** 2
    assert abs(sq.mean() - 1.0) <= 3 * sq.std(ddof=1) / np.sqrt(sq.size)


def test_coarsen_identity_and_full():
    p = path(2, 512)
    np.testing.assert_array_equal(coarsen(p, 1).increments, p.increments)
    full = coarsen(p, 512)
    assert full.n_steps == 1 and full.increments[0] == p.cumulative[-1]


def test_coarsen_is_associative_and_keeps_even_values():
    p = path(3, 1024)
    np.testing.assert_array_equal(coarsen(coarsen(p, 2), 2).increments, coarsen(p, 4).increments)
    np.testing.assert_array_equal(coarsen(p, 2).cumulative, p.cumulative[::2])


def test_coarsen_rejects_bad_factor():
    with pytest.raises(InvalidFactor):
        coarsen(path(0, 64), 3)
    with pytest.raises(InvalidFactor):
        coarsen(path(0, 64), 128)


def test_binary_round_trip(tmp_path):
    p = path(9, 128)
    q = path_from_bytes(path_bytes(p))
    assert (q.seed, q.T, q.n_steps) == (p.seed, p.T, p.n_steps)
    np.testing.assert_array_equal(q.increments, p.increments)
    export_path(p, str(tmp_path / "w"))
    np.testing.assert_array_equal(import_path(str(tmp_path / "w")).increments, p.increments)


def test_derive_seed_separates_roles():
    assert derive_seed(0, "path") != derive_seed(0, "mean")
    assert derive_seed(0, "path") == derive_seed(0, "path")


# ------------------------------------------------------------ integrate_flow


def test_constant_transport_is_exact():
    p = path(4)
    tr = integrate_flow(lib.constant_transport(0.8), lib.zero(), p, PhasePoint(0.3, 2.0))
    np.testing.assert_allclose(tr.x, 0.3 + 0.8 * p.cumulative, atol=1e-13)
    assert np.all(tr.xi == 2.0)


def test_linear_phase_closed_form():
    p = path(6, 4096)
    tr = integrate_flow(lib.linear_phase(), lib.zero(), p, PhasePoint(1.5, -0.5))
    w = p.cumulative
    assert np.max(np.abs(tr.x / (1.5 * np.exp(w)) - 1)) <= 1e-3
    assert np.max(np.abs(tr.xi / (-0.5 * np.exp(-w)) - 1)) <= 1e-3


def test_deterministic_drift():
    tr = integrate_flow(lib.zero(), lib.constant_transport(2.0), zero_path(1.0, 64), PhasePoint(1.0, 3.0))
    np.testing.assert_allclose(tr.x, 1.0 + 2.0 * tr.times, atol=1e-14)
    assert np.all(tr.xi == 3.0)


def test_trajectory_is_adapted():
    p = path(7, 512)
    full = integrate_flow(lib.halfwave(), lib.zero(), p, PhasePoint(0.2, 1.0))
    part = integrate_flow(lib.halfwave(), lib.zero(), truncate(p, 200), PhasePoint(0.2, 1.0))
    np.testing.assert_array_equal(part.x, full.x[:201])
    np.testing.assert_array_equal(part.xi, full.xi[:201])


def test_blow_up_is_reported():
    fast = make_symbol(lambda t, x, xi: x ** 3 * xi, 1.0, homogeneous=True, smooth_at_origin=True,
                       partials={((1,), (0,)): lambda t, x, xi: x ** 3 + 0 * xi,
                                 ((0,), (1,)): lambda t, x, xi: 3 * x ** 2 * xi})
    with pytest.raises(BlowUp):
        integrate_flow(lib.zero(), fast, zero_path(10.0, 1024), PhasePoint(5.0, 1.0))


# ---------------------------------------------------------------- Ito form


def test_ito_constant_transport_coincides():
    p = path(8)
    a = integrate_flow(lib.constant_transport(-0.4), lib.zero(), p, PhasePoint(0.0, 1.0))
    b = integrate_flow_ito(lib.constant_transport(-0.4), lib.zero(), p, PhasePoint(0.0, 1.0))
    np.testing.assert_allclose(a.x, b.x, atol=1e-13)


def test_ito_correction_for_linear_phase_is_half_x():
    from singprop.flow import ito_correction
    cx, cxi = ito_correction(lib.linear_phase(), 0.0, np.array([2.0, -1.0]), np.array([1.0, 3.0]))
    np.testing.assert_allclose(cx, [1.0, -0.5])
    np.testing.assert_allclose(cxi, [0.5, 1.5])


# -------------------------------------------------------------- inverse flow


def test_inverse_flow_zero_path_is_identity():
    q = inverse_flow(lib.halfwave(), lib.zero(), zero_path(1.0, 64), 1.0, PhasePoint(0.3, -2.0))
    assert float(q.x) == 0.3 and float(q.xi) == -2.0


def test_inverse_flow_constant_transport():
    p = path(10, 256)
    q = inverse_flow(lib.constant_transport(0.6), lib.zero(), p, 0.5, PhasePoint(1.0, 1.0))
    assert float(q.x) == pytest.approx(1.0 - 0.6 * p.cumulative[128], abs=1e-13)


def test_inverse_undoes_forward():
    p = path(12, 4096)
    p0 = PhasePoint(0.7, 1.3)
    a1 = lib.variable_transport(0.5, 0.25, 1.0)
    fwd = integrate_flow(a1, lib.zero(), p, p0).final
    back = inverse_flow(a1, lib.zero(), p, 1.0, fwd)
    assert abs(float(back.x) - 0.7) <= 1e-3 * 0.7
    assert abs(float(back.xi) - 1.3) <= 1e-3 * 1.3


def test_inverse_composition_converges():
    a1 = lib.halfwave()
    master = path(13, 4096)
    errs = []
    for n in (256, 512, 1024, 2048, 4096):
        p = coarsen(master, 4096 // n)
        fwd = integrate_flow(a1, lib.zero(), p, PhasePoint(0.4, 1.0)).final
        back = inverse_flow(a1, lib.zero(), p, 1.0, fwd)
        errs.append(abs(float(back.x) - 0.4) + abs(float(back.xi) - 1.0))
    order = np.polyfit(np.log([1 / n for n in (256, 512, 1024, 2048, 4096)]), np.log(errs), 1)[0]
    assert order >= 0.9


# ------------------------------------------------------------- homogeneity


def test_homogeneity_lambda_one_is_exact():
    assert homogeneity_check(lib.halfwave(), lib.zero(), path(1), PhasePoint(0.0, 1.0), 1.0) == 0.0


def test_homogeneity_halfwave_and_linear_phase():
    p = path(14, 4096)
    assert homogeneity_check(lib.halfwave(), lib.zero(), p, PhasePoint(0.5, 1.0), 10.0) <= 1e-6
    assert homogeneity_check(lib.linear_phase(), lib.zero(), p, PhasePoint(0.5, 1.0), 2.0) <= 1e-6


# ------------------------------------------------------------ moment probe


def test_moment_of_zero_symbol_is_exact():
    r = moment_probe(lib.zero(), lib.zero(), 3, 100, PhasePoint(1.5, 1.0), 1.0, 16)
    assert r.estimate == pytest.approx(1.5 ** 3, rel=1e-15)
    assert r.ci_half_width == 0.0


def test_moment_constant_transport_reflection_bound():
    c, x0 = 0.5, 1.0
    r = moment_probe(lib.constant_transport(c), lib.zero(), 2, 2000, PhasePoint(x0, 1.0), 1.0, 128)
    # E sup|w|^2 <= 4 E w(T)^2 (Doob), so E sup|x|^2 <= x0^2 + 2 x0 |c| E sup|w| + c^2 4T
    bound = x0 ** 2 + 2 * x0 * abs(c) * np.sqrt(4.0) + 4 * c ** 2
    assert r.estimate <= bound + r.ci_half_width


def test_halfwave_terminal_moment_below_bound():
    a1 = lib.halfwave(1.0, 0.5, 1.0)
    r = moment_probe(a1, lib.zero(), 2, 2000, PhasePoint(0.5, 1.0), 1.0, 256, component="xi",
                     statistic="terminal")
    bound, _ = halfwave_moment_bound(1.0, 0.5, 1.0, 1.0, 1.0)
    assert r.estimate <= bound


def test_moment_probe_rejects_bad_arguments():
    with pytest.raises(ValueError):
        moment_probe(lib.zero(), lib.zero(), 9, 100, PhasePoint(1.0, 1.0), 1.0, 16)
    with pytest.raises(ValueError):
        moment_probe(lib.zero(), lib.zero(), 2, 10, PhasePoint(1.0, 1.0), 1.0, 16)


def test_ensemble_is_order_independent():
    a = ensemble_increments(3, 8, 1.0, 16)
    b = ensemble_increments(3, 16, 1.0, 16)
    np.testing.assert_array_equal(a, b[:, :8])


# ---------------------------------------------------------------- transport


def cos_xi():
    return make_symbol(lambda t, x, xi: np.cos(x) * xi, 1.0, homogeneous=True, smooth_at_origin=True,
                       name="cos_xi")


def test_Q0_of_constant_is_constant():
    one = make_symbol(lambda t, x, xi: 1.0 + 0 * x * xi, 0.0, homogeneous=True, smooth_at_origin=True)
    v = transport_Q0(one, lib.halfwave(), lib.zero(), path(1, 64), 0.5, PhasePoint(0.2, 3.0))
    assert v == 1.0


def test_Q0_invariance_along_flow():
    p = path(15, 4096)
    a1 = lib.variable_transport(0.5, 0.25, 1.0)
    p0 = PhasePoint(0.9, 2.0)
    q0 = cos_xi()
    tr = integrate_flow(a1, lib.zero(), p, p0)
    Q0 = transported_symbol(q0, a1, lib.zero(), p)
    ref = q0.func(0.0, 0.9, 2.0)
    vals = Q0.func(p.times[::128], tr.x[::128], tr.xi[::128])
    assert np.max(np.abs(vals - ref)) <= 1e-3 * (1 + abs(ref))


def test_Q0_deterministic_transport():
    q0 = cos_xi()
    v = transport_Q0(q0, lib.zero(), lib.constant_transport(1.5), zero_path(1.0, 64), 1.0,
                     PhasePoint(2.0, 3.0))
    assert v == pytest.approx(q0.func(0.0, 2.0 - 1.5, 3.0), abs=1e-13)


def test_Qj_without_remainder_is_transport_of_qj():
    one = make_symbol(lambda t, x, xi: 1.0 + 0 * x * xi, 0.0, homogeneous=True, smooth_at_origin=True)
    q1 = make_symbol(lambda t, x, xi: np.sin(x) / np.abs(xi), -1.0, homogeneous=True, name="q1")
    a1 = lib.variable_transport(0.5, 0.25, 1.0)
    p = path(16, 256)
    Q = transported_expansion(SymbolExpansion([one, q1], 0.0), SymbolExpansion([a1], 1.0), lib.zero(), p)
    R1 = remainder_symbol(Q, SymbolExpansion([a1], 1.0), 1)
    assert R1.params["structural_zero"]
    pt = PhasePoint(0.3, 2.0)
    want = transport_Q0(q1, a1, lib.zero(), p, 1.0, pt)
    assert transport_Qj(Q, SymbolExpansion([a1], 1.0), p, 1.0, pt, 1, q1, lib.zero()) == pytest.approx(want)


def test_Qj_residual_is_small_and_shrinks():
    q0 = make_symbol(lambda t, x, xi: np.cos(x) + 0 * xi, 0.0, homogeneous=True, smooth_at_origin=True)
    q1 = make_symbol(lambda t, x, xi: np.sin(x) / np.abs(xi), -1.0, homogeneous=True)
    a1 = lib.variable_transport(0.5, 0.25, 1.0)
    a = SymbolExpansion([a1], 1.0)
    master = path(3, 1024)
    p0 = PhasePoint(0.4, 3.0)
    res = []
    for n in (256, 1024):
        p = coarsen(master, 1024 // n)
        Q = transported_expansion(SymbolExpansion([q0, q1], 0.0), a, lib.zero(), p)
        R1 = remainder_symbol(Q, a, 1)
        res.append(transport_residual(Q[1], q1, R1, a1, lib.zero(), p, p0)[0])
    assert res[-1] <= 1e-3 * abs(q1.func(0.0, 0.4, 3.0))
    assert res[-1] < res[0]


def test_Qj_rejects_high_index():
    with pytest.raises(OrderExceeded):
        transport_Qj(SymbolExpansion([cos_xi()], 1.0), SymbolExpansion([lib.halfwave()], 1.0), path(0, 8),
                     0.0, PhasePoint(0.0, 1.0), 3, cos_xi(), lib.zero())


# ------------------------------------------------------------ random symbols


def test_random_symbol_of_constant_integrand():
    p_sym = cos_xi()
    fine = path(17, 64)
    rep = random_symbol_probe(lambda p: p_sym, [(coarsen(fine, 2), fine)], ((0.0, 2 * np.pi),), 0)
    # q = cos(x) xi w(T): sup over x and unit xi of |q| (1+|xi|)^-1, extended by homogeneity
    assert rep.fine[0, 0] == pytest.approx(abs(fine.cumulative[-1]), rel=1e-12)


def test_random_symbol_zero_path():
    z = zero_path(1.0, 64)
    rep = random_symbol_probe(lambda p: cos_xi(), [(coarsen(z, 2), z)], ((0.0, 2 * np.pi),), 1)
    assert np.all(rep.fine == 0.0) and rep.passed


def test_flow_composed_symbol_is_stable_under_refinement():
    sym = lib.halfwave(1.0, 0.3, 1.0)
    pairs = [(coarsen(path(s, 64), 2), path(s, 64)) for s in range(3)]
    rep = random_symbol_probe(lambda p: flow_composed(sym, lib.halfwave(), lib.zero(), p), pairs,
                              ((0.0, 2 * np.pi),), 1)
    assert rep.passed
