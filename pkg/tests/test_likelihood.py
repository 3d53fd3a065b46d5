import math

import numpy as np
import pytest

from mscr.errors import DataError
from mscr.geometry import SpatialMesh, SurveyWindow, TrapArray, build_mesh
from mscr.hazard import MSCR, SCR, ModelParams
from mscr.likelihood import (
    CaptureHistory,
    Dataset,
    LikelihoodEvaluator,
    detect_prob,
    detect_prob_given_ac,
    history_density_given_ac,
    log_history_density_given_ac,
    marginal_history_density,
    neg_log_likelihood,
)

MP = ModelParams(h0=1.65, sigma2=0.22, beta=0.37, kind=MSCR)
SP = ModelParams(h0=1.65, sigma2=0.22, kind=SCR)


def traps_at(*points):
    return TrapArray(ids=tuple(f"t{i}" for i in range(len(points))),
                     xy=np.array(points, dtype=float))


def single_point_mesh(x=0.0, y=0.0, cell_area=1.0):
    return SpatialMesh(points=np.array([[x, y]]), cell_area=cell_area,
                       buffer=0.0, spacing=math.sqrt(cell_area))


# ---------------------------------------------------------------------------
# independent straight-line oracle (pure python, no package math reused)
# ---------------------------------------------------------------------------

def oracle_log_density(times, ks, s, traps_xy, h0, sigma2, beta, kind, T, B):
    """Term-by-term history density: first capture with the half-normal
    hazard from 0, then survival * hazard per recapture, then terminal
    survival; memory survival integrals by the midpoint rule with
    ceil(gap * B / T) equal sub-intervals."""

    def hn(z, c):
        d2 = (z[0] - c[0]) ** 2 + (z[1] - c[1]) ** 2
        return h0 * math.exp(-d2 / (2.0 * sigma2))

    def hn_dot(c):
        return sum(hn(z, c) for z in traps_xy)

    def mem_hazard(z, t, zstar, tstar):
        a = math.exp(-beta * (t - tstar))
        v = max(sigma2 * (1.0 - a * a), sigma2 * 1e-12)
        mux = a * zstar[0] + (1 - a) * s[0]
        muy = a * zstar[1] + (1 - a) * s[1]
        d2 = (z[0] - mux) ** 2 + (z[1] - muy) ** 2
        return h0 * math.exp(-d2 / (2.0 * v))

    def mem_integral(t0, t1, zstar, tstar):
        nb = max(1, math.ceil((t1 - t0) * B / T - 1e-9))
        w = (t1 - t0) / nb
        total = 0.0
        for b in range(nb):
            eta = t0 + (b + 0.5) * w
            total += w * sum(mem_hazard(z, eta, zstar, tstar) for z in traps_xy)
        return total

    lp = -times[0] * hn_dot(s) + math.log(hn(traps_xy[ks[0]], s))
    if kind == SCR:
        for j in range(1, len(times)):
            lp += -(times[j] - times[j - 1]) * hn_dot(s)
            lp += math.log(hn(traps_xy[ks[j]], s))
        lp += -(T - times[-1]) * hn_dot(s)
        return lp
    for j in range(1, len(times)):
        zstar, tstar = traps_xy[ks[j - 1]], times[j - 1]
        lp -= mem_integral(times[j - 1], times[j], zstar, tstar)
        lp += math.log(mem_hazard(traps_xy[ks[j]], times[j], zstar, tstar))
    lp -= mem_integral(times[-1], T, traps_xy[ks[-1]], times[-1])
    return lp


def random_case(rng, n_traps=(1, 8), n_caps=(1, 6), T=12.0):
    K = int(rng.integers(*n_traps))
    traps = traps_at(*[tuple(rng.uniform(0, 6, 2)) for _ in range(K)])
    J = int(rng.integers(*n_caps))
    times = np.sort(rng.uniform(0.05, T - 0.05, J))
    while np.any(np.diff(times) <= 0.01):
        times = np.sort(rng.uniform(0.05, T - 0.05, J))
    ks = rng.integers(0, K, J)
    hist = CaptureHistory(individual_id="w", times=times, trap_indices=ks)
    return traps, hist


class TestHistoryDensityGivenAc:
    def test_single_detection_scr_closed_form(self):
        # one trap at s, h0 = 1.65, T = 1, detection at 0.5:
        # f = e^{-0.5 h0} * h0 * e^{-0.5 h0} = h0 e^{-h0} = 0.31688234922...
        traps = traps_at((0.0, 0.0))
        hist = CaptureHistory("a", np.array([0.5]), np.array([0]))
        window = SurveyWindow(t_end=1.0)
        f = history_density_given_ac(hist, (0.0, 0.0), SP, traps, window, B=10)
        assert f == pytest.approx(1.65 * math.exp(-1.65), rel=1e-14)

    def test_memory_limit_matches_scr(self):
        # with beta so large every gap is fully decayed, the memory density
        # must equal the memoryless one
        rng = np.random.default_rng(3)
        window = SurveyWindow(t_end=12.0)
        big_beta = ModelParams(h0=1.2, sigma2=0.3, beta=1e4, kind=MSCR)
        scr = ModelParams(h0=1.2, sigma2=0.3, kind=SCR)
        for _ in range(10):
            traps, hist = random_case(rng)
            s = rng.uniform(0, 6, 2)
            lp_mem = log_history_density_given_ac(hist, s, big_beta, traps, window, 50)
            lp_scr = log_history_density_given_ac(hist, s, scr, traps, window, 50)
            assert lp_mem == pytest.approx(lp_scr, rel=1e-8, abs=1e-8)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(17)
        window = SurveyWindow(t_end=12.0)
        for _ in range(15):
            traps, hist = random_case(rng)
            s = rng.uniform(-1, 7, 2)
            for params in (MP, SP):
                got = log_history_density_given_ac(hist, s, params, traps, window, 40)
                want = oracle_log_density(hist.times, hist.trap_indices, s, traps.xy,
                                          params.h0, params.sigma2, params.beta,
                                          params.kind, 12.0, 40)
                assert got == pytest.approx(want, rel=1e-11, abs=1e-11)

    def test_density_bounded_by_peak_rate_power(self):
        # every hazard factor <= h0 and every survival factor <= 1
        rng = np.random.default_rng(23)
        window = SurveyWindow(t_end=12.0)
        for _ in range(20):
            traps, hist = random_case(rng)
            s = rng.uniform(0, 6, 2)
            lp = log_history_density_given_ac(hist, s, MP, traps, window, 30)
            assert lp <= hist.n_detections * math.log(MP.h0) + 1e-12


class TestEvaluatorAgainstScalarPath:
    def test_vector_log_densities_match_scalar(self):
        rng = np.random.default_rng(29)
        window = SurveyWindow(t_end=12.0)
        traps, hist = random_case(rng, n_traps=(3, 8), n_caps=(3, 6))
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        mesh = build_mesh(traps, 1.0, 1.1)
        for params in (MP, SP):
            ev = LikelihoodEvaluator(ds, mesh, B=37)
            vec = ev.log_density_given_centers(params, 0)
            for m in range(0, mesh.size, 7):
                scal = log_history_density_given_ac(hist, mesh.points[m], params,
                                                    traps, window, B=37)
                assert vec[m] == pytest.approx(scal, rel=1e-10, abs=1e-10)

    def test_parallel_serial_agreement(self):
        import numba
        rng = np.random.default_rng(31)
        window = SurveyWindow(t_end=12.0)
        traps, hist = random_case(rng, n_traps=(4, 8), n_caps=(4, 6))
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        mesh = build_mesh(traps, 2.0, 0.4)
        ev = LikelihoodEvaluator(ds, mesh, B=50)
        avail = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(1)
        serial = ev.nll(MP)
        numba.set_num_threads(avail)
        parallel = ev.nll(MP)
        assert abs(parallel - serial) <= 1e-12 * abs(serial)


class TestMarginalDensity:
    def test_single_point_mesh_reduces_to_conditional(self):
        traps = traps_at((0.0, 0.0))
        window = SurveyWindow(t_end=1.0)
        hist = CaptureHistory("a", np.array([0.5]), np.array([0]))
        mesh = single_point_mesh(0.0, 0.0, cell_area=2.5)
        f = marginal_history_density(hist, SP, traps, mesh, window, B=10)
        f_cond = history_density_given_ac(hist, (0.0, 0.0), SP, traps, window, B=10)
        assert f == pytest.approx(f_cond, rel=1e-14)

    def test_mesh_refinement_stability(self):
        # smooth configuration: low peak rate and a short window keep the
        # survival factor gentle, and the integrand width (~sqrt(sigma2))
        # spans several cells, so halving the spacing barely moves the
        # result
        traps = traps_at((2.0, 2.0), (3.5, 2.0))
        window = SurveyWindow(t_end=2.0)
        params = ModelParams(h0=0.3, sigma2=0.4, beta=0.37, kind=MSCR)
        hist = CaptureHistory("a", np.array([0.5, 1.2]), np.array([0, 1]))
        coarse = build_mesh(traps, 2.0, 0.25)
        fine = build_mesh(traps, 2.0, 0.125)
        f1 = marginal_history_density(hist, params, traps, coarse, window, B=60)
        f2 = marginal_history_density(hist, params, traps, fine, window, B=60)
        # the spatial integral is the quadrature-sensitive part; the 1/A
        # prefactor moves with the lattice ring but cancels against p(theta)
        # inside the likelihood
        int1 = f1 * coarse.total_area
        int2 = f2 * fine.total_area
        assert abs(int1 - int2) / int2 < 0.005
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        nll1 = neg_log_likelihood(ds, params, coarse, B=60)
        nll2 = neg_log_likelihood(ds, params, fine, B=60)
        assert abs(nll1 - nll2) / abs(nll2) < 0.005

    def test_reflection_symmetry(self):
        # two traps symmetric about x = 0; mirrored history, mirrored mesh
        traps = traps_at((-1.0, 0.0), (1.0, 0.0))
        window = SurveyWindow(t_end=6.0)
        mesh = build_mesh(traps, 2.0, 0.5)
        hist = CaptureHistory("a", np.array([1.0, 2.5]), np.array([0, 1]))
        mirrored = CaptureHistory("a", np.array([1.0, 2.5]), np.array([1, 0]))
        f = marginal_history_density(hist, MP, traps, mesh, window, B=40)
        g = marginal_history_density(mirrored, MP, traps, mesh, window, B=40)
        assert f == pytest.approx(g, rel=1e-9)


class TestDetectProb:
    def test_single_trap_closed_form(self):
        traps = traps_at((0.0, 0.0))
        p = detect_prob_given_ac((0.0, 0.0), SP, traps, SurveyWindow(t_end=1.0))
        assert p == pytest.approx(1.0 - math.exp(-1.65), rel=1e-14)

    def test_short_window_goes_to_zero(self):
        traps = traps_at((0.0, 0.0))
        p = detect_prob_given_ac((0.0, 0.0), SP, traps, SurveyWindow(t_end=1e-12))
        assert p == pytest.approx(1.65e-12, rel=1e-6)

    def test_far_center_goes_to_zero(self):
        traps = traps_at((0.0, 0.0))
        p = detect_prob_given_ac((500.0, 0.0), SP, traps, SurveyWindow(t_end=1.0))
        assert p == 0.0

    def test_single_point_mesh(self):
        traps = traps_at((0.0, 0.0))
        window = SurveyWindow(t_end=1.0)
        mesh = single_point_mesh(0.3, 0.1)
        assert detect_prob(SP, traps, mesh, window) \
            == pytest.approx(detect_prob_given_ac((0.3, 0.1), SP, traps, window))

    def test_monotone_in_peak_rate_and_window(self):
        traps = traps_at((1.0, 1.0), (2.0, 2.0))
        mesh = build_mesh(traps, 1.0, 0.5)
        p0 = detect_prob(SP, traps, mesh, SurveyWindow(t_end=1.0))
        p_rate = detect_prob(SP.with_values(h0=2.0), traps, mesh, SurveyWindow(t_end=1.0))
        p_time = detect_prob(SP, traps, mesh, SurveyWindow(t_end=2.0))
        assert p_rate > p0 and p_time > p0

    def test_memory_model_uses_limiting_hazard_only(self):
        traps = traps_at((1.0, 1.0))
        mesh = build_mesh(traps, 1.0, 0.5)
        window = SurveyWindow(t_end=3.0)
        assert detect_prob(MP, traps, mesh, window) \
            == detect_prob(SP, traps, mesh, window)


class TestNegLogLikelihood:
    def test_single_individual_single_point_mesh(self):
        # f = h0 e^{-h0}, p = 1 - e^{-h0}; nll = -log f + log p
        traps = traps_at((0.0, 0.0))
        window = SurveyWindow(t_end=1.0)
        hist = CaptureHistory("a", np.array([0.5]), np.array([0]))
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        mesh = single_point_mesh(0.0, 0.0)
        nll = neg_log_likelihood(ds, SP, mesh, B=10)
        f = 1.65 * math.exp(-1.65)
        p = 1.0 - math.exp(-1.65)
        assert nll == pytest.approx(-math.log(f / p), rel=1e-13)
        assert nll == pytest.approx(0.935969721623749, rel=1e-12)

    def test_duplicated_individual_doubles_contribution(self):
        traps = traps_at((0.0, 0.0), (1.2, 0.0))
        window = SurveyWindow(t_end=6.0)
        hist = CaptureHistory("a", np.array([1.0, 2.0]), np.array([0, 1]))
        twin = CaptureHistory("b", np.array([1.0, 2.0]), np.array([0, 1]))
        mesh = build_mesh(traps, 1.5, 0.5)
        one = Dataset(histories=(hist,), traps=traps, window=window)
        two = Dataset(histories=(hist, twin), traps=traps, window=window)
        assert neg_log_likelihood(two, MP, mesh, 40) \
            == pytest.approx(2.0 * neg_log_likelihood(one, MP, mesh, 40), rel=1e-12)

    def test_memory_limit_equals_scr(self):
        rng = np.random.default_rng(41)
        window = SurveyWindow(t_end=12.0)
        traps, hist = random_case(rng, n_traps=(3, 6), n_caps=(2, 5))
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        mesh = build_mesh(traps, 2.0, 0.8)
        pinned = ModelParams(h0=1.65, sigma2=0.22, beta=1e4, kind=MSCR)
        nll_mem = neg_log_likelihood(ds, pinned, mesh, 50)
        nll_scr = neg_log_likelihood(ds, SP, mesh, 50)
        assert abs(nll_mem - nll_scr) / abs(nll_scr) < 1e-6

    def test_hopeless_parameters_stay_optimizer_safe(self):
        # two immediate detections at distant traps with a tiny scale: the
        # marginal density underflows to zero as a double, but log-space
        # evaluation keeps the objective finite (and huge) so an optimizer
        # can still back away from it
        traps = traps_at((0.0, 0.0), (4.0, 0.0))
        window = SurveyWindow(t_end=1.0)
        hist = CaptureHistory("a", np.array([0.4, 0.401]), np.array([0, 1]))
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        mesh = build_mesh(traps, 1.0, 0.5)
        bad = ModelParams(h0=1.0, sigma2=1e-4, beta=1.0, kind=MSCR)
        nll = neg_log_likelihood(ds, bad, mesh, 20)
        assert math.isfinite(nll) and nll > 1e6
        assert marginal_history_density(hist, bad, traps, mesh, window, 20) == 0.0

    def test_unrepresentable_density_reports_infinite_objective(self):
        # with every quadrature point hopelessly far from the traps the
        # detection probability underflows to exact zero; the objective
        # reports +inf rather than raising
        traps = traps_at((0.0, 0.0), (4.0, 0.0))
        window = SurveyWindow(t_end=1.0)
        hist = CaptureHistory("a", np.array([0.4, 0.6]), np.array([0, 1]))
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        far = SpatialMesh(points=np.array([[500.0, 500.0], [501.0, 500.0]]),
                          cell_area=1.0, buffer=0.0, spacing=1.0)
        assert neg_log_likelihood(ds, SP, far, 20) == math.inf

    def test_translation_equivariance(self):
        rng = np.random.default_rng(47)
        traps, hist = random_case(rng, n_traps=(3, 6), n_caps=(2, 5))
        window = SurveyWindow(t_end=12.0)
        mesh = build_mesh(traps, 1.5, 0.7)
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        nll = neg_log_likelihood(ds, MP, mesh, 30)
        shift = np.array([13.25, -7.5])
        traps2 = TrapArray(ids=traps.ids, xy=traps.xy + shift)
        mesh2 = SpatialMesh(points=mesh.points + shift, cell_area=mesh.cell_area,
                            buffer=mesh.buffer, spacing=mesh.spacing, shape=mesh.shape)
        ds2 = Dataset(histories=(hist,), traps=traps2, window=window)
        nll2 = neg_log_likelihood(ds2, MP, mesh2, 30)
        assert abs(nll2 - nll) <= 1e-10 * max(1.0, abs(nll))

    def test_individual_relabeling_invariance(self):
        traps = traps_at((0.0, 0.0), (1.2, 0.0), (0.5, 1.0))
        window = SurveyWindow(t_end=6.0)
        mesh = build_mesh(traps, 1.5, 0.6)
        h1 = CaptureHistory("a", np.array([1.0, 2.0]), np.array([0, 1]))
        h2 = CaptureHistory("b", np.array([0.5, 4.0]), np.array([2, 2]))
        h3 = CaptureHistory("c", np.array([3.0]), np.array([1]))
        fwd = Dataset(histories=(h1, h2, h3), traps=traps, window=window)
        rev = Dataset(histories=(h3, h1, h2), traps=traps, window=window)
        assert neg_log_likelihood(fwd, MP, mesh, 30) \
            == pytest.approx(neg_log_likelihood(rev, MP, mesh, 30), rel=1e-12)

    def test_mesh_relabeling_invariance(self):
        rng = np.random.default_rng(53)
        traps, hist = random_case(rng, n_traps=(2, 5), n_caps=(2, 4))
        window = SurveyWindow(t_end=12.0)
        mesh = build_mesh(traps, 1.0, 0.9)
        perm = rng.permutation(mesh.size)
        shuffled = SpatialMesh(points=mesh.points[perm], cell_area=mesh.cell_area,
                               buffer=mesh.buffer, spacing=mesh.spacing)
        ds = Dataset(histories=(hist,), traps=traps, window=window)
        a = neg_log_likelihood(ds, MP, mesh, 25)
        b = neg_log_likelihood(ds, MP, shuffled, 25)
        assert a == pytest.approx(b, rel=1e-12)


class TestDatasetValidation:
    def test_times_must_be_inside_window(self):
        traps = traps_at((0.0, 0.0))
        window = SurveyWindow(t_end=1.0)
        for bad_times in ([0.0], [1.0], [1.5], [-0.2]):
            hist = CaptureHistory("a", np.array(bad_times), np.array([0]))
            with pytest.raises(DataError):
                Dataset(histories=(hist,), traps=traps, window=window)

    def test_times_strictly_increasing(self):
        traps = traps_at((0.0, 0.0))
        hist = CaptureHistory("a", np.array([0.5, 0.5]), np.array([0, 0]))
        with pytest.raises(DataError):
            Dataset(histories=(hist,), traps=traps, window=SurveyWindow(t_end=1.0))

    def test_trap_index_range(self):
        traps = traps_at((0.0, 0.0))
        hist = CaptureHistory("a", np.array([0.5]), np.array([3]))
        with pytest.raises(DataError):
            Dataset(histories=(hist,), traps=traps, window=SurveyWindow(t_end=1.0))

    def test_unique_ids(self):
        traps = traps_at((0.0, 0.0))
        h1 = CaptureHistory("a", np.array([0.3]), np.array([0]))
        h2 = CaptureHistory("a", np.array([0.6]), np.array([0]))
        with pytest.raises(DataError):
            Dataset(histories=(h1, h2), traps=traps, window=SurveyWindow(t_end=1.0))

    def test_empty_history_rejected(self):
        with pytest.raises(DataError):
            CaptureHistory("a", np.array([]), np.array([]))
