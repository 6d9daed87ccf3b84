"""Acceptance suite: each test prints one PASS/FAIL line and asserts it.

The lines are also collected into an "acceptance criteria" section at the
end of the pytest run.
"""

import math
import time

import numpy as np
from oracles import bessel_quadrature, bessel_series, integrate_out_second, torus_integral
from scipy import integrate, optimize

from toruscopula.cli import main
from toruscopula.copula import CopulaModel, make_model
from toruscopula.correlation import AR1, ExpDecay, Identity, Unstructured
from toruscopula.inference import Dataset, ModelSpec, ParamLayout, fit_mle, ifm_initialize
from toruscopula.marginals import VonMises, WrappedCauchy, normalize_angle
from toruscopula.spatial import Kriger, SpatialDataset, distance_matrix
from toruscopula.special import bessel_i, norm_cdf, norm_ppf

# fitted values and standard errors of the two reference fits (n = 72 for the
# time series, n = 25 replicates for the spatial field)
SERIES = {"rho": (0.620, 0.036), "mu": (3.074, 0.020), "log_kappa": (0.508, 0.081)}
FIELD = {"rho": (0.559, 0.110), "mu": (0.430, 0.019), "log_kappa": (1.313, 0.170)}
SEEDS = range(20)


def series_model(k=5):
    return make_model(VonMises(SERIES["mu"][0], math.exp(SERIES["log_kappa"][0])), AR1(SERIES["rho"][0], k))


def fig1_pair(rho):
    return CopulaModel((WrappedCauchy(2.0, 0.3), VonMises(2.0, 2.0)),
                       Unstructured(np.array([[1.0, rho], [rho, 1.0]])))


def deviation(name, est, truth):
    return abs(normalize_angle(est - truth)) if name == "mu" else abs(est - truth)


def test_c01_time_series_recovery(verdict):
    scale = math.sqrt(72 / 500)
    tol = {k: 3 * se * scale for k, (_, se) in SERIES.items()}
    passes, slowest, misses = 0, 0.0, []
    for seed in SEEDS:
        data = Dataset(series_model().simulate(500, seed=seed), shared_margin=True)
        start = time.perf_counter()
        fit = fit_mle(data, ModelSpec("ar1", "vm"))
        slowest = max(slowest, time.perf_counter() - start)
        bad = [k for k in tol if deviation(k, fit.estimates[k], SERIES[k][0]) > tol[k]]
        passes += not bad
        misses += bad
    counts = {k: misses.count(k) for k in tol if k in misses}
    verdict("C01 AR1 recovery n=500 K=5", passes >= 18 and slowest < 30,
            f"{passes}/20 seeds within tolerance (need 18), misses by parameter {counts}, "
            f"slowest fit {slowest:.1f}s")


def rescaled_field(seed):
    rng = np.random.default_rng(1000 + seed)
    pts = rng.uniform(size=(40, 2))
    d = distance_matrix(pts)
    off = d[np.triu_indices(40, 1)]
    rho = FIELD["rho"][0]
    s = optimize.brentq(lambda s: np.mean(np.exp(-rho * s * off)) - 0.3, 1e-6, 1e3, xtol=1e-14)
    return pts * s, d * s


def test_c02_spatial_recovery(verdict):
    passes, slowest, misses = 0, 0.0, []
    for seed in SEEDS:
        _, dist = rescaled_field(seed)
        truth = make_model(VonMises(FIELD["mu"][0], math.exp(FIELD["log_kappa"][0])),
                           ExpDecay(FIELD["rho"][0], dist))
        data = Dataset(truth.simulate(25, seed=seed), shared_margin=True)
        start = time.perf_counter()
        fit = fit_mle(data, ModelSpec("expdecay", "vm", distances=dist))
        slowest = max(slowest, time.perf_counter() - start)
        se = fit.standard_errors
        bad = [k for k in FIELD if se is None or deviation(k, fit.estimates[k], FIELD[k][0]) > 3 * se[k]]
        passes += not bad
        misses += bad
    counts = {k: misses.count(k) for k in FIELD if k in misses}
    verdict("C02 spatial recovery K=40 n=25", passes >= 18 and slowest < 60,
            f"{passes}/20 seeds within 3 SE (need 18), misses by parameter {counts}, "
            f"slowest fit {slowest:.1f}s")


def test_c03_density_normalization(verdict):
    two = torus_integral(fig1_pair(0.8), 512)
    omega = np.array([[1.0, 0.5, -0.3], [0.5, 1.0, 0.2], [-0.3, 0.2, 1.0]])
    three = torus_integral(CopulaModel((VonMises(0.5, 1.5), WrappedCauchy(-1.0, 0.4), VonMises(2.5, 3.0)),
                                       Unstructured(omega)), 128)
    verdict("C03 density normalization", abs(two - 1) < 1e-6 and abs(three - 1) < 1e-4,
            f"K=2 |I-1|={abs(two - 1):.2e} (tol 1e-6), K=3 |I-1|={abs(three - 1):.2e} (tol 1e-4)")


def test_c04_sklar_marginal_preservation(verdict):
    worst = 0.0
    for rho in (0.8, -0.8):
        m = fig1_pair(rho)
        y = np.linspace(-np.pi, np.pi, 256, endpoint=False)
        for keep in (0, 1):
            swapped = m if keep == 0 else m.submodel([1, 0])
            err = np.abs(integrate_out_second(swapped, y, 4096) - swapped.marginals[0].pdf(y))
            worst = max(worst, float(err.max()))
    verdict("C04 Sklar marginal preservation", worst < 1e-6, f"max abs error {worst:.2e} (tol 1e-6)")


def random_model(k, rng):
    a = rng.standard_normal((k, k + 2))
    c = a @ a.T
    d = np.sqrt(np.diag(c))
    margins = [VonMises(rng.uniform(-np.pi, np.pi), rng.uniform(0.2, 8.0)) if j % 2 == 0
               else WrappedCauchy(rng.uniform(-np.pi, np.pi), rng.uniform(0.05, 0.8)) for j in range(k)]
    return CopulaModel(tuple(margins), Unstructured(c / np.outer(d, d)))


def test_c05_conditional_identity(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in (2, 5):
        m = random_model(k, rng)
        y = rng.uniform(-np.pi, np.pi, (100, k))
        for target in range(k):
            rest = [j for j in range(k) if j != target]
            lhs = m.conditional_log_density(target, y[:, target], y[:, rest]) + \
                m.submodel(rest).joint_log_density(y[:, rest])
            worst = max(worst, float(np.max(np.abs(lhs - m.joint_log_density(y)))))
    verdict("C05 conditional x marginal = joint", worst < 1e-10, f"max log-space error {worst:.2e} (tol 1e-10)")


def test_c06_prediction_arc_coverage(verdict):
    y = series_model().simulate(25_000, seed=6)
    prev, nxt = y[:, :-1].ravel(), y[:, 1:].ravel()
    pair = series_model().submodel([0, 1])
    arc = pair.prediction_arc(1, prev[:, None], 0.95)
    cover = float(np.mean(arc.contains(nxt)))
    verdict("C06 95% arc coverage", 0.94 <= cover <= 0.96,
            f"coverage {cover:.4f} over {nxt.size} consecutive pairs (need [0.94, 0.96])")


def test_c07_kriging_exactness(verdict):
    rng = np.random.default_rng(7)
    pts = rng.uniform(size=(30, 2))
    margin = VonMises(FIELD["mu"][0], math.exp(FIELD["log_kappa"][0]))
    model = make_model(margin, ExpDecay(3.0, distance_matrix(pts)))
    data = SpatialDataset(pts, model.simulate(1, seed=7)[0])
    res = Kriger(model, data).predict(pts)
    worst = max(abs(normalize_angle(r.predicted_angle - y)) for r, y in zip(res, data.angles))
    one = SpatialDataset([(0.0, 0.0)], [0.4])
    lone = Kriger(make_model(margin, ExpDecay(FIELD["rho"][0], np.zeros((1, 1)))), one)
    dist = np.linspace(0.0, 10.0, 500)
    lengths = np.array([float(r.arc.length) for r in lone.predict(np.column_stack([dist, 0 * dist]))])
    increasing = bool(np.all(np.diff(lengths) > 0))
    verdict("C07 kriging exactness", worst < 1e-8 and increasing,
            f"max site error {worst:.2e} rad (tol 1e-8), one-site arc strictly increasing: {increasing}")


def test_c08_independence_reduction(verdict):
    rng = np.random.default_rng(8)
    margins = (VonMises(0.3, 2.0), WrappedCauchy(-1.0, 0.5), VonMises(2.8, 0.7))
    m = CopulaModel(margins, Identity(3))
    y = rng.uniform(-np.pi, np.pi, (1000, 3))
    prod = np.prod([mk.pdf(y[:, j]) for j, mk in enumerate(margins)], axis=0)
    rel = float(np.max(np.abs(m.pdf(y) / prod - 1)))
    data = Dataset(make_model(VonMises(1.0, 2.0), AR1(0.0, 5)).simulate(1000, seed=8), shared_margin=True)
    spec = ModelSpec("ar1", "vm")
    rho0 = ParamLayout(spec, 5, True).report_dict(ifm_initialize(data, spec))["rho"]
    verdict("C08 independence reduction", rel < 1e-13 and abs(rho0) < 0.05,
            f"max relative density error {rel:.1e}, IFM rho0 {rho0:+.4f} (need |rho0| < 0.05)")


def vm_cdf_oracle(y, mu, kappa):
    i0 = bessel_series(0, kappa, 400)
    dens = lambda t: math.exp(kappa * math.cos(t - mu)) / (2 * math.pi * i0)
    return integrate.quad(dens, mu - math.pi, y, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def test_c09_special_functions(verdict):
    dens = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    zs = np.linspace(-8.0, 8.0, 321)
    phi_ref = [integrate.quad(dens, -np.inf, z, epsabs=1e-15, epsrel=1e-13)[0] if z <= 0
               else 1 - integrate.quad(dens, z, np.inf, epsabs=1e-15, epsrel=1e-13)[0] for z in zs]
    e_phi = float(np.max(np.abs(norm_cdf(zs) - phi_ref)))
    ps = np.concatenate([[1e-12, 1e-8, 1e-5], np.linspace(0.001, 0.999, 60), [1 - 1e-8]])
    e_ppf = 0.0
    for p in ps:
        if p < 0.5:
            f = lambda z: integrate.quad(dens, -np.inf, z, epsabs=1e-16, epsrel=1e-13)[0] - p
        else:
            f = lambda z: (1 - p) - integrate.quad(dens, z, np.inf, epsabs=1e-16, epsrel=1e-13)[0]
        e_ppf = max(e_ppf, abs(float(norm_ppf(p)) - optimize.brentq(f, -10, 10, xtol=1e-14)))
    e_bes = 0.0
    for order in (0, 1):
        for x in np.linspace(0.0, 30.0, 301):
            ref = bessel_series(order, x)
            e_bes = max(e_bes, abs(float(bessel_i(order, x)) - ref) / max(ref, 1e-300))
        for x in np.linspace(30.0, 700.0, 135):
            ref = bessel_quadrature(order, x)
            e_bes = max(e_bes, abs(float(bessel_i(order, x, scaled=True)) - ref) / ref)
    e_cdf = 0.0
    for kappa in (0.01, 0.3, 1.0, 2.0, 8.0, 40.0, 150.0):
        m = VonMises(1.1, kappa)
        for y in 1.1 - np.pi + np.linspace(0.0, 2 * np.pi, 41)[1:-1]:
            e_cdf = max(e_cdf, abs(float(m.cdf(y)) - vm_cdf_oracle(y, 1.1, kappa)))
    ok = e_phi < 1e-9 and e_ppf < 1e-9 and e_bes < 1e-9 and e_cdf < 1e-8
    verdict("C09 special functions", ok,
            f"Phi {e_phi:.1e}, Phi^-1 {e_ppf:.1e}, I0/I1 rel {e_bes:.1e} (tol 1e-9); vM cdf {e_cdf:.1e} (tol 1e-8)")


def grid_correlation(path):
    d = np.loadtxt(path, delimiter=",", skiprows=1)
    z1 = norm_ppf(np.clip(WrappedCauchy(2.0, 0.3).cdf(d[:, 0]), 1e-14, 1 - 1e-14))
    z2 = norm_ppf(np.clip(VonMises(2.0, 2.0).cdf(d[:, 1]), 1e-14, 1 - 1e-14))
    w = d[:, 2] / d[:, 2].sum()
    m1, m2 = w @ z1, w @ z2
    cov = w @ ((z1 - m1) * (z2 - m2))
    return cov / math.sqrt((w @ (z1 - m1) ** 2) * (w @ (z2 - m2) ** 2))


def test_c10_density_ridges(verdict, tmp_path):
    corr = {}
    for rho in (0.8, -0.8):
        out = tmp_path / f"grid{rho}.csv"
        code = main(["density-grid", "--output", str(out), "--family", "wc,vm", "--mu", "2,2",
                     "--kappa", "0.3,2", "--rho", str(rho), "--grid", "200"])
        assert code == 0
        corr[rho] = grid_correlation(out)
    verdict("C10 density ridge direction", corr[0.8] > 0 > corr[-0.8],
            f"z-scale grid correlation {corr[0.8]:+.3f} at rho=+0.8, {corr[-0.8]:+.3f} at rho=-0.8")
