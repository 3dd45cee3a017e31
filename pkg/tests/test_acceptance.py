"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from conftest import make_quadratic, make_sine_gordon, record_criterion, z_score
from rgtransport.bridge import BridgeSimulator, mode_variances, quadratic_variance_recursion, weak_order_study
from rgtransport.cli import bounded_functions
from rgtransport.ensemble import FieldEnsemble
from rgtransport.gaussian import covariance, ou_lemma_estimates, sample_gaussian, truncated_heat_schedule
from rgtransport.generator import generator_eigs
from rgtransport.inequalities import inequality_battery
from rgtransport.lattice import MassParams, build_geometry, mode_eigenvalues, precision_opnorm
from rgtransport.mcmc import mala_sample
from rgtransport.potentials import ZeroPotential
from rgtransport.renorm import GaussianRenorm, RenormEstimator, be_profile, default_time_grid, pde_residual
from rgtransport.transport import FlowIntegrator, lipschitz_report, pushforward_ensemble

MASS = MassParams(1.0)
ONE_SITE = build_geometry(2, 1.0, 1.0)
SQUARE2 = build_geometry(2, 1.0, 0.5)
SQUARE4 = build_geometry(2, 1.0, 0.25)
SG_Z = 0.5
BRIDGE_TAU = 15.0


def gff_samples(geom, n, seed):
    return sample_gaussian(covariance(geom, MASS), seed, n, tag="probes")


# ---------------------------------------------------------------------------
# shared sine-Gordon 4x4 artefacts (criteria 5, 6, 8)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sg_model():
    return make_sine_gordon(SQUARE4, SG_Z)


@pytest.fixture(scope="module")
def sg_profile(sg_model):
    est = RenormEstimator(sg_model, SQUARE4, MASS, n_inner=256, seed=0)
    a0 = float(mode_eigenvalues(SQUARE4, MASS).min())
    return be_profile(est, default_time_grid(a0), gff_samples(SQUARE4, 100, 0))


@pytest.fixture(scope="module")
def sg_mala(sg_model):
    return mala_sample(sg_model, SQUARE4, MASS, 10_000, 0.3, 1000, seed=11, n_chains=100, thin=10)


@pytest.fixture(scope="module")
def sg_lipschitz(sg_model, sg_profile):
    est = RenormEstimator(sg_model, SQUARE4, MASS, n_inner=256, seed=0)
    integ = FlowIntegrator(est, n_steps=48)
    return lipschitz_report(integ, gff_samples(SQUARE4, 100, 1), sg_profile, seed=1)


# ---------------------------------------------------------------------------

def test_criterion_01_quadratic_oracle():
    model = make_quadratic(ONE_SITE, MASS, 1.0)
    est = GaussianRenorm(model, ONE_SITE, MASS)
    prof = be_profile(est, default_time_grid(1.0, n=256, t_min=1e-4), gff_samples(ONE_SITE, 8, 0))
    integ = FlowIntegrator(est, n_steps=128)
    rep = lipschitz_report(integ, gff_samples(ONE_SITE, 100, 1), prof)
    ens = pushforward_ensemble(integ, 10_000, seed=2)
    var, se = ens.mean_se(ens.samples[:, 0] ** 2)
    checks = {
        "lambda_inf": abs(prof.lambda_inf - math.log(2.0)) <= 1e-3,
        "lipschitz": abs(rep.empirical - math.sqrt(0.5)) <= 1e-3,
        "variance": abs(var - 0.5) <= 3 * se,
    }
    detail = (f"lambda_inf={prof.lambda_inf:.6f} (log 2={math.log(2):.6f}), lip={rep.empirical:.6f}, "
              f"var={var:.4f}+-{se:.4f}")
    assert record_criterion(1, "quadratic oracle", all(checks.values()), detail), checks


def test_criterion_02_identity_suite():
    zero = ZeroPotential(SQUARE4)
    est = RenormEstimator(zero, SQUARE4, MASS, n_inner=64, seed=0)
    integ = FlowIntegrator(est, n_steps=32)
    psi = gff_samples(SQUARE4, 200, 3)
    t_err = float(np.max(np.abs(integ.transport_evaluate(psi).output - psi)))
    prof = be_profile(est, default_time_grid(float(est.eigenvalues.min())), psi[:20])
    c = prof.lipschitz_bound
    ens = FieldEnsemble(sample_gaussian(covariance(SQUARE4, MASS), 4, 20_000, tag="gff"), SQUARE4, "gff", seed=4)
    reps = inequality_battery(ens, c, precision_opnorm(SQUARE4, MASS), SQUARE4.eps)
    fails = [f"{r.inequality}/{r.function}" for r in reps if r.violated]
    sim = BridgeSimulator(zero, SQUARE4, MASS, truncated_heat_schedule(BRIDGE_TAU), 20, seed=5)
    bvar, bse = mode_variances(sim.run(10_000).terminal)
    bridge_ok = bool(np.all(np.abs(bvar - 1.0 / est.eigenvalues) <= 3 * bse))
    checks = {
        "identity": t_err <= 1e-10,
        "flat_profile": bool(np.all(prof.lambda_dot == 0.0)) and c == 1.0,
        "inequalities": not fails,
        "bridge": bridge_ok,
    }
    detail = f"|T-Id|={t_err:.1e}, c={c}, violations={fails}, bridge within 3 SE={bridge_ok}"
    assert record_criterion(2, "identity suite", all(checks.values()), detail), checks


def test_criterion_03_ou_lemma():
    phi = gff_samples(SQUARE2, 1, 6)[0]
    rows = []
    for t in (0.1, 1.0, 5.0):
        rows += ou_lemma_estimates(SQUARE2, MASS, t, phi, bounded_functions(SQUARE2), 100_000, 7)
    worst = max(abs(r["difference"]) / r["combined_se"] for r in rows)
    ok = len(rows) == 15 and all(r["agree"] for r in rows)
    assert record_criterion(3, "OU lemma", ok, f"{len(rows)} checks, worst |diff|/se={worst:.2f}")


def test_criterion_04_pde_residual():
    cases = []
    quad = RenormEstimator(make_quadratic(ONE_SITE, MASS, 1.0), ONE_SITE, MASS, n_inner=100_000, seed=8)
    sg = RenormEstimator(make_sine_gordon(SQUARE2, 0.1), SQUARE2, MASS, n_inner=100_000, seed=8)
    for name, est, geom in (("quadratic", quad, ONE_SITE), ("sine-gordon", sg, SQUARE2)):
        phi = gff_samples(geom, 1, 9)[0]
        for t in (0.5, 1.0):
            r = pde_residual(est, t, phi, 0.01 * t)
            cases.append((name, t, r))
    ok = all(r.consistent_with_zero(3.0) and not r.inconclusive for _, _, r in cases)
    detail = ", ".join(f"{n}@t={t}: {r.residual:.2e}+-{r.se:.1e}" for n, t, r in cases)
    assert record_criterion(4, "Polchinski residual", ok, detail)


def test_criterion_05_pushforward(sg_model, sg_mala):
    est = RenormEstimator(sg_model, SQUARE4, MASS, n_inner=4096, seed=0)
    integ = FlowIntegrator(est, n_steps=48)
    ens = pushforward_ensemble(integ, 10_000, seed=12)
    worst, worst_name = 0.0, ""
    for x in range(SQUARE4.num_sites):
        a, sa = ens.mean_se(ens.samples[:, 0] * ens.samples[:, x])
        b, sb = sg_mala.mean_se(sg_mala.samples[:, 0] * sg_mala.samples[:, x])
        z = z_score(a, sa, b, sb)
        if z > worst:
            worst, worst_name = z, f"phi0*phi{x}"
    a, sa = ens.mean_se(np.cos(2.0 * ens.samples[:, 0]))
    b, sb = sg_mala.mean_se(np.cos(2.0 * sg_mala.samples[:, 0]))
    z_cos = z_score(a, sa, b, sb)
    ok = worst <= 3 and z_cos <= 3 and ens.count >= 9_900
    detail = (f"worst two-point z={worst:.2f} ({worst_name}), cos z={z_cos:.2f} "
              f"({a:.4f} vs {b:.4f}), excluded={ens.metadata['excluded']}")
    assert record_criterion(5, "pushforward vs MALA", ok, detail)


def test_criterion_06_lipschitz(sg_lipschitz):
    model = make_quadratic(ONE_SITE, MASS, 1.0)
    est = GaussianRenorm(model, ONE_SITE, MASS)
    prof = be_profile(est, default_time_grid(1.0, n=256, t_min=1e-4), gff_samples(ONE_SITE, 8, 0))
    quad = lipschitz_report(FlowIntegrator(est, n_steps=128), gff_samples(ONE_SITE, 100, 1), prof)
    sg = sg_lipschitz
    ok = (quad.empirical <= 1.01 * quad.theoretical and sg.empirical <= 1.01 * sg.theoretical
          and quad.n_probes >= 100 and sg.n_probes >= 100)
    detail = (f"quadratic {quad.empirical:.5f} vs bound {quad.theoretical:.5f} (x1.01 allowed); "
              f"sine-gordon {sg.empirical:.4f} vs bound {sg.theoretical:.4f}")
    assert record_criterion(6, "Lipschitz bound", ok, detail)


def test_criterion_07_eps_uniformity():
    sup = {}
    for eps in (0.25, 0.125):
        geom = build_geometry(2, 1.0, eps)
        probes = gff_samples(geom, 20, 0)
        a0 = float(mode_eigenvalues(geom, MASS).min())
        for z in (0.02, 0.04, 0.08):
            est = RenormEstimator(make_sine_gordon(geom, z), geom, MASS, n_inner=256, seed=0)
            sup[eps, z] = be_profile(est, default_time_grid(a0), probes).sup_abs_lambda
    ratios = [sup[0.25, z] / sup[0.125, z] for z in (0.02, 0.04, 0.08)]
    uniform = all(0.5 <= r <= 2.0 for r in ratios)
    slopes = [sup[eps, z] / z / (sup[eps, 0.02] / 0.02) for eps in (0.25, 0.125) for z in (0.04, 0.08)]
    linear = all(abs(s - 1.0) <= 0.2 for s in slopes)
    detail = f"eps ratios={np.round(ratios, 3).tolist()}, normalised slopes={np.round(slopes, 3).tolist()}"
    assert record_criterion(7, "eps-uniformity", uniform and linear, detail)


def test_criterion_08_inequality_battery(sg_mala, sg_lipschitz):
    c = sg_lipschitz.theoretical
    reps = inequality_battery(sg_mala, c, precision_opnorm(SQUARE4, MASS), SQUARE4.eps)
    counts = {v: sum(r.verdict == v for r in reps) for v in ("pass", "inconclusive", "fail")}
    fails = [f"{r.inequality}/{r.function}" for r in reps if r.violated]
    ok = not fails and len(reps) == 57
    assert record_criterion(8, "inequality battery", ok, f"c={c:.4f}, {counts}, violations={fails}")


def test_criterion_09_eigenvalues():
    hermite = generator_eigs(ZeroPotential(ONE_SITE), ONE_SITE, MASS, n=2000, k=6)
    hermite_err = float(np.max(np.abs(hermite.gamma - np.arange(6))))
    model = make_sine_gordon(ONE_SITE, 0.05)
    est = RenormEstimator(model, ONE_SITE, MASS, n_inner=4096, seed=0)
    probes = np.linspace(0.0, model.period, 64, endpoint=False)[:, None]
    prof = be_profile(est, default_time_grid(1.0), probes)
    c = prof.lipschitz_bound
    sg = generator_eigs(model, ONE_SITE, MASS, n=2000, k=6, c=c)
    ok = hermite_err <= 1e-4 and sg.all_hold
    detail = (f"Hermite error={hermite_err:.1e}, c={c:.4f}, lambda_gamma={np.round(sg.gamma, 4).tolist()}, "
              f"c^2 lambda_nu={np.round(c * c * sg.nu, 4).tolist()}")
    assert record_criterion(9, "eigenvalue comparison", ok, detail)


def test_criterion_10_bridge():
    schedule = truncated_heat_schedule(BRIDGE_TAU)
    zero = BridgeSimulator(ZeroPotential(SQUARE2), SQUARE2, MASS, schedule, 20, seed=13)
    zv, zs = mode_variances(zero.run(10_000).terminal)
    c_tau = schedule.cumulative(BRIDGE_TAU, mode_eigenvalues(SQUARE2, MASS))
    zero_ok = bool(np.all(np.abs(zv - c_tau) <= 3 * zs))
    model = make_quadratic(SQUARE2, MASS, 1.0)
    quad = BridgeSimulator(model, SQUARE2, MASS, schedule, 100, seed=14)
    qv, qs = mode_variances(quad.run(10_000).terminal)
    quad_ok = bool(np.all(np.abs(qv - quadratic_variance_recursion(model, quad)) <= 3 * qs))
    study = weak_order_study(make_quadratic(ONE_SITE, MASS, 1.0), ONE_SITE, MASS, schedule,
                             n_steps=(20, 40, 80, 160), n_ref=1280, n_paths=2000, seed=0)
    order_ok = 0.7 <= study.order <= 1.3
    detail = f"zero within 3 SE={zero_ok}, quadratic within 3 SE={quad_ok}, weak order={study.order:.3f}"
    assert record_criterion(10, "bridge validation", zero_ok and quad_ok and order_ok, detail)


def test_generator_oracle_is_independent():
    # the grid solver and a direct symmetric discretisation agree for U = x^2/2
    x = np.linspace(-10, 10, 4001)[1:-1]
    h = x[1] - x[0]
    direct = scipy.linalg.eigh_tridiagonal(2 / h**2 + x**2 / 4 - 0.5, -np.ones(x.size - 1) / h**2,
                                           select="i", select_range=(0, 3), eigvals_only=True)
    assert np.allclose(direct, np.arange(4), atol=1e-4)
