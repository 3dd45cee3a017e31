"""Command-line entry points.

Every command reads a JSON config, writes its artifacts into ``--out`` and a
``manifest.json`` naming the config hash.  Exit codes: 0 pass, 1 error or
failed check, 2 inconclusive statistical verdict.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import scipy.integrate
from threadpoolctl import threadpool_limits

from . import __version__
from .bridge import (
    BridgeSimulator,
    mode_variances,
    quadratic_variance_recursion,
    weak_order_study,
)
from .config import RunConfig, config_from_dict, load_config
from .errors import RGTransportError
from .gaussian import (
    HEAT_KERNEL,
    covariance,
    linear_schedule,
    ou_lemma_estimates,
    sample_gaussian,
    truncated_heat_schedule,
)
from .inequalities import (
    TestFunction,
    inequality_battery,
    test_battery,
)
from .io import write_csv, write_ensemble, write_json
from .lattice import mode_eigenvalues, precision_opnorm
from .mcmc import mala_sample
from .potentials import QuadraticModel
from .renorm import (
    RenormEstimator,
    be_profile,
    default_time_grid,
    make_renormalizer,
    pde_residual,
)
from .transport import FlowIntegrator, lipschitz_report, pushforward_ensemble

log = logging.getLogger("rgtransport")

PASS, ERROR, INCONCLUSIVE = 0, 1, 2
# time step of the centred difference in the PDE residual, relative to t
PDE_STEP = 0.01


@dataclasses.dataclass
class Context:
    cfg: RunConfig
    out: Path
    config_hash: str
    artifacts: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.geom = self.cfg.build_geometry()
        self.mass = self.cfg.build_mass()
        self.model = self.cfg.build_model(self.geom)

    def report(self, name: str, body: dict) -> Path:
        body = dict(body)
        body["config_hash"] = self.config_hash
        path = write_json(self.out / name, body)
        self.artifacts[name] = str(path.name)
        return path

    def table(self, name: str, header, rows) -> Path:
        path = write_csv(self.out / name, header, rows)
        self.artifacts[name] = str(path.name)
        return path

    def ensemble(self, name: str, ens) -> Path:
        model = {"name": self.model.name, **dataclasses.asdict(self.cfg.model)}
        ens.metadata = {**ens.metadata, "config_hash": self.config_hash}
        path = write_ensemble(self.out / name, ens, model=model)
        self.artifacts[name] = str(path.name)
        self.artifacts[name + ".json"] = str(path.name) + ".json"
        return path

    # -- shared builders --------------------------------------------------
    def renorm(self, schedule=HEAT_KERNEL):
        n = self.cfg.numerics
        return make_renormalizer(self.model, self.geom, self.mass, schedule, n_inner=n.n_inner, seed=self.cfg.seed)

    def probes(self, count=None):
        count = self.cfg.numerics.n_probes if count is None else count
        return sample_gaussian(covariance(self.geom, self.mass), self.cfg.seed, count, tag="probes")

    def profile(self, renorm):
        n = self.cfg.numerics
        a0 = float(mode_eigenvalues(self.geom, self.mass).min())
        grid = default_time_grid(a0, n=n.t_points, t_min=n.t_min, t_max=n.t_max)
        return be_profile(renorm, grid, self.probes(), adversarial=n.adversarial)

    def integrator(self, renorm):
        n = self.cfg.numerics
        return FlowIntegrator(renorm, tau_max=n.tau, n_steps=n.ode_steps, tol=n.tol, step_tol=n.step_tol)

    def bridge_schedule(self):
        n = self.cfg.numerics
        if n.schedule == "linear":
            return linear_schedule(n.bridge_tau)
        return truncated_heat_schedule(n.bridge_tau)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_profile(ctx: Context) -> int:
    prof = ctx.profile(ctx.renorm())
    ctx.report("profile.json", prof.to_dict())
    ctx.table("profile.csv", ["t", "lambda_dot", "lambda_t"],
              zip(prof.t.tolist(), prof.lambda_dot.tolist(), prof.lambda_t.tolist()))
    return PASS


def cmd_transport(ctx: Context) -> int:
    integ = ctx.integrator(ctx.renorm())
    ens = pushforward_ensemble(integ, ctx.cfg.numerics.n_samples, ctx.cfg.seed)
    ctx.ensemble("transport.f64", ens)
    return PASS


def cmd_lipschitz(ctx: Context) -> int:
    renorm = ctx.renorm()
    prof = ctx.profile(renorm)
    integ = ctx.integrator(renorm)
    rep = lipschitz_report(integ, ctx.probes(), prof, seed=ctx.cfg.seed)
    body = rep.to_dict()
    body["within_bound"] = rep.empirical <= rep.theoretical * 1.01
    body["lambda_inf"] = prof.lambda_inf
    ctx.report("lipschitz.json", body)
    return PASS if body["within_bound"] else ERROR


def cmd_verify_pde(ctx: Context) -> int:
    renorm = ctx.renorm()
    phi = ctx.probes(1)[0]
    rows, status = [], PASS
    for t in (0.1, 0.5, 1.0):
        r = pde_residual(renorm, t, phi, h_t=PDE_STEP * t)
        ok = r.consistent_with_zero(3.0, budget=1e-6 * max(r.scale, 1.0))
        rows.append({**dataclasses.asdict(r), "t": t, "h_t": PDE_STEP * t, "consistent": ok})
        if r.inconclusive:
            status = max(status, INCONCLUSIVE) if status != ERROR else ERROR
        elif not ok:
            status = ERROR
    ctx.report("pde_residual.json", {"residuals": rows})
    return status


def bounded_functions(geom) -> list:
    battery = [f for f in test_battery(geom) if f.bounded]
    n = geom.num_sites

    def bump(x):
        return np.exp(-np.sum(x * x, axis=-1) / (2.0 * n))

    battery.append(TestFunction("gaussian-bump", "bump", bump, lambda x: -x / n * bump(x)[:, None], True))
    return battery


def cmd_verify_ou(ctx: Context) -> int:
    phi = ctx.probes(1)[0]
    rows = []
    for t in (0.1, 1.0, 5.0):
        rows += ou_lemma_estimates(ctx.geom, ctx.mass, t, phi, bounded_functions(ctx.geom),
                                   ctx.cfg.numerics.n_samples, ctx.cfg.seed)
    ctx.report("ou_lemma.json", {"checks": rows})
    return PASS if all(r["agree"] for r in rows) else ERROR


def _mala(ctx: Context):
    n = ctx.cfg.numerics
    return mala_sample(ctx.model, ctx.geom, ctx.mass, n.n_samples, n.mcmc_step, n.mcmc_burnin, ctx.cfg.seed,
                       n_chains=n.mcmc_chains, thin=n.mcmc_thin)


def cmd_inequalities(ctx: Context) -> int:
    prof = ctx.profile(ctx.renorm())
    c = prof.lipschitz_bound
    ens = _mala(ctx)
    reps = inequality_battery(ens, c, precision_opnorm(ctx.geom, ctx.mass), eps=ctx.geom.eps)
    counts = {v: sum(r.verdict == v for r in reps) for v in ("pass", "fail", "inconclusive")}
    ctx.report("inequalities.json", {"c": c, "lambda_inf": prof.lambda_inf, "counts": counts,
                                     "reports": [r.to_dict() for r in reps]})
    return ERROR if counts["fail"] else PASS


def cmd_bridge(ctx: Context) -> int:
    n = ctx.cfg.numerics
    schedule = ctx.bridge_schedule()
    renorm = ctx.renorm(schedule)
    sim = BridgeSimulator(ctx.model, ctx.geom, ctx.mass, schedule, n.sde_steps, ctx.cfg.seed, renorm)
    run = sim.run(n.n_samples)
    ctx.ensemble("bridge.f64", run.terminal)
    base = max(10, n.sde_steps // 4)
    study = weak_order_study(ctx.model, ctx.geom, ctx.mass, schedule, n_steps=(base, 2 * base, 4 * base),
                             n_ref=16 * base, n_paths=min(n.n_samples, 2000), seed=ctx.cfg.seed, renorm=renorm)
    ctx.report("bridge_convergence.json", study.to_dict())
    ctx.table("bridge_convergence.csv", ["n_steps", "second_moment", "error"],
              zip(study.n_steps.tolist(), study.moments.tolist(), study.errors.tolist()))
    return PASS


def cmd_mcmc(ctx: Context) -> int:
    ens = _mala(ctx)
    ctx.ensemble("mcmc.f64", ens)
    return PASS


def _check(name, value, target, tol, se=0.0):
    ok = abs(value - target) <= tol + 3.0 * se
    return {"check": name, "value": value, "target": target, "tolerance": tol, "se": se, "pass": bool(ok)}


def cmd_oracle_quadratic(ctx: Context) -> int:
    if not isinstance(ctx.model, QuadraticModel):
        raise RGTransportError("oracle-quadratic needs model.kind = 'quadratic'")
    geom, mass, n = ctx.geom, ctx.mass, ctx.cfg.numerics
    a = mode_eigenvalues(geom, mass).ravel()
    b = ctx.model.b.values.ravel()
    checks = []

    exact = make_renormalizer(ctx.model, geom, mass, exact=True)
    grid = default_time_grid(float(a.min()), n=256, t_min=1e-4)
    prof = be_profile(exact, grid, ctx.probes(8))

    def rate(t):
        c = -np.expm1(-t * a) / a
        return np.min(np.exp(-t * a) * b / (1.0 + b * c))

    lam_oracle = scipy.integrate.quad(rate, 0.0, math.inf, limit=200)[0]
    checks.append(_check("lambda_inf", prof.lambda_inf, lam_oracle, 1e-3))

    integ = FlowIntegrator(exact, n_steps=max(n.ode_steps, 64), tol=n.tol, step_tol=n.step_tol)
    rep = lipschitz_report(integ, ctx.probes(), prof, seed=ctx.cfg.seed)
    checks.append(_check("lipschitz_empirical", rep.empirical, float(np.max(np.sqrt(a / (a + b)))), 1e-3))
    checks.append(_check("lipschitz_bound", rep.theoretical, math.exp(-lam_oracle / 2.0), 1e-3))

    ens = pushforward_ensemble(integ, n.n_samples, ctx.cfg.seed)
    var, se = mode_variances(ens)
    target = 1.0 / (mode_eigenvalues(geom, mass) + ctx.model.b.values)
    worst = int(np.argmax(np.abs(var - target) / np.maximum(se, 1e-300)))
    checks.append(_check("pushforward_variance", float(var.ravel()[worst]), float(target.ravel()[worst]), 0.0,
                         float(se.ravel()[worst])))

    phi = ctx.probes(1)[0]
    mc = RenormEstimator(ctx.model, geom, mass, n_inner=max(n.n_inner, 4096), seed=ctx.cfg.seed)
    est = mc.vt(1.0, phi)
    checks.append(_check("vt_monte_carlo", est.mean, exact.vt(1.0, phi).mean, 0.0, est.se))
    res = pde_residual(exact, 1.0, phi, 1e-3)
    checks.append(_check("pde_residual_closed_form", res.residual, 0.0, 1e-5 * max(res.scale, 1.0)))

    schedule = ctx.bridge_schedule()
    sim = BridgeSimulator(ctx.model, geom, mass, schedule, n.sde_steps, ctx.cfg.seed)
    bvar, bse = mode_variances(sim.run(n.n_samples).terminal)
    oracle = quadratic_variance_recursion(ctx.model, sim)
    j = int(np.argmax(np.abs(bvar - oracle) / np.maximum(bse, 1e-300)))
    checks.append(_check("bridge_variance", float(bvar.ravel()[j]), float(oracle.ravel()[j]), 0.0,
                         float(bse.ravel()[j])))

    ctx.report("oracle_quadratic.json", {
        "checks": checks,
        "lambda_inf": prof.lambda_inf,
        "lipschitz": rep.to_dict(),
        "excluded_samples": ens.metadata["excluded"],
    })
    return PASS if all(c["pass"] for c in checks) else ERROR


COMMANDS = {
    "profile": cmd_profile,
    "transport": cmd_transport,
    "lipschitz": cmd_lipschitz,
    "verify-pde": cmd_verify_pde,
    "verify-ou": cmd_verify_ou,
    "inequalities": cmd_inequalities,
    "bridge": cmd_bridge,
    "mcmc": cmd_mcmc,
    "oracle-quadratic": cmd_oracle_quadratic,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rgtransport", description="Renormalisation-group transport experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides config.output)")
    p.add_argument("--seed", type=int, help="master seed (overrides config.seed)")
    p.add_argument("--threads", type=int, help="thread count (overrides config.threads)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_command(name: str, cfg: RunConfig, overrides: dict | None = None) -> int:
    """Run one command and write its manifest; returns the exit status."""
    if name not in COMMANDS:
        raise RGTransportError(f"unknown command {name!r}")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out, cfg.digest())
    start = time.perf_counter()
    error = None
    with threadpool_limits(limits=cfg.threads):
        try:
            status = COMMANDS[name](ctx)
        except RGTransportError as exc:
            log.error("%s failed: %s", name, exc)
            status, error = ERROR, str(exc)
    manifest = {
        "command": name,
        "status": status,
        "error": error,
        "config": cfg.to_dict(),
        "config_hash": ctx.config_hash,
        "overrides": overrides or {},
        "seed": cfg.seed,
        "threads": cfg.threads,
        "annotations": cfg.annotations,
        "artifacts": ctx.artifacts,
        "versions": {
            "rgtransport": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": time.perf_counter() - start,
    }
    write_json(out / "manifest.json", manifest)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else config_from_dict({})
        overrides = {}
        for key, value in (("output", args.out), ("seed", args.seed), ("threads", args.threads)):
            if value is not None:
                overrides[key] = str(value) if isinstance(value, Path) else value
        if overrides:
            data = cfg.to_dict()
            data.update(overrides)
            cfg = config_from_dict(data)
        return run_command(args.command, cfg, overrides)
    except RGTransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
