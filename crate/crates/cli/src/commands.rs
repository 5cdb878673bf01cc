//! Subcommand bodies. Each writes its files through the sink and returns
//! whether the run counts as a success.

use std::io::Write;
use std::path::Path;

use nlsred::checks::{run_checks, CheckOptions};
use nlsred::fields::{check_hypotheses, FieldSpec, HypothesisReport};
use nlsred::groundstate::{solve_ground_state, ProfileMetadata, RadialProfile};
use nlsred::landscape::{classify_manifold, find_critical_points, write_points_csv, CriticalManifold, SearchBox};
use nlsred::reduction::{expansion_report, CorrectionOptions, ExpansionOptions, Reduction};
use nlsred::ansatz::AnsatzParams;
use nlsred::solver::{concentration_sweep, NewtonOptions, SweepOptions, SweepReport};
use nlsred::Error;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, Seeds};
use crate::output::{config_hash, to_json, Envelope, Sink};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Core(e) => match e {
                Error::SupercriticalExponent { .. } | Error::NonConvergence(_) => 10,
                Error::Domain(_) | Error::Parse { .. } | Error::UnknownIdentifier { .. } | Error::InvalidInput(_) => 11,
                Error::ClusterAmbiguous { .. } => 12,
                Error::TooLarge { .. } | Error::GridMismatch | Error::OutOfBox { .. } | Error::IllConditioned { .. } => 13,
                Error::LinearSolveFailure { .. } | Error::EigenSolveFailure(_) | Error::ContractionFailure(_) => 14,
                Error::NewtonDivergence(_) | Error::SingularHessian(_) | Error::FlatField => 15,
            },
        }
    }
}

type Outcome = Result<bool, CliError>;

pub struct Context {
    pub cfg: RunConfig,
    pub sink: Sink,
    command: &'static str,
    hash: String,
}

impl Context {
    pub fn new(cfg: RunConfig, out_dir: &Path, command: &'static str) -> Result<Context, CliError> {
        // the output directory does not change the numbers, so it stays out of the hash
        let mut hashed = cfg.clone();
        hashed.output_dir = None;
        let hash = config_hash(&hashed);
        Ok(Context {
            cfg,
            sink: Sink::new(out_dir)?,
            command,
            hash,
        })
    }

    fn report<T: Serialize>(&mut self, result: T) -> Result<(), CliError> {
        let env = Envelope {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &self.hash,
            convention: self.cfg.convention.name(),
            result,
        };
        let bytes = to_json(&env).map_err(std::io::Error::from)?;
        self.sink.write_bytes(&format!("{}.json", self.command), &bytes)?;
        Ok(())
    }

    fn profile(&self) -> Result<RadialProfile, CliError> {
        Ok(solve_ground_state(self.cfg.dimension, self.cfg.exponent, self.cfg.tolerances.ode_tol)?)
    }

    fn spec(&self) -> Result<FieldSpec, CliError> {
        Ok(self.cfg.field_spec()?)
    }

    fn search_box(&self) -> SearchBox {
        SearchBox::cube(self.cfg.dimension, self.cfg.landscape.half_width)
    }

    fn manifolds(&self, spec: &FieldSpec) -> Result<Vec<CriticalManifold>, CliError> {
        let ls = &self.cfg.landscape;
        let pts = find_critical_points(spec, self.cfg.exponent, self.cfg.convention, &self.search_box(), ls.starts, ls.tol)?;
        if pts.is_empty() {
            return Err(Error::InvalidInput("no critical points of Λ inside the search box".into()).into());
        }
        Ok(classify_manifold(&pts, ls.cluster_tol)?)
    }

    /// Seeds in slow variables. Automatic seeds take one point per
    /// Bott-nondegenerate manifold, plus the point farthest from it when the
    /// manifold forces two or more. Degenerate points (flat far field) are
    /// skipped.
    fn seeds(&self, spec: &FieldSpec) -> Result<Vec<Vec<f64>>, CliError> {
        match &self.cfg.seeds {
            Seeds::Points(p) if !p.is_empty() => Ok(p.clone()),
            Seeds::Points(_) => Err(ConfigError::Invalid("seeds list is empty".into()).into()),
            Seeds::Auto(_) => {
                let mut seeds = Vec::new();
                for m in self.manifolds(spec)?.into_iter().filter(|m| m.bott_nondegenerate) {
                    let first = m.points[0].x.clone();
                    if m.multiplicity_bound >= 2 && m.points.len() >= 2 {
                        let far = m
                            .points
                            .iter()
                            .max_by(|a, b| dist(&a.x, &first).total_cmp(&dist(&b.x, &first)))
                            .map(|p| p.x.clone())
                            .unwrap();
                        seeds.push(first);
                        seeds.push(far);
                    } else {
                        seeds.push(first);
                    }
                }
                if seeds.is_empty() {
                    return Err(Error::InvalidInput("no nondegenerate critical manifold to seed from".into()).into());
                }
                Ok(seeds)
            }
        }
    }

    fn ladder(&self) -> Result<&[f64], CliError> {
        if self.cfg.epsilon.is_empty() {
            return Err(ConfigError::Invalid("this command needs an epsilon ladder".into()).into());
        }
        Ok(&self.cfg.epsilon)
    }

    fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            correction: CorrectionOptions::with_tol(self.cfg.tolerances.fp_tol),
            newton: NewtonOptions {
                max_iter: self.cfg.tolerances.newton_max_iter,
                ..NewtonOptions::with_tol(self.cfg.tolerances.newton_tol)
            },
            critical_points: Vec::new(),
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Serialize)]
struct GroundResult {
    metadata: ProfileMetadata,
    c0: f64,
    c1: f64,
}

pub fn ground(ctx: &mut Context) -> Outcome {
    let prof = ctx.profile()?;
    let mo = prof.moments();
    ctx.sink.write_with("profile.csv", |w| prof.write_csv(w))?;
    let conv = ctx.cfg.convention;
    ctx.report(GroundResult {
        metadata: prof.metadata(),
        c0: conv.c0(&mo),
        c1: conv.c1(&mo, ctx.cfg.exponent),
    })?;
    Ok(true)
}

#[derive(Serialize)]
struct LandscapeResult {
    search_box: SearchBox,
    hypotheses: HypothesisReport,
    manifolds: Vec<CriticalManifold>,
}

pub fn landscape(ctx: &mut Context) -> Outcome {
    let spec = ctx.spec()?;
    let manifolds = ctx.manifolds(&spec)?;
    let points: Vec<_> = manifolds.iter().flat_map(|m| m.points.iter().cloned()).collect();
    let dim = ctx.cfg.dimension;
    ctx.sink.write_with("critical_points.csv", |w| write_points_csv(&points, dim, w))?;
    let bx = ctx.search_box();
    let hypotheses = check_hypotheses(&spec, 10.0, 41);
    ctx.report(LandscapeResult {
        search_box: bx,
        hypotheses,
        manifolds,
    })?;
    Ok(true)
}

#[derive(Serialize)]
struct CorrectionSummary {
    eps: f64,
    xi: Vec<f64>,
    iterations: usize,
    fixed_point_residual: f64,
    w_norm_e: f64,
    z_norm_e: f64,
    psi: f64,
}

#[derive(Serialize)]
struct ReduceResult {
    expansion: nlsred::reduction::ExpansionReport,
    correction: CorrectionSummary,
}

pub fn reduce(ctx: &mut Context) -> Outcome {
    let prof = ctx.profile()?;
    let spec = ctx.spec()?;
    let ladder = ctx.ladder()?.to_vec();
    let slow = match &ctx.cfg.slow_point {
        Some(x) => x.clone(),
        None => ctx.seeds(&spec)?.swap_remove(0),
    };
    let opts = ExpansionOptions {
        correction: CorrectionOptions::with_tol(ctx.cfg.tolerances.fp_tol),
        convention: ctx.cfg.convention,
        gradient_step: ctx.cfg.gradient_step,
        lanczos_steps: ctx.cfg.lanczos_steps,
    };
    let rep = expansion_report(&prof, &spec, &slow, &ladder, &ctx.cfg.grid, &opts)?;
    ctx.sink.write_with("ladder.csv", |w| rep.write_csv(w))?;

    let eps = *ladder.last().unwrap();
    let xi: Vec<f64> = slow.iter().map(|x| x / eps).collect();
    let grid = ctx.cfg.grid.grid_at(&xi)?;
    let params = AnsatzParams::new(eps, &xi, 0.0);
    let red = Reduction::new(&prof, &spec, &params, &grid)?;
    let res = red.solve(&opts.correction)?;
    ctx.sink.write_with("correction.bin", |w| res.w.write_snapshot(w))?;
    ctx.report(ReduceResult {
        expansion: rep,
        correction: CorrectionSummary {
            eps,
            xi,
            iterations: res.iterations,
            fixed_point_residual: res.fixed_point_residual,
            w_norm_e: res.w_norm_e,
            z_norm_e: res.z_norm_e,
            psi: res.psi,
        },
    })?;
    Ok(true)
}

fn run_sweep(ctx: &mut Context, ladder: &[f64], snapshots: bool) -> Outcome {
    let prof = ctx.profile()?;
    let spec = ctx.spec()?;
    let seeds = ctx.seeds(&spec)?;
    let (rep, fields) = concentration_sweep(&prof, &spec, ladder, &seeds, &ctx.cfg.grid, &ctx.sweep_options())?;
    let dim = ctx.cfg.dimension;
    ctx.sink.write_with(&format!("{}.csv", ctx.command), |w| rep.write_csv(dim, w))?;
    if snapshots {
        for (entry, u) in rep.entries.iter().zip(&fields) {
            let (Some(u), Some(peak)) = (u, &entry.peak) else { continue };
            let i = entry.seed_index;
            ctx.sink.write_with(&format!("solution_{i}.bin"), |w| u.write_snapshot(w))?;
            ctx.sink.write_with(&format!("slice_{i}.csv"), |w| u.write_slice_csv(0, peak, w))?;
        }
    }
    let ok = rep.entries.iter().all(|e| e.error.is_none());
    if !ok {
        for e in rep.entries.iter().filter_map(|e| e.error.as_ref().map(|m| (e, m))) {
            let _ = writeln!(std::io::stderr(), "warning: eps = {} seed {}: {}", e.0.eps, e.0.seed_index, e.1);
        }
    }
    ctx.report::<&SweepReport>(&rep)?;
    // a sweep where nothing converged is an error, partial failures are not
    if rep.entries.iter().all(|e| e.error.is_some()) {
        let msg = rep.entries[0].error.clone().unwrap_or_default();
        return Err(Error::NewtonDivergence(format!("no seed converged; first failure: {msg}")).into());
    }
    Ok(true)
}

pub fn solve(ctx: &mut Context) -> Outcome {
    let first = ctx.ladder()?[0];
    run_sweep(ctx, &[first], true)
}

pub fn sweep(ctx: &mut Context) -> Outcome {
    let ladder = ctx.ladder()?.to_vec();
    run_sweep(ctx, &ladder, false)
}

pub fn check(ctx: &mut Context) -> Outcome {
    let spec = ctx.spec()?;
    let opts = CheckOptions {
        p: ctx.cfg.exponent,
        seed: ctx.cfg.seed,
        ..CheckOptions::default()
    };
    let rep = run_checks(&spec, &opts)?;
    for item in &rep.items {
        let tag = if item.passed { "ok  " } else { "FAIL" };
        let _ = writeln!(std::io::stderr(), "{tag} {:<28} {:.3e} (tol {:.1e})", item.name, item.value, item.tolerance);
    }
    let ok = rep.all_pass();
    ctx.report(&rep)?;
    Ok(ok)
}
