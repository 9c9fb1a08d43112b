use std::fs;
use std::path::{Path, PathBuf};

use negsamp::estimators::{fit_ipw, fit_lik, fit_mle, FitSpec, SolverOptions};
use negsamp::experiments::{
    generate, run_floor_sensitivity, run_mse_sweep, run_model_misspec, run_table1, write_outputs,
    Design, Generator, Manifest,
};
use negsamp::io::{self, PilotFile};
use negsamp::pilot::build_pilot;
use negsamp::sampling::{draw_subsample, solve_truncation, SamplingPlan, Scheme};
use negsamp::{rng, PilotConfig, Perturbation};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    EstimatorArg, ExperimentArgs, FitArgs, GenerateArgs, PilotArgs, SampleArgs,
};
use crate::config::{self, ExperimentSpec};

/// A failed command and its exit code: 1 for numerical failures, 2 for
/// usage and validation errors.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Failure {
            code: 1,
            msg: msg.into(),
        }
    }
}

impl From<negsamp::Error> for Failure {
    fn from(e: negsamp::Error) -> Self {
        if e.is_numerical() {
            Failure::numerical(e.to_string())
        } else {
            Failure::usage(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: &Path) -> Result<io::Table, Failure> {
    io::read_table_path(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(negsamp::Error::from)?;
    fs::write(path, text + "\n")
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// `a/b.csv` → `a/b.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn generate_cmd(a: GenerateArgs) -> Outcome {
    let design = Design {
        covariate: a.covariate.into(),
        d: a.d,
        beta_true: a.beta,
        alpha_true: a.alpha,
        n: a.n,
        target_ratio: a.target_ratio,
        generator: Generator::Linear,
    };
    let (data, truth) = generate(&design, a.seed)?;
    io::write_dataset_path(&a.out, &data)?;
    write_json(
        &sidecar_path(&a.out),
        &json!({
            "design": design,
            "seed": a.seed,
            "truth": truth,
            "rows": data.len(),
            "positives": data.n1(),
        }),
    )
}

pub fn pilot_cmd(a: PilotArgs) -> Outcome {
    let table = read_input(&a.input)?;
    let cfg = PilotConfig {
        per_class_size: a.per_class,
        perturb: match a.perturb_uniform {
            Some(scale) => Perturbation::AddUniform { scale },
            None => Perturbation::None,
        },
    };
    cfg.validate(table.data.dim())?;
    let bundle = build_pilot(&table.data, &cfg, a.scheme.into(), a.seed)?;
    let file = fs::File::create(&a.out)
        .map_err(|e| Failure::usage(format!("{}: {e}", a.out.display())))?;
    io::write_pilot(file, &bundle)?;
    Ok(())
}

pub fn sample_cmd(a: SampleArgs) -> Outcome {
    let scheme: Scheme = a.scheme.into();
    let pilot = match (&a.pilot, scheme.needs_pilot()) {
        (Some(path), _) => {
            let file = fs::File::open(path)
                .map_err(|e| Failure::usage(format!("--pilot {}: {e}", path.display())))?;
            Some(io::read_pilot(file)?)
        }
        (None, true) => {
            return Err(Failure::usage(format!(
                "--pilot is required for scheme {}",
                scheme.as_str()
            )))
        }
        (None, false) => None,
    };
    let table = read_input(&a.input)?;
    let data = table.data;
    let pilot = if scheme.needs_pilot() { pilot } else { None };
    let mut plan = SamplingPlan::new(scheme, a.rho, a.floor, pilot)?;
    if a.truncate && scheme != Scheme::Uniform {
        let scores = data
            .rows()
            .filter(|(_, y)| *y == 0)
            .map(|(x, _)| plan.score(x))
            .collect::<negsamp::Result<Vec<_>>>()?;
        let t = solve_truncation(&scores, a.rho)?;
        plan = plan.with_truncation(t)?;
    }
    let sub = draw_subsample(&data, &plan, a.seed)?;
    io::write_subsample_path(&a.out, &sub)?;

    let (pi_min, pi_max) = sub
        .pi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
    let t = plan.truncation_t;
    write_json(
        &sidecar_path(&a.out),
        &json!({
            "plan": {
                "scheme": scheme.as_str(),
                "rho": plan.rho,
                "floor": plan.floor,
                "truncation_t": t.is_finite().then_some(t),
                "seed": a.seed,
            },
            "pilot": plan.pilot.as_ref().map(PilotFile::from),
            "counts": {
                "input_rows": data.len(),
                "positives": data.n1(),
                "input_negatives": data.n0(),
                "kept_negatives": sub.negatives(),
                "output_rows": sub.len(),
            },
            "pi": { "min": pi_min, "max": pi_max },
        }),
    )
}

pub fn fit_cmd(a: FitArgs) -> Outcome {
    let table = read_input(&a.input)?;
    let options = SolverOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        init: None,
    };
    let fit = match a.estimator {
        EstimatorArg::Mle => fit_mle(
            &table.data,
            &FitSpec {
                options,
                ..FitSpec::default()
            },
        )?,
        est => {
            if table.pi.is_none() {
                return Err(Failure::usage(format!(
                    "estimator {est:?} needs a `pi` column in {}",
                    a.input.display()
                )));
            }
            let sub = table.into_subsample()?;
            if est == EstimatorArg::Ipw {
                fit_ipw(&sub, &options)?
            } else {
                fit_lik(&sub, &options)?
            }
        }
    };
    let summary = fit.summary();
    match &a.out {
        Some(path) => write_json(path, &summary)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&summary).map_err(negsamp::Error::from)?
        ),
    }
    if !fit.converged && !a.allow_nonconverged {
        return Err(Failure::numerical(format!(
            "solver did not converge after {} iterations (gradient {:.3e}); \
             pass --allow-nonconverged to accept",
            fit.iterations, fit.grad_norm
        )));
    }
    Ok(())
}

pub fn experiment_cmd(a: ExperimentArgs) -> Outcome {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::usage(format!("{}: {e}", a.config.display())))?;
    let mut cfg = config::parse(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = a.replications {
        cfg.experiment.set_replications(r);
    }
    if let Some(out) = a.out {
        cfg.output_dir = Some(out);
    }
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Failure::usage("no output directory: pass --out or set output_dir"))?;
    let seed = cfg.master_seed;
    let kind = cfg.experiment.kind();

    let (csv, flagged, summary, runtime) = match &cfg.experiment {
        ExperimentSpec::MseSweep(c) => {
            let rep = run_mse_sweep(c, seed)?;
            (rep.to_csv(), rep.flagged(), json!({ "alpha": rep.alpha }), rep.runtime_secs)
        }
        ExperimentSpec::Table1(c) => {
            if c.models.is_empty() {
                return Err(Failure::usage("table1 needs at least one model column"));
            }
            let mut csv = String::new();
            let mut flagged = Vec::new();
            let mut runtime = 0.0;
            for (k, &model) in c.models.iter().enumerate() {
                let rep = run_table1(c, model, rng::derive(seed, k as u64))?;
                if csv.is_empty() {
                    csv = rep.to_csv();
                } else {
                    csv.extend(rep.csv_rows().into_iter().map(|r| r + "\n"));
                }
                flagged.extend(
                    rep.rows
                        .iter()
                        .filter(|r| !r.valid)
                        .map(|r| format!("{} n={}", model.as_str(), r.n)),
                );
                runtime += rep.runtime_secs;
            }
            (csv, flagged, serde_json::Value::Null, runtime)
        }
        ExperimentSpec::Floor(c) => {
            let rep = run_floor_sensitivity(c, seed)?;
            (
                rep.report.to_csv(),
                rep.report.flagged(),
                json!({
                    "alpha": rep.report.alpha,
                    "largest_floor": rep.largest_floor,
                    "largest_matches_uniform": rep.largest_matches_uniform,
                }),
                rep.report.runtime_secs,
            )
        }
        ExperimentSpec::Misspec(c) => {
            let rep = run_model_misspec(c, seed)?;
            let flagged = rep
                .designs
                .iter()
                .flat_map(|(cov, r)| r.flagged().into_iter().map(move |f| format!("{} {f}", cov.as_str())))
                .collect();
            let alphas: serde_json::Map<_, _> = rep
                .designs
                .iter()
                .map(|(cov, r)| (cov.as_str().to_string(), json!(r.alpha)))
                .collect();
            let runtime = rep.designs.iter().map(|(_, r)| r.runtime_secs).sum();
            (
                rep.to_csv(),
                flagged,
                json!({ "alpha": alphas, "orderings_checked": rep.orderings_checked }),
                runtime,
            )
        }
    };
    let mut manifest = Manifest::new(kind, seed, &cfg);
    manifest.flagged_cells = flagged;
    manifest.summary = summary;
    manifest.runtime_secs = runtime;
    write_outputs(&dir, &csv, &manifest)?;
    for f in &manifest.flagged_cells {
        log::warn!("flagged: {f}");
    }
    Ok(())
}
