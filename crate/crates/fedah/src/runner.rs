use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedah_core::federation::{prepare_clients, run_experiment_with, setup_experiment};
use fedah_core::{ExperimentSpec, LabeledDataset, Method, Silent};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Loaded};
use crate::error::{CliError, Result};
use crate::exec::Rayon;
use crate::output::{render, write_all, RunResult};

/// A validated config, ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub loaded: Loaded,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub dataset: LabeledDataset,
    pub output_dir: PathBuf,
}

impl Plan {
    /// Checks everything that can be checked without training: keys and
    /// values, dataset files, partition feasibility and model shape.
    pub fn new(
        loaded: Loaded,
        methods: Option<&[String]>,
        output_dir: Option<&Path>,
    ) -> Result<Self> {
        let mut config = loaded.config.clone();
        if let Some(m) = methods {
            config.methods = m.to_vec();
        }
        let loaded = Loaded { config, ..loaded };
        let cfg = &loaded.config;
        let methods = cfg.methods()?;
        let seeds = cfg.seeds()?;
        let dataset = loaded.load_dataset()?;
        for &seed in &seeds {
            cfg.experiment_spec(seed)?;
        }
        setup_experiment(&dataset, &cfg.experiment_spec(seeds[0])?, methods[0])?;
        let output_dir = output_dir.map_or_else(|| loaded.output_dir(), Path::to_path_buf);
        Ok(Self {
            loaded,
            methods,
            seeds,
            dataset,
            output_dir,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    pub fn spec(&self, seed: u64) -> Result<ExperimentSpec> {
        self.config().experiment_spec(seed)
    }

    /// Every `(method, seed)` pair, in output order.
    pub fn jobs(&self) -> Vec<(Method, u64)> {
        self.methods
            .iter()
            .flat_map(|&m| self.seeds.iter().map(move |&s| (m, s)))
            .collect()
    }

    /// Runs all experiments in memory. Results do not depend on scheduling.
    pub fn execute(&self) -> Result<Vec<RunResult>> {
        self.jobs()
            .into_par_iter()
            .map(|(method, seed)| {
                let log =
                    run_experiment_with(&self.dataset, &self.spec(seed)?, method, &Rayon, &Silent)
                        .map_err(|e| CliError::Runtime(format!("{method} seed {seed}: {e}")))?;
                Ok(RunResult { method, seed, log })
            })
            .collect()
    }
}

/// `run`: validate, compute everything, then write. Returns the completion
/// line.
pub fn run(
    config_path: &Path,
    output_dir: Option<&Path>,
    methods: Option<&[String]>,
) -> Result<String> {
    let plan = Plan::new(ExperimentConfig::load(config_path)?, methods, output_dir)?;
    let runs = plan.execute()?;
    let files = render(&runs, plan.config().plot)?;
    write_all(&plan.output_dir, &files)?;
    Ok(format!(
        "{} runs ({} methods x {} seeds) written to {}",
        runs.len(),
        plan.methods.len(),
        plan.seeds.len(),
        plan.output_dir.display()
    ))
}

/// `describe`: the resolved configuration and the quantities derived from
/// it, without training anything.
pub fn describe(config_path: &Path) -> Result<String> {
    let plan = Plan::new(ExperimentConfig::load(config_path)?, None, None)?;
    let cfg = plan.config();
    let spec = plan.spec(plan.seeds[0])?;
    let ds = &plan.dataset;
    let clients = prepare_clients(ds, &spec.partition, spec.test_fraction)?;
    let model = setup_experiment(ds, &spec, plan.methods[0])?.global_model;

    let mut resolved = cfg.clone();
    resolved.methods = plan.methods.iter().map(|m| m.to_string()).collect();
    resolved.seeds = plan.seeds.clone();
    resolved.output_dir = plan.output_dir.clone();
    let toml = toml::to_string(&resolved).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut s = String::new();
    let _ = writeln!(s, "# configuration\n{}", toml.trim_end());
    let _ = writeln!(
        s,
        "\n# dataset\nsamples {}\ndim {}\nclasses {}",
        ds.len(),
        ds.dim(),
        ds.n_classes
    );
    let _ = writeln!(s, "\n# clients\nclient,train,test,total");
    let mut total = 0;
    for c in &clients {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.client_id,
            c.train.len(),
            c.test.len(),
            c.total()
        );
        total += c.total();
    }
    let _ = writeln!(
        s,
        "all,{},{},{total}",
        clients.iter().map(|c| c.train.len()).sum::<usize>(),
        clients.iter().map(|c| c.test.len()).sum::<usize>()
    );
    let dims: Vec<String> = spec
        .extractor_dims(ds.dim())
        .into_iter()
        .chain([ds.n_classes])
        .map(|d| d.to_string())
        .collect();
    let _ = writeln!(s, "\n# model\nlayers {}", dims.join("-"));
    let _ = writeln!(s, "params {}", model.param_count());
    let _ = writeln!(s, "extractor_params {}", model.extractor_param_count());
    let _ = writeln!(s, "head_params {}", model.head.param_count());
    let _ = writeln!(s, "alpha {}", model.extractor_fraction());
    Ok(s)
}
