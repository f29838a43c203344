//! Figure pipelines built from the other subcommands, and manifest reruns.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::args::{Profile, ReproArgs, Scale};
use crate::error::{CliError, Result};
use crate::manifest::{hashes, manifest_path, Manifest};
use crate::output::{ensure_parent, sha256_file, Table};

/// Desk-scale sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct DeskPlan {
    pub n_train: usize,
    pub n_val: usize,
    pub steps: usize,
    pub dt: f64,
    pub poles: usize,
    pub noise_poles: usize,
    pub depth: usize,
    pub heom_depth: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub ttm_cutoff: usize,
    pub ttm_tmax: f64,
}

impl Default for DeskPlan {
    fn default() -> Self {
        DeskPlan {
            n_train: 500,
            n_val: 100,
            steps: 1000,
            dt: 0.01,
            poles: 4,
            noise_poles: 10,
            depth: 4,
            heom_depth: 10,
            epochs: 300,
            batch: 16,
            lr: 1e-3,
            seed: 0,
            ttm_cutoff: 500,
            ttm_tmax: 40.0,
        }
    }
}

impl DeskPlan {
    fn from_args(a: &ReproArgs) -> Self {
        let d = DeskPlan::default();
        DeskPlan {
            n_train: a.n_train.unwrap_or(d.n_train),
            n_val: a.n_val.unwrap_or(d.n_val),
            steps: a.steps.unwrap_or(d.steps),
            epochs: a.epochs.unwrap_or(d.epochs),
            ..d
        }
    }

    /// Sizes of the full-scale job plan.
    fn paper() -> Self {
        DeskPlan { n_train: 5000, n_val: 2000, depth: 20, heom_depth: 20, epochs: 100_000, batch: 64, lr: 1e-4, ..DeskPlan::default() }
    }
}

pub const BETAS: [f64; 3] = [0.2, 1.0, 5.0];

/// The six initial states needed for dynamical maps.
pub const INITS: [&str; 6] = ["1", "2", "+1", "-1", "+i", "-i"];

fn betas(a: &ReproArgs) -> Vec<f64> {
    if a.beta.is_empty() {
        BETAS.to_vec()
    } else {
        a.beta.clone()
    }
}

fn figure_name(p: Profile) -> &'static str {
    match p {
        Profile::Fig3 => "fig3",
        Profile::Fig4 => "fig4",
        Profile::Fig5 => "fig5",
        Profile::Fig6 => "fig6",
        Profile::Fig7 => "fig7",
    }
}

pub fn outputs(a: &ReproArgs) -> Vec<PathBuf> {
    let Some(p) = a.profile else {
        return Vec::new();
    };
    let name = figure_name(p);
    vec![match a.scale {
        Scale::Desk => a.out_dir.join(format!("{name}.csv")),
        Scale::Paper => a.out_dir.join(format!("{name}_plan.json")),
    }]
}

/// One pipeline step: the argument list (without the program name) and its
/// first output.
#[derive(Clone, Debug)]
struct Stage {
    args: Vec<String>,
    out: PathBuf,
}

fn stage(args: &[&str], out: &Path) -> Stage {
    let mut v: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    v.push("--out".into());
    v.push(out.display().to_string());
    Stage { args: v, out: out.to_path_buf() }
}

struct Builder<'a> {
    dir: &'a Path,
    plan: DeskPlan,
}

impl Builder<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn modes(&self, beta: f64, poles: usize) -> (Stage, PathBuf) {
        let out = self.path(&format!("modes_beta{beta}_p{poles}.json"));
        let (b, p) = (beta.to_string(), poles.to_string());
        let args = ["bath", "decompose", "--sdf", "drude", "--lambda", "0.1", "--gamma", "1", "--beta", &b, "--poles", &p];
        (stage(&args, &out), out)
    }

    /// Modes, noise, HOPS data and a trained model at β = 1.
    fn training(&self) -> (Vec<Stage>, PathBuf, PathBuf) {
        let p = &self.plan;
        let (m, modes) = self.modes(1.0, p.poles);
        let (nm, noise_modes) = self.modes(1.0, p.noise_poles);
        let noise = self.path("noise.nmqd");
        let data = self.path("data.nmqd");
        let model = self.path("model.ckpt");
        let count = (p.n_train + p.n_val).to_string();
        let steps = p.steps.to_string();
        let dt = p.dt.to_string();
        let seed = (p.seed + 1).to_string();
        let ns = stage(
            &["noise", "sample", "--modes", &s(&noise_modes), "--dt", &dt, "--steps", &steps, "--count", &count, "--seed", &seed],
            &noise,
        );
        let depth = p.depth.to_string();
        let n_train = p.n_train.to_string();
        let (modes_s, noise_s) = (s(&modes), s(&noise));
        let mut hops = vec!["hops", "gen", "--modes", &modes_s, "--noise", &noise_s];
        for init in INITS {
            hops.extend(["--init", init]);
        }
        hops.extend(["--assign", "cycle", "--kmax", &depth, "--n-train", &n_train]);
        let hg = stage(&hops, &data);
        let (epochs, batch, lr, tseed) = (p.epochs.to_string(), p.batch.to_string(), p.lr.to_string(), p.seed.to_string());
        let log = s(&self.path("train_log.csv"));
        let tr = stage(
            &[
                "train", "--data", &s(&data), "--arch", "tiny", "--lr", &lr, "--schedule", "cosine", "--epochs", &epochs,
                "--batch", &batch, "--seed", &tseed, "--validate-every", "10", "--log-out", &log,
            ],
            &model,
        );
        (vec![m, nm, ns, hg, tr], data, model)
    }

    fn validate(&self, data: &Path, model: &Path, reducer: &str) -> (Stage, PathBuf) {
        let out = self.path(&format!("L_{reducer}.csv"));
        (stage(&["validate", "--model", &s(model), "--data", &s(data), "--reducer", reducer], &out), out)
    }
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// The pipeline for a profile, and the recipe that merges the stage outputs.
fn pipeline(profile: Profile, b: &Builder, betas: &[f64]) -> (Vec<Stage>, Merge) {
    let p = &b.plan;
    match profile {
        Profile::Fig3 | Profile::Fig4 => {
            let (mut stages, data, model) = b.training();
            let (mean, mean_out) = b.validate(&data, &model, "mean");
            stages.push(mean);
            let mut cols = vec![(mean_out, "L".to_string(), "mean_L".to_string())];
            if profile == Profile::Fig4 {
                let (max, max_out) = b.validate(&data, &model, "max");
                stages.push(max);
                cols.push((max_out, "L".into(), "max_L".into()));
            }
            (stages, Merge { key: "t", cols })
        }
        Profile::Fig5 => {
            let (mut stages, data, model) = b.training();
            let ops = b.path("ops_validation.nmqd");
            stages.push(stage(&["apps", "operators", "--model", &s(&model), "--data", &s(&data), "--split", "validation"], &ops));
            let (_, modes) = b.modes(1.0, p.poles);
            let tmax = (p.steps as f64 * p.dt).to_string();
            let kmax = p.heom_depth.to_string();
            let heom = b.path("rho_heom.csv");
            stages.push(stage(&["heom", "run", "--modes", &s(&modes), "--init", "diag:1,0", "--tmax", &tmax, "--kmax", &kmax], &heom));
            let hops = b.path("rho_hops.csv");
            stages.push(stage(&["apps", "density", "--data", &s(&data), "--split", "validation", "--init", "1"], &hops));
            let model_rho = b.path("rho_model.csv");
            stages.push(stage(&["apps", "density", "--ops", &s(&ops), "--init", "1"], &model_rho));
            let cols = vec![
                (heom, "delta".to_string(), "delta_heom".to_string()),
                (hops.clone(), "delta".into(), "delta_hops".into()),
                (hops, "delta_stderr".into(), "delta_hops_stderr".into()),
                (model_rho, "delta".into(), "delta_model".into()),
            ];
            (stages, Merge { key: "t", cols })
        }
        Profile::Fig6 => {
            let mut stages = Vec::new();
            let mut cols = Vec::new();
            let (steps, kmax) = (p.steps.to_string(), p.heom_depth.to_string());
            for &beta in betas {
                let (m, modes) = b.modes(beta, p.poles);
                stages.push(m);
                let out = b.path(&format!("spectrum_beta{beta}.csv"));
                let corr = s(&b.path(&format!("correlation_beta{beta}.csv")));
                stages.push(stage(
                    &["apps", "spectrum", "--heom-modes", &s(&modes), "--kmax", &kmax, "--steps", &steps, "--corr-out", &corr],
                    &out,
                ));
                cols.push((out, "spectrum".to_string(), format!("spectrum_beta{beta}")));
            }
            (stages, Merge { key: "omega", cols })
        }
        Profile::Fig7 => {
            let mut stages = Vec::new();
            let mut cols = Vec::new();
            let (steps, kmax) = (p.steps.to_string(), p.heom_depth.to_string());
            let (cutoff, tmax) = (p.ttm_cutoff.to_string(), p.ttm_tmax.to_string());
            for &beta in betas {
                let (m, modes) = b.modes(beta, p.poles);
                stages.push(m);
                let maps = b.path(&format!("maps_beta{beta}.nmqd"));
                stages.push(stage(&["apps", "maps", "--heom-modes", &s(&modes), "--kmax", &kmax, "--steps", &steps], &maps));
                let ttm = b.path(&format!("ttm_beta{beta}.csv"));
                stages.push(stage(&["apps", "ttm", "--maps", &s(&maps), "--cutoff", &cutoff, "--tmax", &tmax, "--init", "diag:1,0"], &ttm));
                let heom = b.path(&format!("heom_beta{beta}.csv"));
                stages.push(stage(&["heom", "run", "--modes", &s(&modes), "--init", "diag:1,0", "--tmax", &tmax, "--kmax", &kmax], &heom));
                cols.push((heom, "delta".to_string(), format!("delta_heom_beta{beta}")));
                cols.push((ttm, "delta".to_string(), format!("delta_ttm_beta{beta}")));
            }
            (stages, Merge { key: "t", cols })
        }
    }
}

/// Joins one column from each stage CSV on the shared key column.
struct Merge {
    key: &'static str,
    cols: Vec<(PathBuf, String, String)>,
}

impl Merge {
    fn run(&self, profile: Profile, out: &Path) -> Result<()> {
        let mut names = vec![self.key.to_string()];
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut key: Option<Vec<f64>> = None;
        let mut table = Table::new(&[]);
        table.meta("figure", figure_name(profile));
        for (path, col, name) in &self.cols {
            let t = Table::load(path)?;
            let k = t.column(self.key)?;
            let v = t.column(col)?;
            let n = key.as_ref().map_or(k.len(), |x| x.len().min(k.len()));
            key.get_or_insert(k);
            columns.push(v);
            columns.iter_mut().for_each(|c| c.truncate(n));
            names.push(name.clone());
            table.meta(name, path.display());
        }
        let key = key.unwrap_or_default();
        let n = columns.first().map_or(0, Vec::len);
        table.columns = names;
        table.rows = (0..n)
            .map(|i| std::iter::once(key[i]).chain(columns.iter().map(|c| c[i])).collect())
            .collect();
        table.save(out)
    }
}

/// True when a stage's manifest records the same command and the files on
/// disk still match it.
fn up_to_date(st: &Stage) -> bool {
    let Ok(m) = Manifest::load(&manifest_path(&st.out)) else {
        return false;
    };
    m.command == st.args
        && m.inputs.iter().chain(&m.outputs).all(|(p, h)| sha256_file(Path::new(p)).is_ok_and(|x| x == *h))
}

fn run_stage(st: &Stage, reuse: bool) -> Result<()> {
    if reuse && up_to_date(st) {
        return Ok(());
    }
    let argv = std::iter::once("nmqd".to_string()).chain(st.args.iter().cloned()).map(Into::into).collect();
    crate::execute(argv)
}

pub fn repro(a: &ReproArgs) -> Result<()> {
    let profile = a.profile.ok_or_else(|| CliError::Usage("give a profile or --manifest".into()))?;
    let out = outputs(a).remove(0);
    match a.scale {
        Scale::Desk => {
            let b = Builder { dir: &a.out_dir, plan: DeskPlan::from_args(a) };
            let (stages, merge) = pipeline(profile, &b, &betas(a));
            for st in &stages {
                run_stage(st, a.reuse)?;
            }
            merge.run(profile, &out)?;
        }
        Scale::Paper => {
            let b = Builder { dir: &a.out_dir, plan: DeskPlan::paper() };
            let (stages, _) = pipeline(profile, &b, &betas(a));
            let plan = json!({
                "figure": figure_name(profile),
                "scale": "paper",
                "stages": stages.iter().map(|s| &s.args).collect::<Vec<_>>(),
            });
            ensure_parent(&out)?;
            std::fs::write(&out, serde_json::to_string_pretty(&plan)? + "\n").map_err(|e| CliError::from(e).at(&out))?;
        }
    }
    println!("{}", json!({ "figure": figure_name(profile), "output": out.display().to_string() }));
    Ok(())
}

/// Reruns a manifest's command after checking its inputs, then compares the
/// output hashes.
pub fn rerun(path: &Path) -> Result<()> {
    let m = Manifest::load(path)?;
    for (p, h) in &m.inputs {
        if sha256_file(Path::new(p))? != *h {
            return Err(CliError::Domain(format!("input {p} changed since the manifest was written")));
        }
    }
    let argv = std::iter::once("nmqd".to_string()).chain(m.command.iter().cloned()).map(Into::into).collect();
    crate::execute(argv)?;
    let paths: Vec<PathBuf> = m.outputs.keys().map(PathBuf::from).collect();
    let now = hashes(&paths)?;
    let changed: Vec<&String> = m.outputs.iter().filter(|(p, h)| now.get(*p) != Some(h)).map(|(p, _)| p).collect();
    println!("{}", json!({ "manifest": path.display().to_string(), "identical": changed.is_empty(), "changed": changed }));
    if changed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain(format!("rerun of {} changed {} output(s)", path.display(), changed.len())))
    }
}
