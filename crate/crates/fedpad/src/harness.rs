//! Experiment runner: mode dispatch, scoring, artifacts, sweeps.

use crate::autodiff::{Graph, Optimizer, OptimizerKind};
use crate::config::{DataSource, ExperimentConfig, Mode, OptimizerConfig};
use crate::datagen::{generate_family, load_dataset, DomainDataset, Sample};
use crate::error::{Error, Result};
use crate::federation::{
    batch_tensors, run_rounds, AggregationMode, ClientModel, DataCenter, RoundTelemetry, Server,
};
use crate::metrics::{evaluate, EvalReport, ScoreSet, Source};
use crate::model::{build_disentangled, build_monolithic, MonolithicModel};
use crate::params::ParameterSet;
use crate::tensor::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Everything one run produced, stored as `run.json` in the run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub mode: String,
    pub user_domain: usize,
    pub telemetry: Vec<RoundTelemetry>,
    pub report: EvalReport,
    pub wall_secs: f64,
}

/// The domain pool: training datasets plus the held-out user dataset.
pub struct DomainPool {
    pub train: Vec<DomainDataset>,
    pub user: DomainDataset,
}

/// Materialize the pool and split out the configured user domain.
pub fn load_pool(cfg: &ExperimentConfig) -> Result<DomainPool> {
    let mut pool: Vec<DomainDataset> = match &cfg.data {
        DataSource::Synthetic {
            n_domains,
            per_domain,
            family,
        } => {
            let rng = Rng::new(cfg.seed, 0);
            let (mut train, heldout) = generate_family(*n_domains, *per_domain, family, &rng)?;
            train.push(heldout);
            train
        }
        DataSource::Paths { domains } => domains
            .iter()
            .map(|p| load_dataset(p))
            .collect::<Result<Vec<_>>>()?,
    };
    let user_idx = cfg.effective_user_domain();
    if user_idx >= pool.len() {
        return Err(Error::Config(format!(
            "user_domain {} out of range for pool of {}",
            user_idx,
            pool.len()
        )));
    }
    let user = pool.remove(user_idx);
    Ok(DomainPool { train: pool, user })
}

fn build_optimizer(cfg: &ExperimentConfig) -> Optimizer {
    Optimizer::new(match cfg.optimizer {
        OptimizerConfig::Sgd { lr } => OptimizerKind::Sgd { lr },
        OptimizerConfig::Adam { lr } => OptimizerKind::adam(lr),
    })
}

/// Classifier scores (pre-sigmoid logits, monotone in the real-face
/// probability) for every sample, in dataset order. Forward passes run in
/// bounded chunks.
pub fn score_dataset(model: &MonolithicModel, ds: &DomainDataset) -> Result<Vec<(f64, u8)>> {
    let mut out = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(64) {
        let (x, _, _) = batch_tensors(ds, chunk)?;
        let mut graph = Graph::new();
        let xn = graph.leaf(x);
        let logits = model.forward_logits(&mut graph, xn)?;
        let values = graph.value(logits);
        for (&i, &p) in chunk.iter().zip(values.data()) {
            out.push((p, ds.samples[i].label));
        }
    }
    Ok(out)
}

/// Load shared `ei.*`/`c.*` weights into a fresh deployment model.
fn deployment_model(cfg: &ExperimentConfig, shared: &ParameterSet) -> Result<MonolithicModel> {
    let mut model = build_monolithic(&cfg.model, &mut Rng::new(0, 0))?;
    model.params.load(shared)?;
    Ok(model)
}

fn make_dc(
    cfg: &ExperimentConfig,
    ds: DomainDataset,
    model: ClientModel,
    base: &Rng,
) -> Result<DataCenter> {
    DataCenter::new(
        ds.domain_id,
        ds,
        model,
        build_optimizer(cfg),
        cfg.local_epochs,
        cfg.effective_batch_size(),
        base,
        cfg.losses,
    )
}

/// Initial weights shared by every mode for a given seed.
fn init_rng(cfg: &ExperimentConfig) -> Rng {
    Rng::new(cfg.seed, 0).substream(0x11)
}

struct TrainedScores {
    user: Vec<(f64, u8)>,
    dev: Vec<(f64, u8)>,
    telemetry: Vec<RoundTelemetry>,
}

fn centralized_run(
    cfg: &ExperimentConfig,
    train: DomainDataset,
    pool_train: &[DomainDataset],
    user: &DomainDataset,
) -> Result<TrainedScores> {
    let model = ClientModel::Monolithic(build_monolithic(&cfg.model, &mut init_rng(cfg))?);
    let base = Rng::new(cfg.seed, 0);
    let mut dc = make_dc(cfg, train, model, &base)?;
    let losses = dc.train_centralized(cfg.rounds * cfg.local_epochs as u64)?;
    let telemetry = losses
        .into_iter()
        .enumerate()
        .map(|(i, loss)| RoundTelemetry {
            round: i as u64,
            per_dc: vec![crate::federation::DcTelemetry {
                dc_id: dc.id,
                loss,
            }],
            aggregate_checksum: 0,
        })
        .collect();
    let final_model = match &dc.model {
        ClientModel::Monolithic(m) => m.clone(),
        ClientModel::Disentangled(_) => unreachable!("centralized runs are monolithic"),
    };
    let mut dev = Vec::new();
    for ds in pool_train {
        dev.extend(score_dataset(&final_model, ds)?);
    }
    Ok(TrainedScores {
        user: score_dataset(&final_model, user)?,
        dev,
        telemetry,
    })
}

fn union_dataset(domains: &[DomainDataset]) -> Result<DomainDataset> {
    if domains.is_empty() {
        return Err(Error::Config("union over zero domains".into()));
    }
    let mut samples: Vec<Sample> = Vec::new();
    for d in domains {
        samples.extend(d.samples.iter().cloned());
    }
    let ds = DomainDataset {
        domain_id: domains[0].domain_id,
        samples,
        recipe: domains[0].recipe.clone(),
    };
    ds.validate()?;
    Ok(ds)
}

fn federated_run(
    cfg: &ExperimentConfig,
    train: Vec<DomainDataset>,
    user: &DomainDataset,
    mode: AggregationMode,
) -> Result<TrainedScores> {
    let base = Rng::new(cfg.seed, 0);
    let mut irng = init_rng(cfg);
    let (init, dcs): (ParameterSet, Vec<DataCenter>) = match mode {
        AggregationMode::Full => {
            let model = build_monolithic(&cfg.model, &mut irng)?;
            let init = model.params.clone();
            let dcs = train
                .into_iter()
                .map(|ds| make_dc(cfg, ds, ClientModel::Monolithic(model.clone()), &base))
                .collect::<Result<Vec<_>>>()?;
            (init, dcs)
        }
        AggregationMode::InvariantOnly => {
            let model = build_disentangled(&cfg.model, &mut irng)?;
            let init = model.params.clone();
            let dcs = train
                .into_iter()
                .map(|ds| make_dc(cfg, ds, ClientModel::Disentangled(model.clone()), &base))
                .collect::<Result<Vec<_>>>()?;
            (init, dcs)
        }
    };
    let mut dcs = dcs;
    let mut server = Server::new(&init, mode);
    let telemetry = run_rounds(&mut server, &mut dcs, cfg.rounds, cfg.parallel)?;
    let final_model = deployment_model(cfg, &server.user_download())?;
    // Dev scores come from the datasets the data centers trained on; the
    // harness keeps its own clones so the privacy contract stays intact.
    let dev_sets = dev_clones(cfg)?;
    let mut dev = Vec::new();
    for ds in &dev_sets {
        dev.extend(score_dataset(&final_model, ds)?);
    }
    Ok(TrainedScores {
        user: score_dataset(&final_model, user)?,
        dev,
        telemetry,
    })
}

/// Regenerate/reload training-domain datasets for threshold calibration.
fn dev_clones(cfg: &ExperimentConfig) -> Result<Vec<DomainDataset>> {
    Ok(load_pool(cfg)?.train)
}

fn fused_run(
    cfg: &ExperimentConfig,
    train: Vec<DomainDataset>,
    user: &DomainDataset,
) -> Result<TrainedScores> {
    let base = Rng::new(cfg.seed, 0);
    let mut models = Vec::with_capacity(train.len());
    let mut telemetry = Vec::new();
    for ds in train {
        let model = ClientModel::Monolithic(build_monolithic(&cfg.model, &mut init_rng(cfg))?);
        let mut dc = make_dc(cfg, ds, model, &base)?;
        let losses = dc.train_centralized(cfg.rounds * cfg.local_epochs as u64)?;
        for (i, loss) in losses.into_iter().enumerate() {
            telemetry.push(RoundTelemetry {
                round: i as u64,
                per_dc: vec![crate::federation::DcTelemetry {
                    dc_id: dc.id,
                    loss,
                }],
                aggregate_checksum: 0,
            });
        }
        match dc.model {
            ClientModel::Monolithic(m) => models.push(m),
            ClientModel::Disentangled(_) => unreachable!(),
        }
    }
    let dev_sets = dev_clones(cfg)?;
    let average = |ds: &DomainDataset| -> Result<Vec<(f64, u8)>> {
        let per_model: Vec<Vec<(f64, u8)>> = models
            .iter()
            .map(|m| score_dataset(m, ds))
            .collect::<Result<Vec<_>>>()?;
        let n = per_model[0].len();
        let k = per_model.len() as f64;
        Ok((0..n)
            .map(|i| {
                let s = per_model.iter().map(|v| v[i].0).sum::<f64>() / k;
                (s, per_model[0][i].1)
            })
            .collect())
    };
    let mut dev = Vec::new();
    for ds in &dev_sets {
        dev.extend(average(ds)?);
    }
    Ok(TrainedScores {
        user: average(user)?,
        dev,
        telemetry,
    })
}

/// Train and evaluate one experiment; writes nothing.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = load_pool(cfg)?;
    let DomainPool { train, user } = pool;
    let scores = match cfg.mode {
        Mode::Single => {
            let ds = train
                .get(cfg.single_train_domain)
                .cloned()
                .ok_or_else(|| Error::Config("single_train_domain out of range".into()))?;
            centralized_run(cfg, ds, &train, &user)?
        }
        Mode::All => {
            let union = union_dataset(&train)?;
            centralized_run(cfg, union, &train, &user)?
        }
        Mode::Fused => fused_run(cfg, train, &user)?,
        Mode::FedPad => federated_run(cfg, train, &user, AggregationMode::Full)?,
        Mode::FedGpad => federated_run(cfg, train, &user, AggregationMode::InvariantOnly)?,
    };
    let user_set = ScoreSet::new(scores.user, Source::User)?;
    let dev_set = ScoreSet::new(scores.dev, Source::DataCenterPool)?;
    let report = evaluate(&user_set, &dev_set)?;
    Ok(RunRecord {
        config_hash: cfg.content_hash(),
        mode: cfg.mode.as_str().to_string(),
        user_domain: cfg.effective_user_domain(),
        telemetry: scores.telemetry,
        report,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn csv_f(v: f64) -> String {
    format!("{v:.12}")
}

/// Write run.json, summary.csv, telemetry.csv and roc_user.csv under
/// `out_dir/<config hash>/`. Returns the run directory.
pub fn write_artifacts(cfg: &ExperimentConfig, record: &RunRecord) -> Result<PathBuf> {
    let dir = cfg.out_dir.join(&record.config_hash);
    std::fs::create_dir_all(&dir)?;
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Config(format!("serialize run record: {e}")))?;
    std::fs::write(dir.join("run.json"), json)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(std::slice::from_ref(record)))?;

    let mut tele = String::from("round,dc_id,loss_cls,loss_dep,loss_rec,loss_diff,loss_total\n");
    for rt in &record.telemetry {
        for dc in &rt.per_dc {
            tele.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rt.round,
                dc.dc_id,
                csv_f(dc.loss.cls),
                csv_f(dc.loss.dep),
                csv_f(dc.loss.rec),
                csv_f(dc.loss.diff),
                csv_f(dc.loss.total),
            ));
        }
    }
    std::fs::write(dir.join("telemetry.csv"), tele)?;

    let mut roc = String::from("threshold,fpr,tpr\n");
    for p in &record.report.roc {
        roc.push_str(&format!("{},{},{}\n", p.threshold, csv_f(p.fpr), csv_f(p.tpr)));
    }
    std::fs::write(dir.join("roc_user.csv"), roc)?;
    Ok(dir)
}

/// One row per record plus, for several records, an `avg` row.
pub fn summary_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("mode,user_domain,hter,eer,auc\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.mode,
            r.user_domain,
            csv_f(r.report.hter),
            csv_f(r.report.eer),
            csv_f(r.report.auc),
        ));
    }
    if records.len() > 1 {
        let n = records.len() as f64;
        let hter = records.iter().map(|r| r.report.hter).sum::<f64>() / n;
        let eer = records.iter().map(|r| r.report.eer).sum::<f64>() / n;
        let auc = records.iter().map(|r| r.report.auc).sum::<f64>() / n;
        out.push_str(&format!(
            "{},avg,{},{},{}\n",
            records[0].mode,
            csv_f(hter),
            csv_f(eer),
            csv_f(auc)
        ));
    }
    out
}

/// One run per pool domain playing the user role, plus a summary CSV with
/// per-domain rows and an average row. Completed runs (matching run.json
/// already on disk) are reused, so interrupted sweeps resume.
pub fn sweep_leave_one_out(base: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let pool = base.pool_size();
    if pool < 2 {
        return Err(Error::Config("sweep needs at least two domains".into()));
    }
    let mut records = Vec::with_capacity(pool);
    for user in 0..pool {
        let mut cfg = base.clone();
        cfg.user_domain = Some(user);
        cfg.validate()?;
        let existing = cfg.out_dir.join(cfg.content_hash()).join("run.json");
        let record = match std::fs::read_to_string(&existing) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("stored run record: {e}")))?,
            Err(_) => {
                let record = run(&cfg)?;
                write_artifacts(&cfg, &record)?;
                record
            }
        };
        records.push(record);
    }
    std::fs::create_dir_all(&base.out_dir)?;
    std::fs::write(base.out_dir.join("sweep_summary.csv"), summary_csv(&records))?;
    Ok(records)
}

/// Re-render summary/telemetry/ROC CSVs from every stored run.json below
/// `out_dir`.
pub fn report(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    report_dir(&cfg.out_dir)
}

pub fn report_dir(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rendered = Vec::new();
    let mut records = Vec::new();
    for entry in std::fs::read_dir(out_dir)? {
        let path = entry?.path();
        let run_file = path.join("run.json");
        if !run_file.is_file() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(&std::fs::read_to_string(&run_file)?)
            .map_err(|e| Error::Config(format!("stored run record {run_file:?}: {e}")))?;
        std::fs::write(
            path.join("summary.csv"),
            summary_csv(std::slice::from_ref(&record)),
        )?;
        rendered.push(path);
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Config(format!("no run records under {out_dir:?}")));
    }
    records.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
    std::fs::write(out_dir.join("sweep_summary.csv"), summary_csv(&records))?;
    Ok(rendered)
}
