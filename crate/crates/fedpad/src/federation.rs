//! Round-based server/data-center orchestration: local updates, serialized
//! model updates, full and invariant-only aggregation.
//!
//! Rounds are synchronous: every data center participates every round, and a
//! failed update aborts the round. Only model parameters travel; optimizer
//! state stays local and persists across rounds.

use crate::autodiff::{loss_cls, Graph, Optimizer};
use crate::datagen::DomainDataset;
use crate::error::{Error, Result};
use crate::model::{
    total_local_loss, DisentangledModel, LossBreakdown, LossFlags, MonolithicModel,
};
use crate::params::{ParameterSet, Partition};
use crate::tensor::{mix, Rng, Tensor};
use crate::wire::{fnv1a64, Reader, Writer};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

const UPDATE_MAGIC: &[u8; 8] = b"FPADUPD1";
const UPDATE_VERSION: u32 = 1;

/// Records which data center read which domain's samples during training.
/// Used by privacy audit tests.
#[derive(Debug, Default)]
pub struct ReadAudit {
    events: Mutex<Vec<(u64, u64)>>,
}

impl ReadAudit {
    pub fn record(&self, data_center: u64, domain: u64) {
        self.events.lock().unwrap().push((data_center, domain));
    }

    pub fn events(&self) -> Vec<(u64, u64)> {
        self.events.lock().unwrap().clone()
    }
}

/// The local model of a data center.
#[derive(Debug, Clone)]
pub enum ClientModel {
    Monolithic(MonolithicModel),
    Disentangled(DisentangledModel),
}

impl ClientModel {
    pub fn params(&self) -> &ParameterSet {
        match self {
            ClientModel::Monolithic(m) => &m.params,
            ClientModel::Disentangled(m) => &m.params,
        }
    }

    fn params_mut(&mut self) -> &mut ParameterSet {
        match self {
            ClientModel::Monolithic(m) => &mut m.params,
            ClientModel::Disentangled(m) => &mut m.params,
        }
    }
}

/// One federated client. Its dataset is moved in at construction; nothing
/// else ever holds a handle to it.
pub struct DataCenter {
    pub id: u64,
    dataset: DomainDataset,
    pub model: ClientModel,
    pub optimizer: Optimizer,
    pub local_epochs: usize,
    pub batch_size: usize,
    rng: Rng,
    pub flags: LossFlags,
    audit: Option<Arc<ReadAudit>>,
}

impl DataCenter {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u64,
        dataset: DomainDataset,
        model: ClientModel,
        optimizer: Optimizer,
        local_epochs: usize,
        batch_size: usize,
        base_rng: &Rng,
        flags: LossFlags,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        Ok(DataCenter {
            id,
            dataset,
            model,
            optimizer,
            local_epochs,
            batch_size,
            rng: base_rng.substream(mix(0xDC, id)),
            flags,
            audit: None,
        })
    }

    pub fn with_audit(mut self, audit: Arc<ReadAudit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn dataset_len(&self) -> usize {
        self.dataset.len()
    }

    /// Assemble a minibatch (x [n,h,w,c], labels [n], depth [n, dh*dw]).
    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor, Tensor)> {
        if let Some(audit) = &self.audit {
            audit.record(self.id, self.dataset.domain_id);
        }
        batch_tensors(&self.dataset, indices)
    }

    /// One local epoch at a given global epoch index (drives the shuffle
    /// stream so round/epoch structure, not call order, determines batches).
    fn train_epoch(&mut self, global_epoch: u64) -> Result<LossBreakdown> {
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        let mut shuffle_rng = self.rng.substream(mix(0xE0, global_epoch));
        shuffle_rng.shuffle(&mut order);
        let mut acc = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(self.batch_size) {
            let (x, y, depth) = self.batch(chunk)?;
            let mut graph = Graph::new();
            let xn = graph.leaf(x);
            let (loss_node, bd) = match &self.model {
                ClientModel::Monolithic(m) => {
                    let p = m.forward(&mut graph, xn)?;
                    let l = loss_cls(&mut graph, p, &y)?;
                    let bd = LossBreakdown {
                        cls: graph.value(l).item(),
                        total: graph.value(l).item(),
                        ..Default::default()
                    };
                    (l, bd)
                }
                ClientModel::Disentangled(m) => {
                    let out = m.forward(&mut graph, xn)?;
                    let dt = graph.leaf(depth);
                    total_local_loss(&mut graph, &out, xn, &y, dt, self.flags)?
                }
            };
            let grads = graph.param_grads(&graph.backward(loss_node)?);
            self.optimizer.step(self.model.params_mut(), &grads)?;
            acc.cls += bd.cls;
            acc.dep += bd.dep;
            acc.rec += bd.rec;
            acc.diff += bd.diff;
            acc.total += bd.total;
            batches += 1;
        }
        if batches > 0 {
            let n = batches as f64;
            acc.cls /= n;
            acc.dep /= n;
            acc.rec /= n;
            acc.diff /= n;
            acc.total /= n;
        }
        Ok(acc)
    }

    /// Plain centralized training: no server, no serialization, no
    /// aggregation. Epoch indices run through the same stream derivation as
    /// federated rounds, so one client trained here for `rounds * L` epochs
    /// matches the same client inside a single-member federation.
    pub fn train_centralized(&mut self, total_epochs: u64) -> Result<Vec<LossBreakdown>> {
        (0..total_epochs).map(|e| self.train_epoch(e)).collect()
    }

    fn run_local_epochs(&mut self, round: u64) -> Result<LossBreakdown> {
        let mut last = LossBreakdown::default();
        for epoch in 0..self.local_epochs {
            let global_epoch = round * self.local_epochs as u64 + epoch as u64;
            last = self.train_epoch(global_epoch)?;
        }
        Ok(last)
    }
}

pub fn batch_tensors(ds: &DomainDataset, indices: &[usize]) -> Result<(Tensor, Tensor, Tensor)> {
    if indices.is_empty() {
        return Err(Error::Protocol("empty batch".into()));
    }
    let first = &ds.samples[indices[0]];
    let ishape = first.image.shape();
    let dlen = first.depth.len();
    let n = indices.len();
    let mut xdata = Vec::with_capacity(n * first.image.len());
    let mut labels = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n * dlen);
    for &i in indices {
        let s = &ds.samples[i];
        xdata.extend_from_slice(s.image.data());
        labels.push(s.label as f64);
        depths.extend_from_slice(s.depth.data());
    }
    let mut xshape = vec![n];
    xshape.extend_from_slice(ishape);
    Ok((
        Tensor::new(xshape, xdata)?,
        Tensor::new(vec![n], labels)?,
        Tensor::new(vec![n, dlen], depths)?,
    ))
}

/// Serialized parameters from one data center for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdate {
    pub data_center: u64,
    pub round: u64,
    pub params: ParameterSet,
}

impl ModelUpdate {
    /// Self-describing binary record with a trailing FNV-1a checksum.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(UPDATE_MAGIC);
        w.u32(UPDATE_VERSION);
        w.u64(self.round);
        w.u64(self.data_center);
        w.u32(self.params.len() as u32);
        for (name, entry) in self.params.iter() {
            w.u32(name.len() as u32);
            w.bytes(name.as_bytes());
            w.u8(match entry.partition {
                Partition::Invariant => 0,
                Partition::Specific => 1,
            });
            w.u32(entry.tensor.shape().len() as u32);
            for &d in entry.tensor.shape() {
                w.u64(d as u64);
            }
            for &v in entry.tensor.data() {
                w.f64(v);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<ModelUpdate> {
        let mut r = Reader::new_checked(bytes)?;
        if r.bytes(8, "magic")? != UPDATE_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad magic".into(),
            });
        }
        let version = r.u32("version")?;
        if version != UPDATE_VERSION {
            return Err(Error::Version(format!("update version {version}")));
        }
        let round = r.u64("round")?;
        let data_center = r.u64("data_center")?;
        let count = r.u32("entry count")?;
        let mut params = ParameterSet::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.bytes(name_len, "name")?)
                .map_err(|e| Error::Parse {
                    offset: r.pos(),
                    msg: format!("bad name: {e}"),
                })?
                .to_string();
            let partition = match r.u8("partition")? {
                0 => Partition::Invariant,
                1 => Partition::Specific,
                p => {
                    return Err(Error::Parse {
                        offset: r.pos(),
                        msg: format!("bad partition tag {p}"),
                    })
                }
            };
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("dim")? as usize);
            }
            let len = shape.iter().product();
            let tensor = Tensor::new(shape, r.f64_vec(len, "values")?)?;
            params.insert(&name, tensor, partition)?;
        }
        Ok(ModelUpdate {
            data_center,
            round,
            params,
        })
    }

    pub fn checksum(&self) -> u64 {
        let enc = self.encode();
        fnv1a64(&enc[..enc.len() - 8])
    }
}

/// How the server treats uploads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationMode {
    Full,
    InvariantOnly,
}

/// Holds the global parameters between rounds.
#[derive(Debug, Clone)]
pub struct Server {
    pub global: ParameterSet,
    pub round: u64,
    pub mode: AggregationMode,
}

impl Server {
    /// In invariant-only mode the server keeps only invariant entries.
    pub fn new(init: &ParameterSet, mode: AggregationMode) -> Self {
        let global = match mode {
            AggregationMode::Full => init.clone(),
            AggregationMode::InvariantOnly => init.filter(Partition::Invariant),
        };
        Server {
            global,
            round: 0,
            mode,
        }
    }

    /// The artifact users deploy: extractor and classifier only.
    pub fn user_download(&self) -> ParameterSet {
        self.global.filter_prefixes(&["ei.", "c."])
    }
}

/// Unweighted arithmetic mean of the updates. Updates are reordered by data
/// center id first, so the result is exactly permutation invariant.
pub fn aggregate(updates: &[ModelUpdate]) -> Result<ParameterSet> {
    if updates.is_empty() {
        return Err(Error::Protocol("aggregate over zero updates".into()));
    }
    let round = updates[0].round;
    let mut sorted: Vec<&ModelUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.data_center);
    for u in &sorted {
        if u.round != round {
            return Err(Error::Protocol(format!(
                "mixed rounds {} and {} in aggregation",
                round, u.round
            )));
        }
        sorted[0].params.same_schema(&u.params)?;
    }
    let k = sorted.len() as f64;
    let mut out = ParameterSet::new();
    for (name, entry) in sorted[0].params.iter() {
        let mut acc = vec![0.0; entry.tensor.len()];
        for u in &sorted {
            let t = u.params.get(name).unwrap();
            for (a, &v) in acc.iter_mut().zip(t.data()) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= k;
        }
        out.insert(
            name,
            Tensor::new(entry.tensor.shape().to_vec(), acc)?,
            entry.partition,
        )?;
    }
    Ok(out)
}

/// Full-model local update (classification loss only).
pub fn data_center_update_fedpad(
    dc: &mut DataCenter,
    global: &ParameterSet,
    round: u64,
) -> Result<(ModelUpdate, LossBreakdown)> {
    if dc.dataset.is_empty() {
        return Err(Error::Protocol(format!("data center {} has no data", dc.id)));
    }
    dc.model.params().same_schema(global)?;
    dc.model.params_mut().load(global)?;
    let telemetry = dc.run_local_epochs(round)?;
    Ok((
        ModelUpdate {
            data_center: dc.id,
            round,
            params: dc.model.params().clone(),
        },
        telemetry,
    ))
}

/// Invariant-only local update: the global invariant half is loaded, the
/// private specific half stays, training uses the full disentanglement loss
/// and only the invariant partition is uploaded.
pub fn data_center_update_fedgpad(
    dc: &mut DataCenter,
    global_invariant: &ParameterSet,
    round: u64,
) -> Result<(ModelUpdate, LossBreakdown)> {
    if dc.dataset.is_empty() {
        return Err(Error::Protocol(format!("data center {} has no data", dc.id)));
    }
    for (name, entry) in global_invariant.iter() {
        if entry.partition == Partition::Specific {
            return Err(Error::Partition(format!(
                "specific parameter {name} in global download"
            )));
        }
    }
    let local_invariant = dc.model.params().filter(Partition::Invariant);
    local_invariant.same_schema(global_invariant)?;
    dc.model.params_mut().load(global_invariant)?;
    let telemetry = dc.run_local_epochs(round)?;
    Ok((
        ModelUpdate {
            data_center: dc.id,
            round,
            params: dc.model.params().filter(Partition::Invariant),
        },
        telemetry,
    ))
}

/// Per-round, per-data-center loss telemetry plus the aggregate checksum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTelemetry {
    pub round: u64,
    pub per_dc: Vec<DcTelemetry>,
    pub aggregate_checksum: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcTelemetry {
    pub dc_id: u64,
    pub loss: LossBreakdown,
}

fn run_one(dc: &mut DataCenter, mode: AggregationMode, broadcast: &ParameterSet, round: u64) -> Result<(Vec<u8>, DcTelemetry)> {
    let (update, loss) = match mode {
        AggregationMode::Full => data_center_update_fedpad(dc, broadcast, round)?,
        AggregationMode::InvariantOnly => data_center_update_fedgpad(dc, broadcast, round)?,
    };
    Ok((
        update.encode(),
        DcTelemetry {
            dc_id: dc.id,
            loss,
        },
    ))
}

/// T rounds of broadcast, local updates and aggregation. Updates travel
/// through the wire encoding both ways. With `parallel`, data centers run on
/// their own threads; results are identical either way.
pub fn run_rounds(
    server: &mut Server,
    dcs: &mut [DataCenter],
    rounds: u64,
    parallel: bool,
) -> Result<Vec<RoundTelemetry>> {
    if rounds == 0 {
        return Err(Error::Protocol("need at least one round".into()));
    }
    if dcs.is_empty() {
        return Err(Error::Protocol("no data centers".into()));
    }
    let mut telemetry = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        let round = server.round;
        let broadcast = server.global.clone();
        let mode = server.mode;
        let results: Vec<Result<(Vec<u8>, DcTelemetry)>> = if parallel {
            std::thread::scope(|scope| {
                let handles: Vec<_> = dcs
                    .iter_mut()
                    .map(|dc| {
                        let broadcast = &broadcast;
                        scope.spawn(move || run_one(dc, mode, broadcast, round))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            })
        } else {
            dcs.iter_mut()
                .map(|dc| run_one(dc, mode, &broadcast, round))
                .collect()
        };
        let mut updates = Vec::with_capacity(results.len());
        let mut per_dc = Vec::with_capacity(results.len());
        for res in results {
            let (bytes, dct) = res?;
            updates.push(ModelUpdate::decode(&bytes)?);
            per_dc.push(dct);
        }
        per_dc.sort_by_key(|t| t.dc_id);
        server.global = aggregate(&updates)?;
        server.round += 1;
        let checksum = ModelUpdate {
            data_center: u64::MAX,
            round,
            params: server.global.clone(),
        }
        .checksum();
        telemetry.push(RoundTelemetry {
            round,
            per_dc,
            aggregate_checksum: checksum,
        });
    }
    Ok(telemetry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::OptimizerKind;
    use crate::datagen::{generate_family, FamilyConfig};
    use crate::model::{build_disentangled, build_monolithic, ModelConfig};

    fn mean_update(values: &[Vec<f64>]) -> Vec<ModelUpdate> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut params = ParameterSet::new();
                params
                    .insert(
                        "w",
                        Tensor::from_vec(v.clone()).unwrap(),
                        Partition::Invariant,
                    )
                    .unwrap();
                ModelUpdate {
                    data_center: i as u64,
                    round: 0,
                    params,
                }
            })
            .collect()
    }

    #[test]
    fn aggregate_mean_examples() {
        let updates = mean_update(&[vec![1.0, 3.0], vec![3.0, 5.0]]);
        let agg = aggregate(&updates).unwrap();
        assert_eq!(agg.get("w").unwrap().data(), &[2.0, 4.0]);

        let updates = mean_update(&[vec![0.0], vec![0.0], vec![3.0]]);
        let agg = aggregate(&updates).unwrap();
        assert_eq!(agg.get("w").unwrap().data(), &[1.0]);
    }

    #[test]
    fn aggregate_identical_is_identity() {
        let updates = mean_update(&vec![vec![1.5, -2.0]; 4]);
        let agg = aggregate(&updates).unwrap();
        assert_eq!(agg.get("w").unwrap().data(), &[1.5, -2.0]);
    }

    #[test]
    fn aggregate_rejects_empty_and_mismatched() {
        assert!(aggregate(&[]).is_err());
        let mut updates = mean_update(&[vec![1.0], vec![2.0]]);
        updates[1].round = 3;
        assert!(aggregate(&updates).is_err());
    }

    #[test]
    fn aggregate_permutation_invariant_exactly() {
        let mut rng = Rng::new(19, 0);
        let values: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..16).map(|_| rng.next_normal()).collect())
            .collect();
        let updates = mean_update(&values);
        let base = aggregate(&updates).unwrap();
        let mut reversed = updates.clone();
        reversed.reverse();
        let agg = aggregate(&reversed).unwrap();
        assert_eq!(base, agg);
    }

    #[test]
    fn update_round_trips_bit_exactly() {
        let cfg = ModelConfig {
            input_h: 8,
            input_w: 8,
            ..Default::default()
        };
        let model = build_disentangled(&cfg, &mut Rng::new(2, 0)).unwrap();
        let update = ModelUpdate {
            data_center: 3,
            round: 7,
            params: model.params,
        };
        let bytes = update.encode();
        let decoded = ModelUpdate::decode(&bytes).unwrap();
        assert_eq!(update, decoded);
    }

    #[test]
    fn corrupted_update_rejected() {
        let mut params = ParameterSet::new();
        params
            .insert("w", Tensor::from_vec(vec![1.0]).unwrap(), Partition::Invariant)
            .unwrap();
        let update = ModelUpdate {
            data_center: 0,
            round: 0,
            params,
        };
        let mut bytes = update.encode();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(ModelUpdate::decode(&bytes).is_err());
    }

    fn desk_setup(
        mode: AggregationMode,
        seed: u64,
        local_epochs: usize,
        lr: f64,
    ) -> (Server, Vec<DataCenter>) {
        let fam = FamilyConfig::default();
        let base = Rng::new(seed, 0);
        let (train, _) = generate_family(2, 8, &fam, &base).unwrap();
        let cfg = ModelConfig::default();
        let init_rng = base.substream(1);
        let dcs: Vec<DataCenter> = train
            .into_iter()
            .map(|ds| {
                let model = match mode {
                    AggregationMode::Full => ClientModel::Monolithic(
                        build_monolithic(&cfg, &mut init_rng.clone()).unwrap(),
                    ),
                    AggregationMode::InvariantOnly => ClientModel::Disentangled(
                        build_disentangled(&cfg, &mut init_rng.clone()).unwrap(),
                    ),
                };
                DataCenter::new(
                    ds.domain_id,
                    ds,
                    model,
                    Optimizer::new(OptimizerKind::adam(lr)),
                    local_epochs,
                    4,
                    &base,
                    LossFlags::default(),
                )
                .unwrap()
            })
            .collect();
        let server = Server::new(dcs[0].model.params(), mode);
        (server, dcs)
    }

    #[test]
    fn zero_epochs_returns_global_unchanged() {
        let (server, mut dcs) = desk_setup(AggregationMode::Full, 3, 0, 0.1);
        let (update, _) =
            data_center_update_fedpad(&mut dcs[0], &server.global, 0).unwrap();
        assert_eq!(update.params, server.global);
    }

    #[test]
    fn zero_lr_returns_global_unchanged() {
        let (server, mut dcs) = desk_setup(AggregationMode::Full, 3, 1, 0.0);
        let (update, _) =
            data_center_update_fedpad(&mut dcs[0], &server.global, 0).unwrap();
        assert_eq!(update.params, server.global);
    }

    #[test]
    fn fedgpad_zero_lr_keeps_invariant_params() {
        let (server, mut dcs) = desk_setup(AggregationMode::InvariantOnly, 5, 1, 0.0);
        let (update, _) =
            data_center_update_fedgpad(&mut dcs[0], &server.global, 0).unwrap();
        assert_eq!(update.params, server.global);
    }

    #[test]
    fn fedgpad_update_contains_exactly_invariant_keys() {
        let (server, mut dcs) = desk_setup(AggregationMode::InvariantOnly, 7, 1, 0.05);
        let (update, _) =
            data_center_update_fedgpad(&mut dcs[0], &server.global, 0).unwrap();
        assert_eq!(update.params.names(), server.global.names());
        for (name, entry) in update.params.iter() {
            assert_eq!(entry.partition, Partition::Invariant, "{name}");
        }
        // Wire bytes carry no specific-branch names.
        let bytes = update.encode();
        let hay = String::from_utf8_lossy(&bytes);
        assert!(!hay.contains("es."));
        assert!(!hay.contains("dec."));
    }

    #[test]
    fn fedgpad_specific_params_diverge_across_domains() {
        let (mut server, mut dcs) = desk_setup(AggregationMode::InvariantOnly, 9, 1, 0.05);
        run_rounds(&mut server, &mut dcs, 2, false).unwrap();
        let a = dcs[0].model.params().filter(Partition::Specific);
        let b = dcs[1].model.params().filter(Partition::Specific);
        assert_ne!(a, b);
    }

    #[test]
    fn fedgpad_rejects_specific_in_download() {
        let (_, mut dcs) = desk_setup(AggregationMode::InvariantOnly, 7, 1, 0.05);
        let bad = dcs[0].model.params().clone();
        match data_center_update_fedgpad(&mut dcs[0], &bad, 0) {
            Err(Error::Partition(_)) => {}
            other => panic!("expected partition error, got {other:?}"),
        }
    }

    #[test]
    fn lr_zero_rounds_are_a_fixed_point() {
        let (mut server, mut dcs) = desk_setup(AggregationMode::Full, 11, 1, 0.0);
        let before = server.global.clone();
        run_rounds(&mut server, &mut dcs, 3, false).unwrap();
        assert_eq!(server.global, before);
    }

    #[test]
    fn sequential_and_parallel_rounds_agree() {
        let (mut s1, mut d1) = desk_setup(AggregationMode::InvariantOnly, 13, 1, 0.05);
        let (mut s2, mut d2) = desk_setup(AggregationMode::InvariantOnly, 13, 1, 0.05);
        let t1 = run_rounds(&mut s1, &mut d1, 3, false).unwrap();
        let t2 = run_rounds(&mut s2, &mut d2, 3, true).unwrap();
        assert_eq!(s1.global, s2.global);
        let c1: Vec<u64> = t1.iter().map(|r| r.aggregate_checksum).collect();
        let c2: Vec<u64> = t2.iter().map(|r| r.aggregate_checksum).collect();
        assert_eq!(c1, c2);
    }

    #[test]
    fn single_client_single_step_matches_direct_gradient_step() {
        // K=1, L=1, full batch, SGD: the returned update must equal one
        // centralized gradient step computed directly here.
        let fam = FamilyConfig::default();
        let base = Rng::new(21, 0);
        let (train, _) = generate_family(1, 8, &fam, &base).unwrap();
        let ds = train.into_iter().next().unwrap();
        let cfg = ModelConfig::default();
        let lr = 0.1;
        let model = build_monolithic(&cfg, &mut base.substream(1)).unwrap();
        let global = model.params.clone();

        // Oracle: direct forward/backward/SGD outside the federation path,
        // over the same shuffled full-batch order.
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let mut shuffle_rng = base
            .substream(mix(0xDC, ds.domain_id))
            .substream(mix(0xE0, 0));
        shuffle_rng.shuffle(&mut order);
        let (x, y, _) = batch_tensors(&ds, &order).unwrap();
        let mut graph = Graph::new();
        let xn = graph.leaf(x);
        let p = model.forward(&mut graph, xn).unwrap();
        let l = loss_cls(&mut graph, p, &y).unwrap();
        let grads = graph.param_grads(&graph.backward(l).unwrap());
        let mut expected = global.clone();
        for (name, g) in &grads {
            let cur = expected.get(name).unwrap();
            let next = cur.zip(g, "sgd", |pv, gv| pv - lr * gv).unwrap();
            expected.set(name, next).unwrap();
        }

        let mut dc = DataCenter::new(
            ds.domain_id,
            ds,
            ClientModel::Monolithic(model),
            Optimizer::new(OptimizerKind::Sgd { lr }),
            1,
            usize::MAX.min(8),
            &base,
            LossFlags::default(),
        )
        .unwrap();
        dc.batch_size = dc.dataset_len();
        let (update, _) = data_center_update_fedpad(&mut dc, &global, 0).unwrap();
        for (name, entry) in update.params.iter() {
            let e = expected.get(name).unwrap();
            for (a, b) in entry.tensor.data().iter().zip(e.data()) {
                assert!((a - b).abs() < 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn audit_sees_only_own_domain_reads() {
        let (mut server, dcs) = desk_setup(AggregationMode::InvariantOnly, 15, 1, 0.05);
        let audit = Arc::new(ReadAudit::default());
        let mut dcs: Vec<DataCenter> = dcs
            .into_iter()
            .map(|dc| dc.with_audit(audit.clone()))
            .collect();
        run_rounds(&mut server, &mut dcs, 2, true).unwrap();
        let events = audit.events();
        assert!(!events.is_empty());
        for (dc_id, domain) in events {
            assert_eq!(dc_id, domain);
        }
    }
}
