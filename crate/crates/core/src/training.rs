//! Two-phase training schedule.
//!
//! Phase 1 fits quantization + bit balance on the original images. Phase 2
//! adds a pair term over freshly sampled triplets each epoch (the triplet
//! hinge for the full method, or rotation invariance for the ablation).

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{sample_triplets, Dataset, ImageSample, RotationConfig};
use crate::error::{config_err, Error, Result};
use crate::losses::{combined_loss_with, regularizer_loss, LossReport, LossWeights, PairTerm, TripletConfig};
use crate::network::{sgd_step, NetworkParams, OptimizerState};

pub use crate::losses::PairTerm as Objective;

/// Hashing-layer widths accepted by [`TrainConfig`].
pub const SUPPORTED_BIT_WIDTHS: [usize; 5] = [16, 32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub bit_width: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub triplet: TripletConfig,
    pub rotations: RotationConfig,
    pub triplets_per_epoch: usize,
    /// Pair term used in phase 2.
    pub objective: PairTerm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bit_width: 16,
            phase1_epochs: 15,
            phase2_epochs: 30,
            batch_size: 32,
            learning_rate: 0.001,
            momentum: 0.9,
            seed: 0,
            weights: LossWeights::default(),
            triplet: TripletConfig::default(),
            rotations: RotationConfig::default(),
            triplets_per_epoch: 1000,
            objective: PairTerm::Triplet,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_BIT_WIDTHS.contains(&self.bit_width) {
            return Err(config_err!("bit width {} not in {:?}", self.bit_width, SUPPORTED_BIT_WIDTHS));
        }
        if self.phase1_epochs == 0 && self.phase2_epochs == 0 {
            return Err(config_err!("at least one training phase needs an epoch"));
        }
        if self.batch_size == 0 || self.triplets_per_epoch == 0 {
            return Err(config_err!("batch_size and triplets_per_epoch must be at least 1"));
        }
        // lr = 0 is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err!("momentum must lie in [0, 1)"));
        }
        self.weights.validate()?;
        self.triplet.validate()?;
        self.rotations.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Regularize,
    Pairwise,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Regularize => 1,
            Phase::Pairwise => 2,
        }
    }
}

/// Epoch-mean losses for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// Zero-based, counted across both phases.
    pub epoch: usize,
    pub phase: Phase,
    pub report: LossReport,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub entries: Vec<EpochLog>,
}

impl TrainLog {
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &EpochLog> {
        self.entries.iter().filter(move |e| e.phase == phase)
    }
}

/// Wall-clock source for per-epoch timing.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin.
    fn now(&self) -> f64;
}

/// Reports zero for every epoch.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for SystemClock {
    fn default() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn check_network(params: &NetworkParams, dataset: &Dataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if params.bit_width() != config.bit_width {
        return Err(config_err!(
            "network emits {} bits but the config asks for {}",
            params.bit_width(),
            config.bit_width
        ));
    }
    if params.input_dims() != dataset.dims() {
        return Err(config_err!(
            "network input {:?} does not match dataset dims {:?}",
            params.input_dims(),
            dataset.dims()
        ));
    }
    Ok(())
}

fn non_finite(phase: Phase, epoch: usize, batch: usize, report: &LossReport) -> Error {
    Error::Numeric(format!("phase {} epoch {epoch} batch {batch}: non-finite loss {report:?}", phase.number()))
}

/// Quantization + entropy training over shuffled mini-batches of the original
/// images.
pub fn train_phase1(
    params: NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(NetworkParams, Vec<EpochLog>)> {
    run_phase1(params, dataset, config, clock, 0)
}

fn run_phase1(
    mut params: NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
    first_epoch: usize,
) -> Result<(NetworkParams, Vec<EpochLog>)> {
    check_network(&params, dataset, config)?;
    if dataset.is_empty() {
        return Err(Error::InsufficientData("phase 1 needs at least one image".into()));
    }
    let mut opt = OptimizerState::new(&params, config.learning_rate, config.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.phase1_epochs);

    for e in 0..config.phase1_epochs {
        let start = clock.now();
        order.shuffle(&mut rng);
        let mut reports = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&ImageSample> = chunk.iter().map(|&i| &dataset.samples()[i]).collect();
            let (features, trace) = params.forward(&batch)?;
            let (report, grads) = regularizer_loss(&features, &config.weights)
                .map_err(|err| annotate(err, Phase::Regularize, first_epoch + e, b))?;
            if !report.is_finite() {
                return Err(non_finite(Phase::Regularize, first_epoch + e, b, &report));
            }
            let g = params.backward(trace, &grads)?;
            sgd_step(&mut params, &g, &mut opt).map_err(|err| annotate(err, Phase::Regularize, first_epoch + e, b))?;
            reports.push(report);
        }
        log.push(EpochLog {
            epoch: first_epoch + e,
            phase: Phase::Regularize,
            report: LossReport::mean(&reports),
            seconds: clock.now() - start,
        });
    }
    Ok((params, log))
}

fn annotate(err: Error, phase: Phase, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("phase {} epoch {epoch} batch {batch}: {msg}", phase.number())),
        other => other,
    }
}

/// Fine-tuning with the pair term on triplets drawn afresh each epoch
/// (sub-seed `seed + epoch`).
pub fn train_phase2(
    params: NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(NetworkParams, Vec<EpochLog>)> {
    run_phase2(params, dataset, config, clock, 0)
}

fn run_phase2(
    mut params: NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
    first_epoch: usize,
) -> Result<(NetworkParams, Vec<EpochLog>)> {
    check_network(&params, dataset, config)?;
    if config.phase2_epochs > 0 && dataset.len() < 2 {
        return Err(Error::InsufficientData("phase 2 needs at least two images".into()));
    }
    let mut opt = OptimizerState::new(&params, config.learning_rate, config.momentum)?;
    let mut log = Vec::with_capacity(config.phase2_epochs);

    for e in 0..config.phase2_epochs {
        let start = clock.now();
        let triplets =
            sample_triplets(dataset, &config.rotations, config.seed.wrapping_add(e as u64), config.triplets_per_epoch)?;
        let mut reports = Vec::new();
        for (b, chunk) in triplets.chunks(config.batch_size).enumerate() {
            let t = chunk.len();
            let mut batch: Vec<&ImageSample> = Vec::with_capacity(3 * t);
            batch.extend(chunk.iter().map(|tr| &dataset.samples()[tr.anchor_index]));
            batch.extend(chunk.iter().map(|tr| &tr.positive));
            batch.extend(chunk.iter().map(|tr| &dataset.samples()[tr.negative_index]));

            let (features, trace) = params.forward(&batch)?;
            let (report, grads) = combined_loss_with(
                config.objective,
                &features.slice_rows(0, t),
                &features.slice_rows(t, t),
                &features.slice_rows(2 * t, t),
                &config.weights,
                &config.triplet,
            )
            .map_err(|err| annotate(err, Phase::Pairwise, first_epoch + e, b))?;
            if !report.is_finite() {
                return Err(non_finite(Phase::Pairwise, first_epoch + e, b, &report));
            }
            let stacked = crate::matrix::FeatureMatrix::vstack(&[&grads.anchors, &grads.positives, &grads.negatives])?;
            let g = params.backward(trace, &stacked)?;
            sgd_step(&mut params, &g, &mut opt).map_err(|err| annotate(err, Phase::Pairwise, first_epoch + e, b))?;
            reports.push(report);
        }
        log.push(EpochLog {
            epoch: first_epoch + e,
            phase: Phase::Pairwise,
            report: LossReport::mean(&reports),
            seconds: clock.now() - start,
        });
    }
    Ok((params, log))
}

/// Phase 1 followed by phase 2.
pub fn train(
    params: NetworkParams,
    dataset: &Dataset,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(NetworkParams, TrainLog)> {
    check_network(&params, dataset, config)?;
    let (params, mut entries) = run_phase1(params, dataset, config, clock, 0)?;
    let (params, p2) = run_phase2(params, dataset, config, clock, config.phase1_epochs)?;
    entries.extend(p2);
    Ok((params, TrainLog { entries }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dims;
    use crate::network::{build_network, LayerSpec};
    use alloc::vec;

    fn blobs(n: usize) -> Dataset {
        let dims = Dims::new(8, 8, 1);
        let images = (0..n)
            .map(|i| {
                (0..64)
                    .map(|p| {
                        let (y, x) = ((p / 8) as f64, (p % 8) as f64);
                        let (cy, cx) = ((i % 4) as f64 + 2.0, (i / 4 % 4) as f64 + 2.0);
                        libm::exp(-((y - cy).powi(2) + (x - cx).powi(2)) / 3.0)
                    })
                    .collect()
            })
            .collect();
        Dataset::from_pixels("blobs", dims, images, None).unwrap()
    }

    fn small_net(seed: u64) -> NetworkParams {
        let layers = vec![
            LayerSpec::Convolution { out_channels: 4, kernel: 3, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::FullyConnected { out_dim: 16 },
            LayerSpec::Relu,
        ];
        build_network(&layers, Dims::new(8, 8, 1), seed).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            phase1_epochs: 2,
            phase2_epochs: 2,
            batch_size: 8,
            triplets_per_epoch: 24,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn empty_phases_leave_params_alone() {
        let ds = blobs(20);
        let net = small_net(1);
        let c = TrainConfig { phase1_epochs: 0, ..cfg() };
        let (p, log) = train_phase1(net.clone(), &ds, &c, &NoClock).unwrap();
        assert_eq!(p, net);
        assert!(log.is_empty());
        let c = TrainConfig { phase2_epochs: 0, ..cfg() };
        let (p, log) = train_phase2(net.clone(), &ds, &c, &NoClock).unwrap();
        assert_eq!(p, net);
        assert!(log.is_empty());
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let ds = blobs(20);
        let net = small_net(1);
        let c = TrainConfig { learning_rate: 0.0, ..cfg() };
        let (p, log) = train(net.clone(), &ds, &c, &NoClock).unwrap();
        assert_eq!(p, net);
        assert_eq!(log.entries.len(), 4);
    }

    #[test]
    fn training_is_deterministic_and_phase1_has_no_pair_term() {
        let ds = blobs(20);
        let (a, log_a) = train(small_net(1), &ds, &cfg(), &NoClock).unwrap();
        let (b, log_b) = train(small_net(1), &ds, &cfg(), &NoClock).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert!(log_a.phase(Phase::Regularize).all(|e| e.report.l_triplet == 0.0));
        assert_eq!(log_a.entries.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn phase1_only_matches_train_phase1() {
        let ds = blobs(20);
        let c = TrainConfig { phase2_epochs: 0, ..cfg() };
        let (a, log) = train(small_net(2), &ds, &c, &NoClock).unwrap();
        let (b, p1) = train_phase1(small_net(2), &ds, &c, &NoClock).unwrap();
        assert_eq!(a, b);
        assert_eq!(log.entries, p1);
    }

    #[test]
    fn config_validation() {
        let ds = blobs(4);
        let both_zero = TrainConfig { phase1_epochs: 0, phase2_epochs: 0, ..cfg() };
        assert!(matches!(train(small_net(0), &ds, &both_zero, &NoClock), Err(Error::Config(_))));
        let wrong_bits = TrainConfig { bit_width: 32, ..cfg() };
        assert!(train(small_net(0), &ds, &wrong_bits, &NoClock).is_err());
        assert!(TrainConfig { bit_width: 12, ..cfg() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..cfg() }.validate().is_err());
        let one = blobs(1);
        assert!(matches!(train_phase2(small_net(0), &one, &cfg(), &NoClock), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn divergence_is_reported_as_numeric() {
        let ds = blobs(16);
        let c = TrainConfig { learning_rate: 1e200, momentum: 0.0, ..cfg() };
        match train(small_net(1), &ds, &c, &NoClock) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("epoch"), "{msg}"),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }
}
