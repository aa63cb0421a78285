//! Seeded synthetic traversals of a segmented path.
//!
//! Every segment gets a [`SegmentSignature`]: per-channel baselines, terrain
//! vibration on the accelerometer and gyroscope, a magnetic bump near both
//! segment boundaries, a slow drift on the climate channels and a
//! piecewise-constant light spectrum. Runs walk the segments in order (and
//! back, when the return journey is enabled) with random dwell times. IMU
//! channels are dense at `imu_rate`; ambient channels are only recorded on
//! the ticks nearest to multiples of the ambient sampling period.
//!
//! Signal values are generated in a dimensionless domain where the noise
//! standard deviation equals `noise_scale`, then mapped to sensor units with a
//! fixed per-channel offset and scale.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{full_feature_names, imu_feature_names, PathSpec, SensorRun};
use crate::error::{Error, Result};

const BANK_STREAM: u64 = 0x5167;

/// Minimum baseline gap (dimensionless) required on at least
/// [`MIN_SEPARATED_FEATURES`] channels for every pair of segments.
pub const MIN_BASELINE_SEPARATION: f64 = 0.5;
pub const MIN_SEPARATED_FEATURES: usize = 3;

/// Width (seconds) of the magnetic disturbance around a segment boundary.
const ANOMALY_WIDTH_S: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// IMU plus climate and spectrum channels.
    Full17,
    /// IMU channels only.
    Imu9,
}

impl FeatureSet {
    pub fn feature_names(self) -> Vec<String> {
        match self {
            FeatureSet::Full17 => full_feature_names(),
            FeatureSet::Imu9 => imu_feature_names(),
        }
    }

    pub fn len(self) -> usize {
        match self {
            FeatureSet::Full17 => 17,
            FeatureSet::Imu9 => 9,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Vibration,
    Magnetic,
    Climate,
    Spectrum,
}

/// Channel family plus the affine map from the dimensionless domain to units.
#[derive(Debug, Clone, Copy)]
struct ChannelInfo {
    kind: Channel,
    offset: f64,
    unit: f64,
    ambient: bool,
}

fn channel_info(name: &str) -> ChannelInfo {
    let (kind, offset, unit) = match name {
        "acc_x" | "acc_y" => (Channel::Vibration, 0.0, 0.05),
        "acc_z" => (Channel::Vibration, 1.0, 0.05),
        "gyro_x" | "gyro_y" | "gyro_z" => (Channel::Vibration, 0.0, 2.0),
        "mag_x" => (Channel::Magnetic, 20.0, 3.0),
        "mag_y" => (Channel::Magnetic, -5.0, 3.0),
        "mag_z" => (Channel::Magnetic, 40.0, 3.0),
        "temperature" => (Channel::Climate, 22.0, 0.5),
        "humidity" => (Channel::Climate, 45.0, 2.0),
        "pressure" => (Channel::Climate, 101_325.0, 20.0),
        n if n.starts_with("spectrum") => (Channel::Spectrum, 800.0, 100.0),
        _ => (Channel::Vibration, 0.0, 1.0),
    };
    let ambient = matches!(kind, Channel::Climate | Channel::Spectrum);
    ChannelInfo {
        kind,
        offset,
        unit,
        ambient,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_segments: usize,
    pub n_runs: usize,
    /// Dwell time per segment visit, seconds, drawn uniformly.
    pub segment_duration_range: (f64, f64),
    #[serde(default = "default_imu_rate")]
    pub imu_rate: f64,
    #[serde(default = "default_ambient_rate")]
    pub ambient_rate: f64,
    #[serde(default = "default_true")]
    pub include_return_journey: bool,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    #[serde(default = "default_feature_set")]
    pub feature_set: FeatureSet,
}

fn default_imu_rate() -> f64 {
    24.0
}
fn default_ambient_rate() -> f64 {
    0.14
}
fn default_true() -> bool {
    true
}
fn default_noise() -> f64 {
    1.0
}
fn default_feature_set() -> FeatureSet {
    FeatureSet::Full17
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 42,
            n_segments: 8,
            n_runs: 40,
            segment_duration_range: (2.0, 4.0),
            imu_rate: default_imu_rate(),
            ambient_rate: default_ambient_rate(),
            include_return_journey: true,
            noise_scale: default_noise(),
            feature_set: FeatureSet::Full17,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 2 {
            return Err(Error::config(
                "n_segments",
                format!("need at least 2 segments, got {}", self.n_segments),
            ));
        }
        if self.n_runs == 0 {
            return Err(Error::config("n_runs", "need at least one run"));
        }
        let (lo, hi) = self.segment_duration_range;
        if !(lo > 0.0) || !(hi > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config("segment_duration_range", "durations must be positive"));
        }
        if lo > hi {
            return Err(Error::config("segment_duration_range", "min exceeds max"));
        }
        if !(self.imu_rate > 0.0) || !(self.ambient_rate > 0.0) {
            return Err(Error::config("imu_rate", "sampling rates must be positive"));
        }
        if self.imu_rate <= self.ambient_rate {
            return Err(Error::config("ambient_rate", "ambient rate must be below the IMU rate"));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::config("noise_scale", "must be a non-negative number"));
        }
        Ok(())
    }

    /// The path this configuration describes, with labels `seg_1..seg_l`.
    pub fn path_spec(&self, path_id: &str) -> Result<PathSpec> {
        self.validate()?;
        PathSpec::synthetic(path_id, self.n_segments, self.feature_set.feature_names())
    }

    /// Mean number of IMU ticks between two ambient samples.
    pub fn ambient_period_ticks(&self) -> f64 {
        self.imu_rate / self.ambient_rate
    }
}

/// Deterministic per-segment behavior of every channel (dimensionless).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSignature {
    pub baseline: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub frequency_hz: Vec<f64>,
    pub phase: Vec<f64>,
    /// Climate drift per second spent in the segment.
    pub drift_slope: f64,
    /// Peak magnetic disturbance at the segment boundaries.
    pub anomaly_magnitude: f64,
}

/// One signature per segment of `path`, seeded and independent of any run.
///
/// Baselines are redrawn until every pair of segments differs by at least
/// [`MIN_BASELINE_SEPARATION`] on [`MIN_SEPARATED_FEATURES`] channels.
pub fn signature_bank(seed: u64, path: &PathSpec) -> Vec<SegmentSignature> {
    signature_bank_with_rate(seed, path, default_imu_rate())
}

fn signature_bank_with_rate(seed: u64, path: &PathSpec, imu_rate: f64) -> Vec<SegmentSignature> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BANK_STREAM);
    let n = path.n_features();
    let infos: Vec<ChannelInfo> = path.feature_names.iter().map(|f| channel_info(f)).collect();
    let nyquist = imu_rate / 2.0;
    let mut bank: Vec<SegmentSignature> = Vec::with_capacity(path.n_segments());
    for _ in 0..path.n_segments() {
        let baseline = loop {
            let candidate: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let separated = bank.iter().all(|other| {
                other
                    .baseline
                    .iter()
                    .zip(&candidate)
                    .filter(|(a, b)| (*a - *b).abs() >= MIN_BASELINE_SEPARATION)
                    .count()
                    >= MIN_SEPARATED_FEATURES.min(n)
            });
            if separated {
                break candidate;
            }
        };
        let mut amplitude = vec![0.0; n];
        let mut frequency_hz = vec![0.0; n];
        let mut phase = vec![0.0; n];
        for f in 0..n {
            if infos[f].kind == Channel::Vibration {
                amplitude[f] = rng.random_range(0.0..1.0);
                frequency_hz[f] = rng.random_range(0.5..(0.5 * nyquist).max(0.6));
                phase[f] = rng.random_range(0.0..2.0 * PI);
            }
        }
        bank.push(SegmentSignature {
            baseline,
            amplitude,
            frequency_hz,
            phase,
            drift_slope: rng.random_range(-0.1..0.1),
            anomaly_magnitude: rng.random_range(0.0..2.0),
        });
    }
    bank
}

impl SegmentSignature {
    /// Noise-free dimensionless value of `feature` at `since_start` seconds
    /// into the segment visit and `until_end` seconds before it ends.
    fn dimensionless(&self, feature: usize, kind: Channel, since_start: f64, until_end: f64) -> f64 {
        let base = self.baseline[feature];
        match kind {
            Channel::Vibration => {
                base + self.amplitude[feature]
                    * (2.0 * PI * self.frequency_hz[feature] * since_start + self.phase[feature]).sin()
            }
            Channel::Magnetic => {
                let d = since_start.min(until_end) / ANOMALY_WIDTH_S;
                // channel-dependent sign so the bump is not a pure common mode
                let sign = if feature.is_multiple_of(2) { 1.0 } else { -1.0 };
                base + sign * self.anomaly_magnitude * (-d * d).exp()
            }
            Channel::Climate => base + self.drift_slope * since_start,
            Channel::Spectrum => base,
        }
    }
}

/// Noise-free value of channel `feature` in sensor units.
pub fn expected_value(
    signature: &SegmentSignature,
    path: &PathSpec,
    feature: usize,
    since_start: f64,
    until_end: f64,
) -> f64 {
    let info = channel_info(&path.feature_names[feature]);
    info.offset + info.unit * signature.dimensionless(feature, info.kind, since_start, until_end)
}

/// Segment visit order for one run.
pub fn visit_order(n_segments: usize, include_return_journey: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_segments).collect();
    if include_return_journey {
        order.extend((0..n_segments).rev());
    }
    order
}

/// Generate `config.n_runs` traversals of `path`.
///
/// Run `r` draws from its own generator seeded with `config.seed + r`, so
/// generating runs one at a time gives the same output as all at once.
pub fn generate_runs(config: &SimConfig, path: &PathSpec) -> Result<Vec<SensorRun>> {
    config.validate()?;
    if path.n_features() != config.feature_set.len() {
        return Err(Error::config(
            "feature_set",
            format!(
                "path has {} features but feature set needs {}",
                path.n_features(),
                config.feature_set.len()
            ),
        ));
    }
    if path.n_segments() != config.n_segments {
        return Err(Error::config(
            "n_segments",
            format!(
                "config asks for {} segments but the path has {}",
                config.n_segments,
                path.n_segments()
            ),
        ));
    }
    let bank = signature_bank_with_rate(config.seed, path, config.imu_rate);
    (0..config.n_runs)
        .map(|r| generate_run(config, path, &bank, r))
        .collect()
}

/// Generate run number `index` only.
pub fn generate_run(config: &SimConfig, path: &PathSpec, bank: &[SegmentSignature], index: usize) -> Result<SensorRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
    let infos: Vec<ChannelInfo> = path.feature_names.iter().map(|f| channel_info(f)).collect();
    let order = visit_order(config.n_segments, config.include_return_journey);
    let (lo, hi) = config.segment_duration_range;

    // visit boundaries in ticks
    let dt = 1.0 / config.imu_rate;
    let mut bounds = Vec::with_capacity(order.len());
    let mut start_tick = 0usize;
    for _ in &order {
        let dwell = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let ticks = ((dwell * config.imu_rate).round() as usize).max(1);
        bounds.push((start_tick, start_tick + ticks));
        start_tick += ticks;
    }
    let k = start_tick;

    let period = config.ambient_period_ticks();
    let phase = rng.random_range(0.0..period.min(k as f64));
    let mut ambient_tick = vec![false; k];
    let mut m = 0usize;
    loop {
        let tick = (phase + m as f64 * period).round() as usize;
        if tick >= k {
            break;
        }
        ambient_tick[tick] = true;
        m += 1;
    }

    let n = path.n_features();
    let timestamps: Vec<f64> = (0..k).map(|i| i as f64 * dt).collect();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(k); n];
    let mut labels = Vec::with_capacity(k);
    for (visit, &(a, b)) in bounds.iter().enumerate() {
        let segment = order[visit];
        let sig = &bank[segment];
        for tick in a..b {
            let since_start = (tick - a) as f64 * dt;
            let until_end = (b - tick) as f64 * dt;
            labels.push(segment);
            for f in 0..n {
                let info = infos[f];
                let noise: f64 = if config.noise_scale > 0.0 {
                    config.noise_scale * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                if info.ambient && !ambient_tick[tick] {
                    columns[f].push(None);
                    continue;
                }
                let value = sig.dimensionless(f, info.kind, since_start, until_end) + noise;
                columns[f].push(Some(info.offset + info.unit * value));
            }
        }
    }

    SensorRun::new(
        format!("run_{index:03}"),
        path.feature_names.clone(),
        timestamps,
        columns,
        labels,
        path.n_segments(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SimConfig {
        SimConfig {
            seed: 1,
            n_segments: 4,
            n_runs: 2,
            segment_duration_range: (3.0, 6.0),
            ..SimConfig::default()
        }
    }

    #[test]
    fn labels_walk_forward_then_back() {
        let cfg = small_config();
        let path = cfg.path_spec("p").unwrap();
        let runs = generate_runs(&cfg, &path).unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            let mut blocks: Vec<usize> = Vec::new();
            for &l in &run.labels {
                if blocks.last() != Some(&l) {
                    blocks.push(l);
                }
            }
            // turnaround segment is visited twice in a row, merging into one block
            assert_eq!(blocks, vec![0, 1, 2, 3, 2, 1, 0]);
        }
    }

    #[test]
    fn ambient_columns_mostly_missing() {
        let cfg = small_config();
        let path = cfg.path_spec("p").unwrap();
        let runs = generate_runs(&cfg, &path).unwrap();
        let expected_missing = 1.0 - cfg.ambient_rate / cfg.imu_rate;
        assert!((expected_missing - 0.9942).abs() < 1e-4);
        for run in &runs {
            for (name, col) in run.feature_names.iter().zip(&run.columns) {
                let missing = col.iter().filter(|v| v.is_none()).count() as f64 / col.len() as f64;
                if channel_info(name).ambient {
                    assert!(missing >= 0.99, "{name}: {missing}");
                } else {
                    assert_eq!(missing, 0.0);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let path = cfg.path_spec("p").unwrap();
        assert_eq!(generate_runs(&cfg, &path).unwrap(), generate_runs(&cfg, &path).unwrap());
        let bank = signature_bank(cfg.seed, &path);
        let alone = generate_run(&cfg, &path, &bank, 1).unwrap();
        assert_eq!(alone, generate_runs(&cfg, &path).unwrap()[1]);
    }

    #[test]
    fn zero_noise_matches_signature() {
        let cfg = SimConfig {
            noise_scale: 0.0,
            include_return_journey: false,
            ..small_config()
        };
        let path = cfg.path_spec("p").unwrap();
        let bank = signature_bank(cfg.seed, &path);
        let run = &generate_runs(&cfg, &path).unwrap()[0];
        let dt = 1.0 / cfg.imu_rate;
        let mut start = 0usize;
        while start < run.len() {
            let seg = run.labels[start];
            let end = (start..run.len()).find(|&i| run.labels[i] != seg).unwrap_or(run.len());
            for tick in start..end {
                for f in 0..9 {
                    let want = expected_value(
                        &bank[seg],
                        &path,
                        f,
                        (tick - start) as f64 * dt,
                        (end - tick) as f64 * dt,
                    );
                    assert_eq!(run.columns[f][tick], Some(want));
                }
            }
            start = end;
        }
    }

    #[test]
    fn bank_separation_and_determinism() {
        let path = PathSpec::synthetic("p", 8, full_feature_names()).unwrap();
        let bank = signature_bank(1, &path);
        assert_eq!(bank, signature_bank(1, &path));
        assert_eq!(bank.len(), 8);
        let mut pairs = 0;
        for a in 0..8 {
            for b in a + 1..8 {
                let dist: f64 = bank[a]
                    .baseline
                    .iter()
                    .zip(&bank[b].baseline)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 0.0);
                let separated = bank[a]
                    .baseline
                    .iter()
                    .zip(&bank[b].baseline)
                    .filter(|(x, y)| (*x - *y).abs() >= MIN_BASELINE_SEPARATION)
                    .count();
                assert!(separated >= MIN_SEPARATED_FEATURES);
                pairs += 1;
            }
        }
        assert_eq!(pairs, 28);
        for sig in &bank {
            assert!(sig.amplitude.iter().all(|&a| a >= 0.0));
            assert!(sig.anomaly_magnitude >= 0.0);
            assert!(sig.frequency_hz.iter().all(|&f| f < 12.0));
        }
        let two = PathSpec::synthetic("p", 2, full_feature_names()).unwrap();
        let b2 = signature_bank(1, &two);
        assert_ne!(b2[0].baseline, b2[1].baseline);
    }

    #[test]
    fn config_errors() {
        let mut cfg = small_config();
        cfg.n_segments = 1;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "n_segments"));
        let mut cfg = small_config();
        cfg.segment_duration_range = (0.0, 1.0);
        assert!(cfg.validate().is_err());
        let cfg = small_config();
        let imu_path = PathSpec::synthetic("p", 4, imu_feature_names()).unwrap();
        assert!(generate_runs(&cfg, &imu_path).is_err());
    }
}
