//! Stochastic machinery: confidence-coded matrix sampling, time scaling,
//! structural shocks and the AR(1) dynamic shock, all drawn from
//! reproducible per-purpose sub-streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal, StudentT};

use crate::model::{
    CrossImpactMatrix, Distribution, DynamicShock, Period, StructuralShock, StudySpec,
    UncertaintyConfig, SCORE_MAX, SCORE_MIN,
};
use crate::{Error, Result};

/// What a sub-stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    CimSample = 1,
    StructuralShock = 2,
    DynamicShock = 3,
    Cyclic = 4,
    Robustness = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub run: u64,
    pub period: i64,
    pub purpose: Purpose,
    pub entity: u64,
}

impl StreamId {
    pub fn new(run: u64, period: Period, purpose: Purpose) -> Self {
        Self {
            run,
            period: i64::from(period),
            purpose,
            entity: 0,
        }
    }

    pub fn entity(mut self, entity: u64) -> Self {
        self.entity = entity;
        self
    }
}

/// A deterministic draw sequence keyed by (master seed, stream).
#[derive(Debug, Clone)]
pub struct RandomSource {
    master_seed: u64,
    stream: StreamId,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(master_seed: u64, stream: StreamId) -> Self {
        let mut h = splitmix64(master_seed);
        for word in [
            stream.run,
            stream.period as u64,
            stream.purpose as u64,
            stream.entity,
        ] {
            h = splitmix64(h ^ word);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        Self {
            master_seed,
            stream,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Zero-mean, unit-variance draws from a configured family. Student-t draws
/// are rescaled by √((df−2)/df) so that the stated σ is the standard deviation.
#[derive(Debug, Clone, Copy)]
pub enum UnitSampler {
    Gaussian,
    StudentT { dist: StudentT<f64>, factor: f64 },
}

impl UnitSampler {
    pub fn new(distribution: Distribution) -> Result<Self> {
        match distribution {
            Distribution::Gaussian => Ok(UnitSampler::Gaussian),
            Distribution::StudentT { df } if df > 2 => {
                let df = f64::from(df);
                let dist = StudentT::new(df)
                    .map_err(|e| Error::Config(format!("student_t({df}): {e}")))?;
                Ok(UnitSampler::StudentT {
                    dist,
                    factor: ((df - 2.0) / df).sqrt(),
                })
            }
            Distribution::StudentT { df } => Err(Error::Config(format!(
                "student_t needs df > 2 for a finite standard deviation, got {df}"
            ))),
        }
    }

    pub fn draw(&self, source: &mut RandomSource) -> f64 {
        match self {
            UnitSampler::Gaussian => StandardNormal.sample(&mut source.rng),
            UnitSampler::StudentT { dist, factor } => dist.sample(&mut source.rng) * factor,
        }
    }
}

fn clip(score: f64) -> f64 {
    score.clamp(SCORE_MIN, SCORE_MAX)
}

/// σ for a confidence code at a period: the code's base σ times the period's
/// time-scale factor.
pub fn judgement_sigma(
    uncertainty: &UncertaintyConfig,
    confidence: u8,
    period: Period,
) -> Result<f64> {
    let base = uncertainty.sigma_for_code(confidence).ok_or_else(|| {
        Error::range(
            "confidence",
            format!("confidence {confidence} outside 1..=5"),
        )
    })?;
    let factor = uncertainty.time_scale.get(&period).ok_or_else(|| {
        Error::range(
            "period",
            format!("period {period} has no time-scale factor"),
        )
    })?;
    Ok(base * factor)
}

/// One sampled matrix: every cell drawn independently around its point
/// estimate with its confidence-derived σ at `period`, clipped to the score
/// range. Confidences pass through.
pub fn sample_cim(
    spec: &StudySpec,
    rng: &mut RandomSource,
    period: Period,
) -> Result<CrossImpactMatrix> {
    let sampler = UnitSampler::new(spec.uncertainty.sampling_distribution)?;
    let mut sigma = [0.0; 5];
    for (code, s) in (1..=5u8).zip(sigma.iter_mut()) {
        *s = judgement_sigma(&spec.uncertainty, code, period)?;
    }
    let mut out = spec.cim.clone();
    let confidence: Vec<u8> = spec
        .cim
        .cells()
        .map(|c| spec.cim.get(c).confidence)
        .collect();
    let mut k = 0;
    out.map_scores(|_, mu| {
        let code = confidence[k];
        k += 1;
        let s = sigma[usize::from(code.clamp(1, 5)) - 1];
        if s == 0.0 {
            mu
        } else {
            clip(mu + s * sampler.draw(rng))
        }
    });
    Ok(out)
}

/// Adds an independent draw of standard deviation `scale` to every cell and
/// clips to the score range.
pub fn apply_structural_shock(
    cim: &CrossImpactMatrix,
    rng: &mut RandomSource,
    config: &StructuralShock,
) -> Result<CrossImpactMatrix> {
    if !config.scale.is_finite() || config.scale < 0.0 {
        return Err(Error::Config(format!(
            "structural shock scale {} must be non-negative",
            config.scale
        )));
    }
    let sampler = UnitSampler::new(config.distribution)?;
    let mut out = cim.clone();
    if config.scale == 0.0 {
        return Ok(out);
    }
    out.map_scores(|_, s| clip(s + config.scale * sampler.draw(rng)));
    Ok(out)
}

/// Standard deviation of the AR(1) innovations that gives long-run sd τ.
pub fn innovation_sd(persistence: f64, long_run_sd: f64) -> f64 {
    long_run_sd * (1.0 - persistence * persistence).sqrt()
}

/// AR(1) perturbation η per (descriptor, state), flat in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicShockState {
    pub eta: Vec<f64>,
    pub params: DynamicShock,
}

impl DynamicShockState {
    /// η = 0 everywhere.
    pub fn zeroed(len: usize, params: DynamicShock) -> Self {
        Self {
            eta: vec![0.0; len],
            params,
        }
    }
}

/// One AR(1) step: η ← ρ·η + u with u at scale τ√(1−ρ²).
pub fn advance_dynamic_shock(
    state: &DynamicShockState,
    rng: &mut RandomSource,
) -> Result<DynamicShockState> {
    let p = state.params;
    if !p.persistence.is_finite() || p.persistence.abs() >= 1.0 {
        return Err(Error::Config(format!(
            "AR(1) persistence must satisfy |rho| < 1, got {}",
            p.persistence
        )));
    }
    if !p.long_run_sd.is_finite() || p.long_run_sd < 0.0 {
        return Err(Error::Config(format!(
            "long-run sd {} must be non-negative",
            p.long_run_sd
        )));
    }
    let sampler = UnitSampler::new(p.distribution)?;
    let sd = innovation_sd(p.persistence, p.long_run_sd);
    let eta = state
        .eta
        .iter()
        .map(|&e| {
            let u = if sd == 0.0 {
                0.0
            } else {
                sd * sampler.draw(rng)
            };
            p.persistence * e + u
        })
        .collect();
    Ok(DynamicShockState { eta, params: p })
}
