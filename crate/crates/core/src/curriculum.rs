//! Resource-tiered curriculum: per-pair loss weights that switch tiers on
//! over training, the sampling mixture derived from them, and batch
//! sampling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::ParallelRecord;
use crate::registry::{LanguagePair, Registry, ResourceTier};

/// One value per resource tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierValues {
    pub high: f64,
    pub medium: f64,
    pub low: f64,
    pub very_low: f64,
}

impl TierValues {
    pub const fn splat(v: f64) -> Self {
        Self {
            high: v,
            medium: v,
            low: v,
            very_low: v,
        }
    }

    pub fn get(&self, tier: ResourceTier) -> f64 {
        match tier {
            ResourceTier::High => self.high,
            ResourceTier::Medium => self.medium,
            ResourceTier::Low => self.low,
            ResourceTier::VeryLow => self.very_low,
        }
    }

    pub fn in_tier_order(&self) -> [f64; 4] {
        [self.high, self.medium, self.low, self.very_low]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumMode {
    /// Tiers switch on at their phase start and ramp up linearly.
    #[default]
    Weighted,
    /// Every pair has weight 1 from the first step.
    Uniform,
    /// Tiers switch on at their phase start with weight 1 and no ramp.
    Ordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSchedule {
    pub total_steps: u64,
    /// Fractions of `total_steps` at which each tier becomes active.
    pub phase_starts: TierValues,
    pub ramp_fraction: f64,
    pub final_weights: TierValues,
    pub zh_target_min_fraction: f64,
    pub mode: CurriculumMode,
    /// Divide the weighted loss sum by the weight sum.
    pub normalize_loss: bool,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            phase_starts: TierValues {
                high: 0.0,
                medium: 0.25,
                low: 0.5,
                very_low: 0.75,
            },
            ramp_fraction: 0.1,
            final_weights: TierValues::splat(1.0),
            zh_target_min_fraction: 0.5,
            mode: CurriculumMode::Weighted,
            normalize_loss: true,
        }
    }
}

impl CurriculumSchedule {
    pub fn with_steps(total_steps: u64) -> Self {
        Self {
            total_steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Curriculum(m));
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        let starts = self.phase_starts.in_tier_order();
        if starts[0] != 0.0 {
            return bad(format!("the high tier must start at 0, got {}", starts[0]));
        }
        if starts.windows(2).any(|w| w[1] < w[0]) || starts.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad(format!("phase starts must be nondecreasing fractions, got {starts:?}"));
        }
        if self.final_weights.in_tier_order().iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("final weights must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.ramp_fraction) {
            return bad(format!("ramp_fraction must be in [0, 1], got {}", self.ramp_fraction));
        }
        if !(0.0..=1.0).contains(&self.zh_target_min_fraction) {
            return bad(format!(
                "zh_target_min_fraction must be in [0, 1], got {}",
                self.zh_target_min_fraction
            ));
        }
        Ok(())
    }

    /// Weight of a tier at `step`.
    pub fn tier_weight(&self, step: u64, tier: ResourceTier) -> f64 {
        let final_w = self.final_weights.get(tier);
        let start = self.phase_starts.get(tier) * self.total_steps as f64;
        let step = step as f64;
        match self.mode {
            CurriculumMode::Uniform => 1.0,
            CurriculumMode::Ordered => {
                if step >= start {
                    1.0
                } else {
                    0.0
                }
            }
            CurriculumMode::Weighted => {
                if start == 0.0 {
                    return final_w;
                }
                if step < start {
                    return 0.0;
                }
                let ramp = self.ramp_fraction * self.total_steps as f64;
                if ramp == 0.0 {
                    return final_w;
                }
                final_w * ((step - start) / ramp).min(1.0)
            }
        }
    }

    pub fn weight_at(&self, step: u64, pair: LanguagePair, registry: &Registry) -> Result<f64> {
        Ok(self.tier_weight(step, registry.pair_tier(pair)?))
    }
}

/// Sampling probabilities of every candidate pair at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureSnapshot {
    pub step: u64,
    pub probabilities: BTreeMap<LanguagePair, f64>,
}

impl MixtureSnapshot {
    pub fn zh_target_mass(&self) -> f64 {
        self.probabilities
            .iter()
            .filter(|(p, _)| p.targets_chinese())
            .map(|(_, v)| v)
            .sum()
    }

    /// `step pair probability` rows, one per pair.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (pair, p) in &self.probabilities {
            let _ = writeln!(out, "{}\t{pair}\t{p:.6}", self.step);
        }
        out
    }

    fn cumulative(&self) -> Vec<(LanguagePair, f64)> {
        let mut acc = 0.0;
        self.probabilities
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|(pair, p)| {
                acc += p;
                (*pair, acc)
            })
            .collect()
    }
}

pub fn mixture_at(step: u64, pairs: &[LanguagePair], schedule: &CurriculumSchedule, registry: &Registry) -> Result<MixtureSnapshot> {
    let mut weights = BTreeMap::new();
    for &p in pairs {
        weights.insert(p, schedule.weight_at(step, p, registry)?);
    }
    let total: f64 = weights.values().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMixture { step });
    }
    let mut probabilities: BTreeMap<LanguagePair, f64> = weights.into_iter().map(|(p, w)| (p, w / total)).collect();

    let zh: f64 = probabilities
        .iter()
        .filter(|(p, _)| p.targets_chinese())
        .map(|(_, v)| v)
        .sum();
    let min = schedule.zh_target_min_fraction;
    if zh > 0.0 && zh < min {
        // zh < min <= 1 so the non-zh mass is positive
        let (up, down) = (min / zh, (1.0 - min) / (1.0 - zh));
        for (pair, v) in probabilities.iter_mut() {
            *v *= if pair.targets_chinese() { up } else { down };
        }
    }
    Ok(MixtureSnapshot { step, probabilities })
}

/// Weighted combination of per-pair losses at `step`. With `normalize_loss`
/// the weighted sum is divided by the weight sum.
pub fn total_loss(
    losses: &BTreeMap<LanguagePair, f64>,
    step: u64,
    schedule: &CurriculumSchedule,
    registry: &Registry,
) -> Result<f64> {
    let mut weighted = Vec::with_capacity(losses.len());
    for (&pair, &loss) in losses {
        if !loss.is_finite() {
            return Err(Error::Curriculum(format!("non-finite loss {loss} for {pair}")));
        }
        weighted.push((schedule.weight_at(step, pair, registry)?, loss));
    }
    let wsum: f64 = weighted.iter().map(|(w, _)| w).sum();
    if !(wsum > 0.0) {
        return Err(Error::ZeroMixture { step });
    }
    let sum: f64 = weighted.iter().map(|(w, l)| w * l).sum();
    if !schedule.normalize_loss {
        return Ok(sum);
    }
    if weighted.iter().all(|(w, _)| *w == weighted[0].0) {
        // equal weights cancel; avoids rounding from the multiplications
        return Ok(weighted.iter().map(|(_, l)| l).sum::<f64>() / weighted.len() as f64);
    }
    Ok(sum / wsum)
}

/// Draws `batch_size` (pair, record index) positions from the mixture.
pub fn sample_indices<R: Rng + ?Sized>(
    step: u64,
    rng: &mut R,
    datasets: &BTreeMap<LanguagePair, Vec<ParallelRecord>>,
    schedule: &CurriculumSchedule,
    registry: &Registry,
    batch_size: usize,
) -> Result<Vec<(LanguagePair, usize)>> {
    if batch_size == 0 {
        return Ok(Vec::new());
    }
    let pairs: Vec<LanguagePair> = datasets.keys().copied().collect();
    let mixture = mixture_at(step, &pairs, schedule, registry)?;
    let cumulative = mixture.cumulative();
    for (pair, _) in &cumulative {
        if datasets[pair].is_empty() {
            return Err(Error::EmptyDataset { pair: pair.to_string() });
        }
    }
    let last = cumulative.len() - 1;
    Ok((0..batch_size)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * cumulative[last].1;
            let k = cumulative.partition_point(|(_, c)| *c <= u).min(last);
            let pair = cumulative[k].0;
            (pair, rng.random_range(0..datasets[&pair].len()))
        })
        .collect())
}

pub fn sample_batch<R: Rng + ?Sized>(
    step: u64,
    rng: &mut R,
    datasets: &BTreeMap<LanguagePair, Vec<ParallelRecord>>,
    schedule: &CurriculumSchedule,
    registry: &Registry,
    batch_size: usize,
) -> Result<Vec<ParallelRecord>> {
    Ok(sample_indices(step, rng, datasets, schedule, registry, batch_size)?
        .into_iter()
        .map(|(pair, i)| datasets[&pair][i].clone())
        .collect())
}
