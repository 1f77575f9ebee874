//! Monte Carlo and series oracles for the closed-form valuations.
//!
//! Everything here prices dividend streams the slow way — by simulating paths
//! or summing the discounted series term by term — so the analytic modules
//! can be checked against an implementation that shares none of their
//! algebra. Results are reproducible: path `p` under seed `s` consumes its
//! own counter-based generator, and summaries are reduced serially in path
//! order, so a run is bit-identical regardless of how many threads execute
//! it.

use rayon::prelude::*;
use serde::Serialize;

use crate::binomial::{
    self, BinomialAdditiveParams, BinomialGeometricParams, GeneralizedOutcomes, TrinomialParams,
};
use crate::deterministic::{
    gordon_price, h_model_price, three_stage_price, two_stage_price, GordonParams, HModelParams,
    ThreeStageParams, TwoStageParams,
};
use crate::error::{Condition, DdmError, Result};
use crate::linalg::neumaier_sum;
use crate::markov::check_conditions;
use crate::multivariate::{check_multi_conditions, JointState, MtdModel};
use crate::types::MarkovGrowthModel;

/// Simulated horizons never exceed this many periods.
const HORIZON_CAP: usize = 2_000_000;
/// Series summations never exceed this many terms.
const SERIES_CAP: usize = 20_000_000;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator giving every simulated path its own stream.
///
/// A path's draws depend only on `(seed, stream)`, never on how work is
/// scheduled across threads.
#[derive(Debug, Clone)]
pub struct PathRng {
    state: u64,
    spare_gaussian: Option<f64>,
}

impl PathRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        PathRng {
            state: mix64(seed) ^ mix64(stream ^ GOLDEN),
            spare_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the polar-free Box-Muller transform; draws come
    /// out in pairs, so the second is cached.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // Shift into (0, 1] so the logarithm stays finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Samples an index from an outcome list; `None` is the residual mass
    /// `1 - sum(probabilities)`.
    pub fn sample_outcome(&mut self, probabilities: &[f64]) -> Option<usize> {
        let u = self.next_f64();
        let mut cumulative = 0.0;
        for (index, p) in probabilities.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return Some(index);
            }
        }
        None
    }
}

/// Simulation request: path count, optional explicit horizon, seed, and the
/// tolerance on the discounted mean beyond the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    paths: usize,
    horizon: Option<usize>,
    seed: u64,
    tail_tolerance: f64,
}

impl SimConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        SimConfig {
            paths,
            horizon: None,
            seed,
            tail_tolerance: 1e-8,
        }
    }

    /// Fixes the horizon instead of deriving it from the tail tolerance.
    /// Simulation still refuses the horizon if the truncated mean exceeds
    /// the tolerance.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn with_tail_tolerance(mut self, tail_tolerance: f64) -> Self {
        self.tail_tolerance = tail_tolerance;
        self
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(DdmError::InvalidParameter(format!(
                "need at least 2 paths for standard errors, got {}",
                self.paths
            )));
        }
        if !self.tail_tolerance.is_finite() || self.tail_tolerance <= 0.0 {
            return Err(DdmError::InvalidParameter(format!(
                "tail tolerance must be positive and finite, got {}",
                self.tail_tolerance
            )));
        }
        if let Some(h) = self.horizon {
            if h == 0 || h > HORIZON_CAP {
                return Err(DdmError::InvalidParameter(format!(
                    "horizon must be in 1..={HORIZON_CAP}, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// A dividend stream to simulate. The parameter structs are shared with the
/// closed-form modules, so a process literal prices and simulates from the
/// same data.
#[derive(Debug, Clone)]
pub enum DividendProcess {
    /// Up by `delta` with probability `q`, bankrupt with `q_b`, else hold.
    BinomialAdditive(BinomialAdditiveParams),
    /// Up by factor `1 + g` with probability `q`, bankrupt with `q_b`.
    BinomialGeometric(BinomialGeometricParams),
    /// Additive steps drawn from an outcome list; residual mass holds.
    GeneralAdditive {
        d0: f64,
        k_e: f64,
        outcomes: GeneralizedOutcomes,
    },
    /// Growth rates drawn from an outcome list; residual mass holds.
    GeneralGeometric {
        d0: f64,
        k_e: f64,
        outcomes: GeneralizedOutcomes,
    },
    /// `+step` with probability `q_u`, `-step` with `q_d`, else hold.
    TrinomialAdditive(TrinomialParams),
    /// Factor `1 + step` or `1 - step`; requires `|step| < 1`.
    TrinomialGeometric(TrinomialParams),
    /// Growth factors follow a Markov chain started at `initial_state`.
    Markov {
        model: MarkovGrowthModel,
        initial_state: usize,
        d0: f64,
    },
}

/// One dividend movement per period.
#[derive(Debug, Clone, Copy)]
enum StepKind {
    Add(f64),
    Mul(f64),
}

/// Normalized per-period dynamics each path executes.
enum PathKernel {
    /// Independent draws: bankruptcy first, then the outcome list, residual
    /// mass holds the dividend.
    Iid {
        d0: f64,
        inv_r: f64,
        bankruptcy: f64,
        probabilities: Vec<f64>,
        steps: Vec<StepKind>,
    },
    Chain {
        d0: f64,
        inv_r: f64,
        factors: Vec<f64>,
        rows: Vec<Vec<f64>>,
        start: usize,
    },
}

/// Closed-form bound on the discounted mean (or L2 norm) beyond a horizon.
#[derive(Debug, Clone, Copy)]
enum TailBound {
    /// `sum_{i>N} scale * ratio^i`.
    Geometric { scale: f64, ratio: f64 },
    /// `sum_{i>N} (base + slope * i) * ratio^i` with `ratio < 1`.
    Affine { base: f64, slope: f64, ratio: f64 },
}

impl TailBound {
    fn eval(&self, horizon: usize) -> f64 {
        let h = horizon.min(HORIZON_CAP) as i32;
        match *self {
            TailBound::Geometric { scale, ratio } => {
                if ratio <= 0.0 {
                    0.0
                } else if ratio >= 1.0 {
                    f64::INFINITY
                } else {
                    scale * ratio.powi(h + 1) / (1.0 - ratio)
                }
            }
            TailBound::Affine { base, slope, ratio } => {
                let n = h as f64;
                let lead = ratio.powi(h + 1);
                base * lead / (1.0 - ratio)
                    + slope * lead * ((n + 1.0) - n * ratio) / (1.0 - ratio).powi(2)
            }
        }
    }

    fn diverges(&self) -> bool {
        match *self {
            TailBound::Geometric { ratio, .. } => ratio >= 1.0,
            TailBound::Affine { ratio, .. } => ratio >= 1.0,
        }
    }
}

/// Mean tail bound plus, when the per-period second moment permits one, an
/// L2 bound used to stretch automatic horizons far enough for second-moment
/// estimates.
struct TailProfile {
    mean: TailBound,
    l2: Option<TailBound>,
}

impl TailProfile {
    fn combined(&self, horizon: usize) -> f64 {
        let mean = self.mean.eval(horizon);
        match &self.l2 {
            Some(l2) => mean.max(l2.eval(horizon)),
            None => mean,
        }
    }
}

impl DividendProcess {
    fn kernel(&self) -> Result<PathKernel> {
        match self {
            DividendProcess::BinomialAdditive(p) => {
                binomial::hurley_additive(p)?;
                Ok(PathKernel::Iid {
                    d0: p.d0,
                    inv_r: 1.0 / (1.0 + p.k_e),
                    bankruptcy: p.q_b,
                    probabilities: vec![p.q],
                    steps: vec![StepKind::Add(p.delta)],
                })
            }
            DividendProcess::BinomialGeometric(p) => {
                binomial::hurley_geometric(p)?;
                Ok(PathKernel::Iid {
                    d0: p.d0,
                    inv_r: 1.0 / (1.0 + p.k_e),
                    bankruptcy: p.q_b,
                    probabilities: vec![p.q],
                    steps: vec![StepKind::Mul(1.0 + p.g)],
                })
            }
            DividendProcess::GeneralAdditive { d0, k_e, outcomes } => {
                binomial::hurley_general_additive(*d0, *k_e, outcomes)?;
                Ok(PathKernel::Iid {
                    d0: *d0,
                    inv_r: 1.0 / (1.0 + k_e),
                    bankruptcy: 0.0,
                    probabilities: outcomes.outcomes().iter().map(|(_, q)| *q).collect(),
                    steps: outcomes
                        .outcomes()
                        .iter()
                        .map(|(step, _)| StepKind::Add(*step))
                        .collect(),
                })
            }
            DividendProcess::GeneralGeometric { d0, k_e, outcomes } => {
                binomial::hurley_general_geometric(*d0, *k_e, outcomes)?;
                for (g, _) in outcomes.outcomes() {
                    if *g <= -1.0 {
                        return Err(DdmError::InvalidParameter(format!(
                            "geometric outcome growth must stay above -1, got {g}"
                        )));
                    }
                }
                Ok(PathKernel::Iid {
                    d0: *d0,
                    inv_r: 1.0 / (1.0 + k_e),
                    bankruptcy: 0.0,
                    probabilities: outcomes.outcomes().iter().map(|(_, q)| *q).collect(),
                    steps: outcomes
                        .outcomes()
                        .iter()
                        .map(|(g, _)| StepKind::Mul(1.0 + g))
                        .collect(),
                })
            }
            DividendProcess::TrinomialAdditive(p) => {
                binomial::check_trinomial(p)?;
                Ok(PathKernel::Iid {
                    d0: p.d0,
                    inv_r: 1.0 / (1.0 + p.k_e),
                    bankruptcy: 0.0,
                    probabilities: vec![p.q_u, p.q_d],
                    steps: vec![StepKind::Add(p.step), StepKind::Add(-p.step)],
                })
            }
            DividendProcess::TrinomialGeometric(p) => {
                binomial::check_trinomial(p)?;
                if p.step.abs() >= 1.0 {
                    return Err(DdmError::InvalidParameter(format!(
                        "geometric trinomial step must satisfy |step| < 1, got {}",
                        p.step
                    )));
                }
                Ok(PathKernel::Iid {
                    d0: p.d0,
                    inv_r: 1.0 / (1.0 + p.k_e),
                    bankruptcy: 0.0,
                    probabilities: vec![p.q_u, p.q_d],
                    steps: vec![StepKind::Mul(1.0 + p.step), StepKind::Mul(1.0 - p.step)],
                })
            }
            DividendProcess::Markov {
                model,
                initial_state,
                d0,
            } => {
                if *initial_state >= model.state_count() {
                    return Err(DdmError::StateOutOfRange {
                        index: *initial_state,
                        states: model.state_count(),
                    });
                }
                if !d0.is_finite() || *d0 <= 0.0 {
                    return Err(DdmError::InvalidParameter(format!(
                        "d0 must be positive and finite, got {d0}"
                    )));
                }
                Ok(PathKernel::Chain {
                    d0: *d0,
                    inv_r: 1.0 / model.discount().gross(),
                    factors: model.states().factors().to_vec(),
                    rows: model.transition().to_rows(),
                    start: *initial_state,
                })
            }
        }
    }

    /// Tail bounds for the discounted stream. Additive processes use the
    /// pathwise envelope `0 <= D_i <= d0 + i * max_up_step`, which bounds the
    /// mean and the L2 norm at once; multiplicative ones use the exact
    /// per-period moment factors.
    fn tail_profile(&self) -> Result<TailProfile> {
        Ok(match self {
            DividendProcess::BinomialAdditive(p) => {
                let up = if p.q > 0.0 { p.delta.max(0.0) } else { 0.0 };
                additive_profile(p.d0, up, p.k_e)
            }
            DividendProcess::GeneralAdditive { d0, k_e, outcomes } => {
                let up = outcomes
                    .outcomes()
                    .iter()
                    .filter(|(_, q)| *q > 0.0)
                    .map(|(step, _)| *step)
                    .fold(0.0_f64, f64::max);
                additive_profile(*d0, up, *k_e)
            }
            DividendProcess::TrinomialAdditive(p) => {
                let mut up = 0.0_f64;
                if p.q_u > 0.0 {
                    up = up.max(p.step);
                }
                if p.q_d > 0.0 {
                    up = up.max(-p.step);
                }
                additive_profile(p.d0, up, p.k_e)
            }
            DividendProcess::BinomialGeometric(p) => {
                let m1 = 1.0 + p.q * p.g - p.q_b;
                let m2 = p.q * (1.0 + p.g).powi(2) + (1.0 - p.q - p.q_b).max(0.0);
                geometric_profile(p.d0, m1, m2, p.k_e)
            }
            DividendProcess::GeneralGeometric { d0, k_e, outcomes } => {
                let mut m1 = outcomes.residual_probability();
                let mut m2 = outcomes.residual_probability();
                for (g, q) in outcomes.outcomes() {
                    m1 += q * (1.0 + g);
                    m2 += q * (1.0 + g).powi(2);
                }
                geometric_profile(*d0, m1, m2, *k_e)
            }
            DividendProcess::TrinomialGeometric(p) => {
                let hold = (1.0 - p.q_u - p.q_d).max(0.0);
                let m1 = p.q_u * (1.0 + p.step) + p.q_d * (1.0 - p.step) + hold;
                let m2 =
                    p.q_u * (1.0 + p.step).powi(2) + p.q_d * (1.0 - p.step).powi(2) + hold;
                geometric_profile(p.d0, m1, m2, p.k_e)
            }
            DividendProcess::Markov { model, d0, .. } => {
                // Worst-state factors bound the conditional moments at every
                // step, so the iid argument applies with g_bar in place of m1.
                let report = check_conditions(model);
                geometric_profile(*d0, report.g_bar, report.g_bar2, model.discount().annual())
            }
        })
    }
}

fn additive_profile(d0: f64, up_step: f64, k_e: f64) -> TailProfile {
    let bound = TailBound::Affine {
        base: d0,
        slope: up_step.max(0.0),
        ratio: 1.0 / (1.0 + k_e),
    };
    TailProfile {
        mean: bound,
        l2: Some(bound),
    }
}

fn geometric_profile(d0: f64, m1: f64, m2: f64, k_e: f64) -> TailProfile {
    let r = 1.0 + k_e;
    let l2_ratio = m2.max(0.0).sqrt() / r;
    TailProfile {
        mean: TailBound::Geometric {
            scale: d0,
            ratio: m1.max(0.0) / r,
        },
        l2: (l2_ratio < 1.0).then_some(TailBound::Geometric {
            scale: d0,
            ratio: l2_ratio,
        }),
    }
}

/// Smallest horizon with `bound(h) <= tolerance`; `None` if `cap` is not
/// enough. `bound` must be nonincreasing.
fn horizon_for(bound: impl Fn(usize) -> f64, tolerance: f64, cap: usize) -> Option<usize> {
    if !(bound(cap) <= tolerance) {
        return None;
    }
    let mut hi = 1usize;
    while hi < cap && bound(hi) > tolerance {
        hi = (hi * 2).min(cap);
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if bound(mid) > tolerance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi.max(1))
}

/// Resolves the horizon for a profile: explicit horizons are verified
/// against the mean tail, automatic ones are solved to meet the tolerance on
/// the mean and (when bounded) the L2 tail.
fn resolve_horizon(profile: &TailProfile, cfg: &SimConfig) -> Result<usize> {
    match cfg.horizon {
        Some(h) => {
            let bound = profile.mean.eval(h);
            if bound > cfg.tail_tolerance {
                return Err(DdmError::HorizonTooShort {
                    bound,
                    tolerance: cfg.tail_tolerance,
                });
            }
            Ok(h)
        }
        None => {
            if profile.mean.diverges() {
                return Err(DdmError::NonConvergent(
                    "discounted mean dividends do not decay; present value diverges".into(),
                ));
            }
            horizon_for(|h| profile.combined(h), cfg.tail_tolerance, HORIZON_CAP).ok_or_else(
                || {
                    DdmError::InvalidParameter(format!(
                        "tail tolerance {} needs a horizon beyond {HORIZON_CAP}",
                        cfg.tail_tolerance
                    ))
                },
            )
        }
    }
}

/// Sample statistics of the simulated present values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub std_error: f64,
    pub second_moment: f64,
    pub second_moment_std_error: f64,
    pub sample_variance: f64,
    pub paths: usize,
    pub horizon: usize,
    /// Paths on which an additive down-step was clipped at zero.
    pub floored_paths: usize,
    /// Upper bound on the discounted mean dropped by truncation.
    pub tail_bound: f64,
}

fn summarize(values: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    let sample_variance =
        neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    let std_error = (sample_variance / n).sqrt();
    let second_moment = neumaier_sum(values.iter().map(|v| v * v)) / n;
    let second_variance = neumaier_sum(
        values
            .iter()
            .map(|v| (v * v - second_moment) * (v * v - second_moment)),
    ) / (n - 1.0);
    let second_moment_std_error = (second_variance / n).sqrt();
    (
        mean,
        std_error,
        second_moment,
        second_moment_std_error,
        sample_variance,
    )
}

/// Simulates the discounted dividend stream `sum_{i>=1} D_i / (1+k_e)^i`.
///
/// Bankruptcy is absorbing; additive streams are clipped at zero (and the
/// affected paths counted) rather than absorbed. The horizon comes from the
/// tail tolerance unless the config pins one explicitly.
pub fn simulate_dividend_paths(
    process: &DividendProcess,
    cfg: &SimConfig,
) -> Result<McSummary> {
    cfg.validate()?;
    let kernel = process.kernel()?;
    let profile = process.tail_profile()?;
    let horizon = resolve_horizon(&profile, cfg)?;

    let outcomes: Vec<(f64, bool)> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = PathRng::new(cfg.seed, path as u64);
            run_path(&kernel, horizon, &mut rng)
        })
        .collect();

    let values: Vec<f64> = outcomes.iter().map(|(pv, _)| *pv).collect();
    let floored_paths = outcomes.iter().filter(|(_, floored)| *floored).count();
    let (mean, std_error, second_moment, second_moment_std_error, sample_variance) =
        summarize(&values);
    Ok(McSummary {
        mean,
        std_error,
        second_moment,
        second_moment_std_error,
        sample_variance,
        paths: cfg.paths,
        horizon,
        floored_paths,
        tail_bound: profile.mean.eval(horizon),
    })
}

fn run_path(kernel: &PathKernel, horizon: usize, rng: &mut PathRng) -> (f64, bool) {
    match kernel {
        PathKernel::Iid {
            d0,
            inv_r,
            bankruptcy,
            probabilities,
            steps,
        } => {
            let mut dividend = *d0;
            let mut discount = 1.0;
            let mut pv = 0.0;
            let mut floored = false;
            for _ in 0..horizon {
                discount *= inv_r;
                let u = rng.next_f64();
                if u < *bankruptcy {
                    break;
                }
                let mut cumulative = *bankruptcy;
                for (p, step) in probabilities.iter().zip(steps) {
                    cumulative += p;
                    if u < cumulative {
                        match step {
                            StepKind::Add(delta) => {
                                dividend += delta;
                                if dividend < 0.0 {
                                    dividend = 0.0;
                                    floored = true;
                                }
                            }
                            StepKind::Mul(factor) => dividend *= factor,
                        }
                        break;
                    }
                }
                pv += dividend * discount;
            }
            (pv, floored)
        }
        PathKernel::Chain {
            d0,
            inv_r,
            factors,
            rows,
            start,
        } => {
            let mut dividend = *d0;
            let mut discount = 1.0;
            let mut pv = 0.0;
            let mut state = *start;
            let last = factors.len() - 1;
            for _ in 0..horizon {
                discount *= inv_r;
                // Row sums can round a hair under 1; residual mass lands on
                // the last state.
                state = rng.sample_outcome(&rows[state]).unwrap_or(last);
                dividend *= factors[state];
                pv += dividend * discount;
            }
            (pv, false)
        }
    }
}

/// Per-stock present-value statistics from a joint simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StockMoments {
    pub mean: f64,
    pub std_error: f64,
    pub second_moment: f64,
    pub second_moment_std_error: f64,
}

/// Cross moments for one unordered stock pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMoments {
    pub stocks: (usize, usize),
    pub mean_product: f64,
    pub product_std_error: f64,
    pub covariance: f64,
    /// Standard error of the sample covariance, from the spread of the
    /// per-path products of centered values.
    pub covariance_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtdMcSummary {
    pub stocks: Vec<StockMoments>,
    pub pairs: Vec<PairMoments>,
    pub paths: usize,
    pub horizon: usize,
    /// Worst per-stock bound on the truncated discounted mean.
    pub tail_bound: f64,
}

/// Simulates every stock's discounted stream on shared joint-state paths.
///
/// Next states are drawn stock by stock from the mixture rows of the current
/// joint state, which is exactly the product-kernel dynamics the joint
/// solver prices.
pub fn simulate_mtd_paths(
    model: &MtdModel,
    initial: &JointState,
    dividends: &[f64],
    cfg: &SimConfig,
) -> Result<MtdMcSummary> {
    cfg.validate()?;
    let gamma = model.stock_count();
    let m = model.state_count();
    if dividends.len() != gamma {
        return Err(DdmError::DimensionMismatch(format!(
            "{} dividends for {gamma} stocks",
            dividends.len()
        )));
    }
    for d in dividends {
        if !d.is_finite() || *d <= 0.0 {
            return Err(DdmError::InvalidParameter(format!(
                "dividends must be positive and finite, got {d}"
            )));
        }
    }
    let start_rank = model.joint_rank(initial)?;

    let reports = check_multi_conditions(model);
    let mut profiles = Vec::with_capacity(gamma);
    for (alpha, report) in reports.iter().enumerate() {
        let r = model.discount(alpha).gross();
        if !report.a1_holds {
            return Err(DdmError::TransversalityViolated {
                condition: Condition::A1,
                g_bar: report.g_bar,
                bound: r,
            });
        }
        profiles.push(geometric_profile(
            dividends[alpha],
            report.g_bar,
            report.g_bar2,
            model.discount(alpha).annual(),
        ));
    }
    let worst = |h: usize| {
        profiles
            .iter()
            .map(|p| p.combined(h))
            .fold(0.0_f64, f64::max)
    };
    let horizon = match cfg.horizon {
        Some(h) => {
            let bound = profiles
                .iter()
                .map(|p| p.mean.eval(h))
                .fold(0.0_f64, f64::max);
            if bound > cfg.tail_tolerance {
                return Err(DdmError::HorizonTooShort {
                    bound,
                    tolerance: cfg.tail_tolerance,
                });
            }
            h
        }
        None => horizon_for(worst, cfg.tail_tolerance, HORIZON_CAP).ok_or_else(|| {
            DdmError::InvalidParameter(format!(
                "tail tolerance {} needs a horizon beyond {HORIZON_CAP}",
                cfg.tail_tolerance
            ))
        })?,
    };

    // Mixture rows for every (joint state, stock); paths only index into
    // this table.
    let joint_dim = model.joint_dimension()?;
    let mut mixture = Vec::with_capacity(joint_dim);
    for rank in 0..joint_dim {
        let state = model.joint_state_of(rank);
        let rows: Vec<Vec<f64>> = (0..gamma)
            .map(|alpha| model.mixture_row(alpha, state.indices()))
            .collect();
        mixture.push(rows);
    }
    let inv_r: Vec<f64> = (0..gamma)
        .map(|alpha| 1.0 / model.discount(alpha).gross())
        .collect();
    let factors: Vec<&[f64]> = (0..gamma).map(|alpha| model.states(alpha).factors()).collect();

    let per_path: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = PathRng::new(cfg.seed, path as u64);
            let mut rank = start_rank;
            let mut dividend = dividends.to_vec();
            let mut discount = vec![1.0; gamma];
            let mut pv = vec![0.0; gamma];
            let mut next_indices = vec![0usize; gamma];
            for _ in 0..horizon {
                let rows = &mixture[rank];
                for alpha in 0..gamma {
                    let idx = rng.sample_outcome(&rows[alpha]).unwrap_or(m - 1);
                    next_indices[alpha] = idx;
                    discount[alpha] *= inv_r[alpha];
                    dividend[alpha] *= factors[alpha][idx];
                    pv[alpha] += dividend[alpha] * discount[alpha];
                }
                rank = next_indices.iter().fold(0, |acc, &i| acc * m + i);
            }
            pv
        })
        .collect();

    let mut stocks = Vec::with_capacity(gamma);
    let mut columns = Vec::with_capacity(gamma);
    for alpha in 0..gamma {
        let column: Vec<f64> = per_path.iter().map(|pv| pv[alpha]).collect();
        let (mean, std_error, second_moment, second_moment_std_error, _) = summarize(&column);
        stocks.push(StockMoments {
            mean,
            std_error,
            second_moment,
            second_moment_std_error,
        });
        columns.push(column);
    }

    let n = cfg.paths as f64;
    let mut pairs = Vec::new();
    for alpha in 0..gamma {
        for beta in alpha + 1..gamma {
            let products: Vec<f64> = columns[alpha]
                .iter()
                .zip(&columns[beta])
                .map(|(x, y)| x * y)
                .collect();
            let (mean_product, product_std_error, _, _, _) = summarize(&products);
            let centered: Vec<f64> = columns[alpha]
                .iter()
                .zip(&columns[beta])
                .map(|(x, y)| (x - stocks[alpha].mean) * (y - stocks[beta].mean))
                .collect();
            let covariance = neumaier_sum(centered.iter().copied()) / (n - 1.0);
            let center_mean = neumaier_sum(centered.iter().copied()) / n;
            let spread = neumaier_sum(
                centered
                    .iter()
                    .map(|c| (c - center_mean) * (c - center_mean)),
            ) / (n - 1.0);
            pairs.push(PairMoments {
                stocks: (alpha, beta),
                mean_product,
                product_std_error,
                covariance,
                covariance_std_error: (spread / n).sqrt(),
            });
        }
    }

    let tail_bound = profiles
        .iter()
        .map(|p| p.mean.eval(horizon))
        .fold(0.0_f64, f64::max);
    Ok(MtdMcSummary {
        stocks,
        pairs,
        paths: cfg.paths,
        horizon,
        tail_bound,
    })
}

/// Values a stream whose growth and discount rates are both drawn fresh each
/// period: `d0 * sum_{i} prod_{j<=i} (1+g_j)/(1+k_j)`.
///
/// Per period the growth rate is drawn first, then the discount rate, from
/// the path's generator. There is no distribution-free tail bound, so the
/// config must pin an explicit horizon. Returns the sample mean and its
/// standard error.
pub fn dk_simulate<G, K>(
    growth_sampler: G,
    discount_sampler: K,
    d0: f64,
    cfg: &SimConfig,
) -> Result<(f64, f64)>
where
    G: Fn(&mut PathRng) -> f64 + Sync,
    K: Fn(&mut PathRng) -> f64 + Sync,
{
    cfg.validate()?;
    if !d0.is_finite() || d0 <= 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "d0 must be positive and finite, got {d0}"
        )));
    }
    let horizon = cfg.horizon.ok_or_else(|| {
        DdmError::InvalidParameter(
            "stochastic-rate valuation needs an explicit horizon; random discounting \
             admits no closed-form tail bound"
                .into(),
        )
    })?;

    let values: Vec<f64> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| -> Result<f64> {
            let mut rng = PathRng::new(cfg.seed, path as u64);
            let mut ratio_product = 1.0;
            let mut acc = 0.0;
            for _ in 0..horizon {
                let g = growth_sampler(&mut rng);
                let k = discount_sampler(&mut rng);
                if !(g > -1.0) || !(k > -1.0) {
                    return Err(DdmError::InvalidParameter(format!(
                        "sampled rates must stay above -1, got g = {g}, k = {k}"
                    )));
                }
                ratio_product *= (1.0 + g) / (1.0 + k);
                acc += ratio_product;
            }
            Ok(d0 * acc)
        })
        .collect::<Result<Vec<f64>>>()?;

    let (mean, std_error, _, _, _) = summarize(&values);
    Ok((mean, std_error))
}

/// Partial sums of the price-dividend series over a fixed horizon, with the
/// geometric bound on what the truncation discards.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    /// Partial sum per state.
    pub values: Vec<f64>,
    pub horizon: usize,
    pub tail_bound: f64,
}

fn partial_sums(model: &MarkovGrowthModel, horizon: usize) -> Vec<f64> {
    let m = model.state_count();
    let p = model.transition();
    let g = model.states().factors();
    let r = model.discount().gross();
    // One term deeper each pass: S_{t+1} = M (1 + S_t), M = P diag(g) / r.
    let mut sums = vec![0.0; m];
    for _ in 0..horizon {
        let mut next = vec![0.0; m];
        for (i, out) in next.iter_mut().enumerate() {
            let row = p.row(i);
            *out = row
                .iter()
                .zip(g)
                .zip(&sums)
                .map(|((pij, gj), sj)| pij * gj * (1.0 + sj))
                .sum::<f64>()
                / r;
        }
        sums = next;
    }
    sums
}

/// Price-dividend series truncated at `horizon`, available only when the
/// worst-state mean growth stays below the discount factor (the tail has no
/// bound otherwise).
pub fn truncated_psi1_series(
    model: &MarkovGrowthModel,
    horizon: usize,
) -> Result<TruncatedSeries> {
    let report = check_conditions(model);
    let r = model.discount().gross();
    if !report.a1_holds {
        return Err(DdmError::TransversalityViolated {
            condition: Condition::A1,
            g_bar: report.g_bar,
            bound: r,
        });
    }
    let x = report.g_bar / r;
    Ok(TruncatedSeries {
        values: partial_sums(model, horizon),
        horizon,
        tail_bound: x.powi(horizon.min(HORIZON_CAP) as i32 + 1) / (1.0 - x),
    })
}

/// Bare partial sum of the price-dividend series for one state, with no
/// convergence gate: past the transversality boundary the sums grow without
/// limit, and this function exists to exhibit exactly that.
pub fn psi1_partial_sum(
    model: &MarkovGrowthModel,
    state: usize,
    horizon: usize,
) -> Result<f64> {
    if state >= model.state_count() {
        return Err(DdmError::StateOutOfRange {
            index: state,
            states: model.state_count(),
        });
    }
    Ok(partial_sums(model, horizon)[state])
}

/// Number of leading terms after which a positive geometric series with this
/// scale and ratio has tail at most `tolerance`.
fn geometric_terms(scale: f64, ratio: f64, tolerance: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(DdmError::NonConvergent(format!(
            "series ratio {ratio} is not in [0, 1)"
        )));
    }
    let bound = TailBound::Geometric { scale, ratio };
    horizon_for(|h| bound.eval(h), tolerance, SERIES_CAP).ok_or_else(|| {
        DdmError::InvalidParameter(format!(
            "series needs more than {SERIES_CAP} terms to reach tolerance {tolerance}"
        ))
    })
}

fn check_series_tolerance(tolerance: f64) -> Result<()> {
    if !tolerance.is_finite() || tolerance <= 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "tail tolerance must be positive and finite, got {tolerance}"
        )));
    }
    Ok(())
}

/// Terms `scale * ratio^1 ... scale * ratio^count`.
fn geometric_series(scale: f64, ratio: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).scan(scale, move |term, _| {
        *term *= ratio;
        Some(*term)
    })
}

/// Constant-growth price by direct summation of the discounted dividends,
/// truncated once the geometric tail drops below `tail_tolerance`. Shares
/// parameter validation with the closed form; the summation is independent.
pub fn gordon_series_value(p: &GordonParams, tail_tolerance: f64) -> Result<f64> {
    check_series_tolerance(tail_tolerance)?;
    gordon_price(p)?;
    let ratio = (1.0 + p.g) / (1.0 + p.k_e);
    let count = geometric_terms(p.d0, ratio, tail_tolerance)?;
    Ok(neumaier_sum(geometric_series(p.d0, ratio, count)))
}

/// Two-phase price by direct summation: the first `n` dividends exactly,
/// then the terminal phase until its tail is below tolerance.
pub fn two_stage_series_value(p: &TwoStageParams, tail_tolerance: f64) -> Result<f64> {
    check_series_tolerance(tail_tolerance)?;
    two_stage_price(p)?;
    let x_high = (1.0 + p.g_h) / (1.0 + p.k_e_h);
    let high = neumaier_sum(geometric_series(p.d0, x_high, p.n as usize));
    let boundary_dividend = p.d0 * (1.0 + p.g_h).powi(p.n as i32);
    let boundary_discount = (1.0 + p.k_e_h).powi(-(p.n as i32));
    let x_st = (1.0 + p.g_st) / (1.0 + p.k_e_st);
    let scale = boundary_dividend * boundary_discount;
    let count = geometric_terms(scale, x_st, tail_tolerance)?;
    Ok(high + neumaier_sum(geometric_series(scale, x_st, count)))
}

/// Prices the boosted constant-growth schedule the two-term closed form
/// reproduces exactly: `D_i = d0 ((1+g_a) + h (g_a - g_n)) (1+g_n)^{i-1}`.
pub fn h_model_series_value(p: &HModelParams, tail_tolerance: f64) -> Result<f64> {
    check_series_tolerance(tail_tolerance)?;
    h_model_price(p)?;
    let first = p.d0 * ((1.0 + p.g_a) + p.h * (p.g_a - p.g_n));
    let ratio = (1.0 + p.g_n) / (1.0 + p.k_e);
    // Scale so that term 1 of the geometric series equals `first / (1+k_e)`.
    let scale = first / (1.0 + p.g_n);
    let count = geometric_terms(scale.abs().max(f64::MIN_POSITIVE), ratio, tail_tolerance)?;
    Ok(neumaier_sum(geometric_series(scale, ratio, count)))
}

/// Three-phase price by direct summation: growth years `0..=n1`, the listed
/// decline dividends discounted at the decline rate, then the terminal
/// series until its tail is below tolerance.
pub fn three_stage_series_value(p: &ThreeStageParams, tail_tolerance: f64) -> Result<f64> {
    check_series_tolerance(tail_tolerance)?;
    three_stage_price(p)?;
    let n1 = p.n1 as usize;
    let n2 = p.n2 as usize;
    let y_high = (1.0 + p.g_a) / (1.0 + p.k_e_h);
    // Growth phase starts at i = 0: the current dividend is part of the sum.
    let high = neumaier_sum((0..=n1).map(|i| p.eps0 * p.pi_a * y_high.powi(i as i32)));
    let decline = neumaier_sum(
        p.decline_dividends
            .iter()
            .enumerate()
            .map(|(offset, d)| d / (1.0 + p.k_e_d).powi((n1 + 1 + offset) as i32)),
    );
    let last = p
        .decline_dividends
        .last()
        .copied()
        .unwrap_or_else(|| p.eps0 * (1.0 + p.g_a).powi(p.n1 as i32) * p.pi_n);
    let base_discount =
        (1.0 + p.k_e_h).powi(-(p.n1 as i32)) * (1.0 + p.k_e_d).powi(-((n2 - n1) as i32));
    let x_st = (1.0 + p.g_n) / (1.0 + p.k_e_st);
    let scale = last * base_discount;
    let count = geometric_terms(scale, x_st, tail_tolerance)?;
    Ok(high + decline + neumaier_sum(geometric_series(scale, x_st, count)))
}
