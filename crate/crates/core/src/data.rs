//! Exogenous profile handling: CSV ingestion, synthetic year generation, and
//! the three-weeks-per-month train/test calendar split.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const HOURS_PER_DAY: usize = 24;

/// Cumulative month lengths of a non-leap civil year starting January 1.
const MONTH_LENGTHS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read profile file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: negative value in column {column}")]
    NegativeValue { line: usize, column: &'static str },
    #[error("profile length {0} is not a positive multiple of 24")]
    BadLength(usize),
    #[error("profile series have unequal lengths")]
    UnequalLengths,
    #[error("synthesis requires days >= 1")]
    NoDays,
    #[error("profile of {days} days does not cover whole calendar months")]
    PartialMonth { days: usize },
    #[error("training-day set is empty")]
    EmptyTrainSet,
    #[error("day index {0} out of range")]
    DayOutOfRange(usize),
}

/// Hourly PV, load, and price series spanning whole days.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pv: Vec<f64>,
    load: Vec<f64>,
    price: Vec<f64>,
}

impl Profile {
    /// Validates the series: non-negative, equal lengths, a positive multiple
    /// of 24 hours.
    pub fn new(pv: Vec<f64>, load: Vec<f64>, price: Vec<f64>) -> Result<Self, DataError> {
        if pv.len() != load.len() || pv.len() != price.len() {
            return Err(DataError::UnequalLengths);
        }
        if pv.is_empty() || pv.len() % HOURS_PER_DAY != 0 {
            return Err(DataError::BadLength(pv.len()));
        }
        for (name, series) in [("pv_kw", &pv), ("load_kw", &load), ("price", &price)] {
            if let Some(i) = series.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(DataError::NegativeValue {
                    line: i + 2, // header is line 1
                    column: name,
                });
            }
        }
        Ok(Self { pv, load, price })
    }

    pub fn num_days(&self) -> usize {
        self.pv.len() / HOURS_PER_DAY
    }

    pub fn pv(&self) -> &[f64] {
        &self.pv
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn price(&self) -> &[f64] {
        &self.price
    }

    pub fn max_pv(&self) -> f64 {
        self.pv.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_load(&self) -> f64 {
        self.load.iter().cloned().fold(0.0, f64::max)
    }

    /// Mean of per-day total demand (kW summed over each day's 24 hours).
    pub fn mean_daily_demand(&self) -> f64 {
        self.load.iter().sum::<f64>() / self.num_days() as f64
    }

    /// One day's 24-hour window.
    pub fn day(&self, day_index: usize) -> Result<DaySlice, DataError> {
        if day_index >= self.num_days() {
            return Err(DataError::DayOutOfRange(day_index));
        }
        let start = day_index * HOURS_PER_DAY;
        let range = start..start + HOURS_PER_DAY;
        let mut pv = [0.0; HOURS_PER_DAY];
        let mut load = [0.0; HOURS_PER_DAY];
        let mut price = [0.0; HOURS_PER_DAY];
        pv.copy_from_slice(&self.pv[range.clone()]);
        load.copy_from_slice(&self.load[range.clone()]);
        price.copy_from_slice(&self.price[range]);
        Ok(DaySlice {
            day_index,
            pv,
            load,
            price,
        })
    }
}

/// One episode's exogenous data: 24 hourly entries of PV, load, and price.
#[derive(Debug, Clone, PartialEq)]
pub struct DaySlice {
    pub day_index: usize,
    pub pv: [f64; HOURS_PER_DAY],
    pub load: [f64; HOURS_PER_DAY],
    pub price: [f64; HOURS_PER_DAY],
}

impl DaySlice {
    /// Constant-valued slice, mainly for toy solver instances and tests.
    pub fn constant(pv: f64, load: f64, price: f64) -> Self {
        Self {
            day_index: 0,
            pv: [pv; HOURS_PER_DAY],
            load: [load; HOURS_PER_DAY],
            price: [price; HOURS_PER_DAY],
        }
    }
}

/// Calendar partition of a profile's days into training and testing sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_days: Vec<usize>,
    pub test_days: Vec<usize>,
}

/// Loads a profile from the documented CSV schema:
/// header `hour,pv_kw,load_kw,price`, one row per hour.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Profile, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_profile_csv(&text)
}

fn parse_profile_csv(text: &str) -> Result<Profile, DataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::BadLength(0))?;
    if header.trim() != "hour,pv_kw,load_kw,price" {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: format!("expected header `hour,pv_kw,load_kw,price`, got `{header}`"),
        });
    }
    let mut pv = Vec::new();
    let mut load = Vec::new();
    let mut price = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |field: &str, name: &'static str| -> Result<f64, DataError> {
            field.trim().parse::<f64>().map_err(|e| DataError::MalformedRow {
                line,
                reason: format!("column {name}: {e}"),
            })
        };
        parse(fields[0], "hour")?;
        let (p, l, pr) = (
            parse(fields[1], "pv_kw")?,
            parse(fields[2], "load_kw")?,
            parse(fields[3], "price")?,
        );
        for (v, name) in [(p, "pv_kw"), (l, "load_kw"), (pr, "price")] {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::NegativeValue { line, column: name });
            }
        }
        pv.push(p);
        load.push(l);
        price.push(pr);
    }
    Profile::new(pv, load, price)
}

/// Writes a profile in the same CSV schema `load_profiles` reads.
/// Values are printed with shortest round-trip precision, so a
/// write-then-load cycle reproduces every value exactly.
pub fn write_profile(profile: &Profile, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::from("hour,pv_kw,load_kw,price\n");
    for i in 0..profile.pv.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i, profile.pv[i], profile.load[i], profile.price[i]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Shape constants for the synthetic year. Magnitudes are arbitrary but sized
/// so that peak demand occasionally exceeds the combined DG, grid, and ESS
/// capacity of the default system, making some evening peaks unservable.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub pv_capacity_kw: f64,
    pub load_base_kw: f64,
    pub morning_peak_kw: f64,
    pub evening_peak_kw: f64,
    pub surge_probability: f64,
    pub price_offpeak: f64,
    pub price_peak: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            pv_capacity_kw: 400.0,
            load_base_kw: 520.0,
            morning_peak_kw: 160.0,
            evening_peak_kw: 300.0,
            surge_probability: 0.05,
            price_offpeak: 0.2,
            price_peak: 0.5,
        }
    }
}

/// Deterministic synthetic profile: seasonal PV with a daylight bell and
/// multiplicative noise, double-peaked load with weekly modulation and rare
/// demand-surge days, and a two-tier time-of-use price.
pub fn synthesize_profiles(seed: u64, days: usize) -> Result<Profile, DataError> {
    synthesize_profiles_with(seed, days, &SynthOptions::default())
}

pub fn synthesize_profiles_with(
    seed: u64,
    days: usize,
    opts: &SynthOptions,
) -> Result<Profile, DataError> {
    if days < 1 {
        return Err(DataError::NoDays);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = days * HOURS_PER_DAY;
    let mut pv = Vec::with_capacity(n);
    let mut load = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);

    let tau = std::f64::consts::TAU;
    for d in 0..days {
        let season = (d % 365) as f64 / 365.0;
        let pv_season = 0.55 - 0.45 * (tau * season).cos();
        let load_season = 1.0 + 0.10 * (tau * season).cos();
        // Jan 1 anchored to a Monday; weekends run a little lighter.
        let weekly = if d % 7 >= 5 { 0.92 } else { 1.0 };
        let surge = if rng.random::<f64>() < opts.surge_probability {
            1.30 + 0.15 * rng.random::<f64>()
        } else {
            1.0
        };
        for h in 0..HOURS_PER_DAY {
            let hour = h as f64;
            // Daylight bell: zero outside (6, 19).
            let bell = if (hour - 12.5).abs() < 6.5 {
                let x = (hour - 12.5) * std::f64::consts::PI / 13.0;
                x.cos().powi(2)
            } else {
                0.0
            };
            let pv_eps: f64 = StandardNormal.sample(&mut rng);
            let pv_noise = (1.0 + 0.18 * pv_eps).max(0.0);
            pv.push(opts.pv_capacity_kw * pv_season * bell * pv_noise);

            let gauss = |center: f64, width: f64| {
                let z = (hour - center) / width;
                (-0.5 * z * z).exp()
            };
            let shape = opts.load_base_kw
                + opts.morning_peak_kw * gauss(8.5, 2.0)
                + opts.evening_peak_kw * gauss(19.0, 2.5);
            let load_eps: f64 = StandardNormal.sample(&mut rng);
            let load_noise = (1.0 + 0.08 * load_eps).max(0.0);
            load.push(shape * load_season * weekly * surge * load_noise);

            price.push(if (8..=21).contains(&h) {
                opts.price_peak
            } else {
                opts.price_offpeak
            });
        }
    }
    Profile::new(pv, load, price)
}

/// Partitions a whole-month profile: days 1-21 of each calendar month train,
/// the remainder tests. The calendar is a non-leap year starting January 1.
pub fn split_train_test(profile: &Profile) -> Result<SplitSpec, DataError> {
    let days = profile.num_days();
    let mut train_days = Vec::new();
    let mut test_days = Vec::new();
    let mut day = 0usize;
    let mut month = 0usize;
    while day < days {
        let month_len = MONTH_LENGTHS[month % 12];
        if day + month_len > days {
            return Err(DataError::PartialMonth { days });
        }
        for day_of_month in 1..=month_len {
            if day_of_month <= 21 {
                train_days.push(day);
            } else {
                test_days.push(day);
            }
            day += 1;
        }
        month += 1;
    }
    Ok(SplitSpec {
        train_days,
        test_days,
    })
}

/// Uniformly samples a training day index.
pub fn sample_training_day(split: &SplitSpec, rng: &mut impl Rng) -> Result<usize, DataError> {
    if split.train_days.is_empty() {
        return Err(DataError::EmptyTrainSet);
    }
    let i = rng.random_range(0..split.train_days.len());
    Ok(split.train_days[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_profile(days: usize) -> Profile {
        let n = days * HOURS_PER_DAY;
        Profile::new(vec![1.0; n], vec![2.0; n], vec![0.3; n]).unwrap()
    }

    #[test]
    fn profile_rejects_bad_length() {
        let err = Profile::new(vec![0.0; 25], vec![0.0; 25], vec![0.0; 25]).unwrap_err();
        assert!(matches!(err, DataError::BadLength(25)));
    }

    #[test]
    fn profile_rejects_negative() {
        let mut pv = vec![0.0; 24];
        pv[3] = -5.0;
        let err = Profile::new(pv, vec![0.0; 24], vec![0.0; 24]).unwrap_err();
        assert!(matches!(err, DataError::NegativeValue { column: "pv_kw", .. }));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let profile = synthesize_profiles(3, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_profile(&profile, &path).unwrap();
        let back = load_profiles(&path).unwrap();
        assert_eq!(profile, back);
    }

    #[test]
    fn csv_rejects_negative_and_ragged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        let mut rows = String::from("hour,pv_kw,load_kw,price\n");
        for h in 0..24 {
            rows.push_str(&format!("{h},1.0,2.0,0.3\n"));
        }
        let negative = rows.replace("3,1.0", "3,-5.0");
        std::fs::write(&path, negative).unwrap();
        assert!(matches!(
            load_profiles(&path).unwrap_err(),
            DataError::NegativeValue { .. }
        ));

        let ragged = rows.replace("5,1.0,2.0,0.3", "5,1.0,2.0");
        std::fs::write(&path, ragged).unwrap();
        assert!(matches!(
            load_profiles(&path).unwrap_err(),
            DataError::MalformedRow { line: 7, .. }
        ));
    }

    #[test]
    fn csv_rejects_wrong_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.csv");
        let mut rows = String::from("hour,pv_kw,load_kw,price\n");
        for h in 0..25 {
            rows.push_str(&format!("{h},1.0,2.0,0.3\n"));
        }
        std::fs::write(&path, rows).unwrap();
        assert!(matches!(
            load_profiles(&path).unwrap_err(),
            DataError::BadLength(25)
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_profiles("/nonexistent/x.csv").unwrap_err(),
            DataError::Io(_)
        ));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthesize_profiles(7, 365).unwrap();
        let b = synthesize_profiles(7, 365).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_days(), 365);
    }

    #[test]
    fn synthetic_pv_zero_at_midnight() {
        let p = synthesize_profiles(11, 60).unwrap();
        for d in 0..60 {
            assert_eq!(p.pv()[d * 24], 0.0, "day {d}");
            assert_eq!(p.pv()[d * 24 + 5], 0.0, "day {d} hour 5");
        }
    }

    #[test]
    fn synthetic_prices_are_two_tier() {
        let p = synthesize_profiles(5, 30).unwrap();
        let opts = SynthOptions::default();
        for (i, &pr) in p.price().iter().enumerate() {
            let h = i % 24;
            let expect = if (8..=21).contains(&h) {
                opts.price_peak
            } else {
                opts.price_offpeak
            };
            assert_eq!(pr, expect);
        }
    }

    #[test]
    fn split_full_year() {
        let split = split_train_test(&flat_profile(365)).unwrap();
        assert_eq!(split.train_days.len(), 252);
        assert_eq!(split.test_days.len(), 113);
        // January: train 0..=20, test 21..=30.
        assert_eq!(&split.train_days[..21], (0..21).collect::<Vec<_>>().as_slice());
        assert_eq!(&split.test_days[..10], (21..31).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn split_two_months_covers_february() {
        // Jan + Feb = 59 days; February contributes 21 train, 7 test.
        let split = split_train_test(&flat_profile(59)).unwrap();
        assert_eq!(split.train_days.len(), 42);
        assert_eq!(split.test_days.len(), 17);
        assert!(split.train_days.contains(&31)); // Feb 1
        assert!(split.test_days.contains(&52)); // Feb 22
    }

    #[test]
    fn split_is_partition() {
        let split = split_train_test(&flat_profile(90)).unwrap();
        let mut all: Vec<usize> = split
            .train_days
            .iter()
            .chain(split.test_days.iter())
            .cloned()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..90).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_partial_month() {
        assert!(matches!(
            split_train_test(&flat_profile(20)).unwrap_err(),
            DataError::PartialMonth { days: 20 }
        ));
    }

    #[test]
    fn sampling_is_uniform_and_seeded() {
        use rand_chacha::ChaCha8Rng;
        let split = split_train_test(&flat_profile(365)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = vec![0u32; 365];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_training_day(&split, &mut rng).unwrap()] += 1;
        }
        for &d in &split.test_days {
            assert_eq!(counts[d], 0);
        }
        // Binomial 5-sigma band around the uniform expectation.
        let n = split.train_days.len() as f64;
        let expect = draws as f64 / n;
        let sigma = (draws as f64 * (1.0 / n) * (1.0 - 1.0 / n)).sqrt();
        for &d in &split.train_days {
            let diff = (counts[d] as f64 - expect).abs();
            assert!(diff < 5.0 * sigma, "day {d}: {} vs {expect}", counts[d]);
        }

        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let a: Vec<usize> = (0..50)
            .map(|_| sample_training_day(&split, &mut rng2).unwrap())
            .collect();
        let mut rng3 = ChaCha8Rng::seed_from_u64(99);
        let b: Vec<usize> = (0..50)
            .map(|_| sample_training_day(&split, &mut rng3).unwrap())
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn single_day_split_sampling() {
        let split = SplitSpec {
            train_days: vec![4],
            test_days: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_training_day(&split, &mut rng).unwrap(), 4);
        }
        let empty = SplitSpec {
            train_days: vec![],
            test_days: vec![],
        };
        assert!(matches!(
            sample_training_day(&empty, &mut rng).unwrap_err(),
            DataError::EmptyTrainSet
        ));
    }
}
