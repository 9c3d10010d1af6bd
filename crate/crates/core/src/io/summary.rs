use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Episode, Stream, StreamMap};

/// Population statistics of a count variable. `std` uses the N denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthStats {
    pub n: usize,
    pub min: usize,
    pub mean: f64,
    pub std: f64,
    pub max: usize,
}

impl LengthStats {
    /// Accumulates in exact integer arithmetic, so the result does not depend
    /// on the order of `values`.
    fn of(values: impl Iterator<Item = usize>) -> Option<Self> {
        let (mut n, mut sum, mut sum_sq) = (0u128, 0u128, 0u128);
        let (mut min, mut max) = (usize::MAX, 0usize);
        for v in values {
            n += 1;
            sum += v as u128;
            sum_sq += (v as u128) * (v as u128);
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return None;
        }
        // N² · variance = N·Σv² − (Σv)², exact and non-negative.
        let scaled_var = n * sum_sq - sum * sum;
        Some(Self {
            n: n as usize,
            min,
            mean: sum as f64 / n as f64,
            std: (scaled_var as f64).sqrt() / n as f64,
            max,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSummary {
    pub n_episodes: usize,
    pub lengths: StreamMap<LengthStats>,
    /// Items per timepoint, pooled over every timepoint of the stream. `None`
    /// for flat streams and for multiset streams with no timepoints at all.
    pub items_per_timepoint: StreamMap<Option<LengthStats>>,
}

pub fn summarize(data: &[Episode]) -> Result<CorpusSummary> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lengths = StreamMap::from_fn(|s| {
        LengthStats::of(data.iter().map(|e| e.stream_len(s))).expect("non-empty corpus")
    });
    let items_per_timepoint = StreamMap::from_fn(|s| {
        if !s.is_hmm() {
            return None;
        }
        LengthStats::of(
            data.iter()
                .flat_map(|e| e.nested(s).unwrap_or(&[]))
                .map(Vec::len),
        )
    });
    Ok(CorpusSummary {
        n_episodes: data.len(),
        lengths,
        items_per_timepoint,
    })
}

impl CorpusSummary {
    /// Tab-separated table, one row per statistic set.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("stream\tquantity\tmin\tmean\tstd\tmax\n");
        let mut row = |s: Stream, q: &str, st: &LengthStats| {
            writeln!(out, "{s}\t{q}\t{}\t{}\t{}\t{}", st.min, st.mean, st.std, st.max).unwrap();
        };
        for s in Stream::ALL {
            row(s, "length", &self.lengths[s]);
        }
        for s in Stream::HMM {
            if let Some(st) = &self.items_per_timepoint[s] {
                row(s, "items_per_timepoint", st);
            }
        }
        writeln!(out, "# episodes\t{}", self.n_episodes).unwrap();
        out
    }
}
