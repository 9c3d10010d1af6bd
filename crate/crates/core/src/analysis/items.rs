use crate::distributions::CategoricalDist;
use crate::error::{Error, Result};

/// Below this combined mass the item pair is treated as not administered.
pub const NOT_ADMINISTERED_MASS: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LikelihoodRatio {
    Ratio(f64),
    /// `mass(A) + mass(B)` under the threshold.
    NotAdministered,
    /// `mass(B) = 0` with `mass(A) > 0`.
    Infinite,
}

impl std::fmt::Display for LikelihoodRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LikelihoodRatio::Ratio(r) => write!(f, "{r}"),
            LikelihoodRatio::NotAdministered => f.write_str("-"),
            LikelihoodRatio::Infinite => f.write_str("inf"),
        }
    }
}

/// `mass(A) / mass(B)` under `dist`. `A` and `B` must be disjoint.
pub fn item_likelihood_ratio(dist: &CategoricalDist, a: &[usize], b: &[usize]) -> Result<LikelihoodRatio> {
    if a.iter().any(|x| b.contains(x)) {
        return Err(Error::InvalidParameter("item sets overlap".into()));
    }
    let mass = |set: &[usize]| -> Result<f64> {
        let mut seen = Vec::with_capacity(set.len());
        let mut total = 0.0;
        for &i in set {
            dist.log_prob(i)?;
            if !seen.contains(&i) {
                seen.push(i);
                total += dist.prob(i);
            }
        }
        Ok(total)
    };
    let (ma, mb) = (mass(a)?, mass(b)?);
    Ok(if ma + mb < NOT_ADMINISTERED_MASS {
        LikelihoodRatio::NotAdministered
    } else if mb == 0.0 {
        LikelihoodRatio::Infinite
    } else {
        LikelihoodRatio::Ratio(ma / mb)
    })
}

/// The `k` most probable items, ties broken toward the lower id.
pub fn top_items(dist: &CategoricalDist, k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut ids: Vec<usize> = (0..dist.len()).collect();
    ids.sort_by(|&a, &b| dist.prob(b).total_cmp(&dist.prob(a)));
    Ok(ids.into_iter().take(k).map(|i| (i, dist.prob(i))).collect())
}
