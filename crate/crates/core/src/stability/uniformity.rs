use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StabilityError;
use crate::interval::{symmetric_difference_len, Interval};
use crate::tower::{reference_histogram, tail_sum, GibbsMarkovTower};

/// Matching diagnostics between a perturbed tower and a reference tower.
/// Masses are Lebesgue lengths divided by the reference base length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityDiagnostics {
    /// Mass of the symmetric difference of the covered sets.
    pub sym_diff_base_mass: f64,
    /// Per return time `j <= N`: mass of `{R_n = j} sym-diff {R_0 = j}`.
    pub per_time_sym_diff: BTreeMap<u32, f64>,
    /// `sum_{j >= N} j m{R_n = j}`.
    pub tail_n: f64,
    pub tail_0: f64,
    pub depth: usize,
    /// For `depth > 1`: total symmetric difference of the sets with a given
    /// word of the first `depth` return times, over words with letters `<= N`.
    pub word_sym_diff: Option<f64>,
}

/// Cylinder sets of all branch words of length `depth` whose return times
/// are at most `n`, grouped by the word of return times.
fn cylinders(tower: &GibbsMarkovTower, depth: usize, n: u32) -> BTreeMap<Vec<u32>, Vec<Interval>> {
    let mut out: BTreeMap<Vec<u32>, Vec<Interval>> = BTreeMap::new();
    // (return-time word, cylinder) after extending on the left
    let mut level: Vec<(Vec<u32>, Interval)> = vec![(Vec::new(), tower.base())];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (word, target) in &level {
            for b in tower.branches().iter().filter(|b| b.return_time <= n) {
                let (u, v) = (b.inverse(target.lo), b.inverse(target.hi));
                let iv = Interval::spanning(u, v);
                if iv.is_empty() {
                    continue;
                }
                let mut w = Vec::with_capacity(word.len() + 1);
                w.push(b.return_time);
                w.extend_from_slice(word);
                next.push((w, iv));
            }
        }
        level = next;
    }
    for (w, iv) in level {
        out.entry(w).or_default().push(iv);
    }
    out
}

pub fn uniformity_diagnostics(
    tower_n: &GibbsMarkovTower,
    tower_0: &GibbsMarkovTower,
    n: u32,
    depth: usize,
) -> Result<UniformityDiagnostics, StabilityError> {
    let (bn, b0) = (tower_n.base(), tower_0.base());
    if bn.overlap_len(&b0) <= 0.0 {
        return Err(StabilityError::BaseMismatch {
            first: [bn.lo, bn.hi],
            second: [b0.lo, b0.hi],
        });
    }
    if n == 0 || depth == 0 {
        return Err(StabilityError::Invalid("N and depth must be at least 1".into()));
    }
    let scale = b0.len();
    let domains = |t: &GibbsMarkovTower, pick: &dyn Fn(u32) -> bool| -> Vec<Interval> {
        t.branches()
            .iter()
            .filter(|b| pick(b.return_time))
            .map(|b| b.domain)
            .collect()
    };
    let sym_diff_base_mass =
        symmetric_difference_len(&domains(tower_n, &|_| true), &domains(tower_0, &|_| true)) / scale;
    let per_time_sym_diff = (1..=n)
        .map(|j| {
            let m = symmetric_difference_len(&domains(tower_n, &|t| t == j), &domains(tower_0, &|t| t == j));
            (j, m / scale)
        })
        .collect();
    let word_sym_diff = (depth > 1).then(|| {
        let (cn, c0) = (cylinders(tower_n, depth, n), cylinders(tower_0, depth, n));
        let mut words: Vec<&Vec<u32>> = cn.keys().chain(c0.keys()).collect();
        words.sort();
        words.dedup();
        let empty = Vec::new();
        words
            .into_iter()
            .map(|w| symmetric_difference_len(cn.get(w).unwrap_or(&empty), c0.get(w).unwrap_or(&empty)))
            .sum::<f64>()
            / scale
    });
    Ok(UniformityDiagnostics {
        sym_diff_base_mass,
        per_time_sym_diff,
        tail_n: tail_sum(&reference_histogram(tower_n), n),
        tail_0: tail_sum(&reference_histogram(tower_0), n),
        depth,
        word_sym_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{first_return_tower, FirstReturnOptions, Map1D};
    use crate::tower::{Branch, DistortionBudget, DEFAULT_R_MAX};

    fn first_return(hi: f64) -> GibbsMarkovTower {
        first_return_tower(&Map1D::Doubling, Interval::new(0.0, hi), &FirstReturnOptions::default())
            .unwrap()
            .tower
    }

    fn budget() -> DistortionBudget {
        DistortionBudget::new(0.25, 0.5, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn tower_against_itself_is_zero() {
        let t = first_return(0.5);
        let u = uniformity_diagnostics(&t, &t, 8, 2).unwrap();
        assert_eq!(u.sym_diff_base_mass, 0.0);
        assert!(u.per_time_sym_diff.values().all(|&m| m == 0.0));
        assert_eq!(u.word_sym_diff, Some(0.0));
        assert_eq!(u.tail_n, u.tail_0);
    }

    #[test]
    fn nearby_dyadic_bases() {
        let a = first_return(0.5);
        let b = first_return(0.5 - 2f64.powi(-10));
        let u = uniformity_diagnostics(&b, &a, 8, 1).unwrap();
        let truncation = (a.unassigned_mass() + b.unassigned_mass()) / 0.5;
        assert!(
            u.sym_diff_base_mass <= 2f64.powi(-9) + truncation,
            "{}",
            u.sym_diff_base_mass
        );
    }

    #[test]
    fn disjoint_families_add_up() {
        let unit = Interval::new(0.0, 1.0);
        let half = |lo: f64| {
            let b = Branch::affine_onto(Interval::new(lo, lo + 0.25), unit, 1);
            GibbsMarkovTower::new(unit, vec![b], DEFAULT_R_MAX, 0.75, budget()).unwrap()
        };
        let (t1, t2) = (half(0.0), half(0.5));
        let u = uniformity_diagnostics(&t1, &t2, 4, 1).unwrap();
        assert!((u.sym_diff_base_mass - 0.5).abs() < 1e-15);
        assert!((u.per_time_sym_diff[&1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disjoint_bases_are_rejected() {
        let a = first_return(0.5);
        let unit = Interval::new(2.0, 3.0);
        let b = GibbsMarkovTower::new(
            unit,
            vec![Branch::affine_onto(unit, unit, 1)],
            DEFAULT_R_MAX,
            0.0,
            budget(),
        )
        .unwrap();
        assert!(matches!(
            uniformity_diagnostics(&a, &b, 4, 1),
            Err(StabilityError::BaseMismatch { .. })
        ));
    }

    #[test]
    fn tails_match_return_time_stats() {
        let t = first_return(0.5);
        let d = crate::tower::QuotientDensity::uniform(64);
        let stats = crate::tower::return_time_stats(&t, &d);
        let u = uniformity_diagnostics(&t, &t, 5, 1).unwrap();
        assert_eq!(u.tail_n.to_bits(), stats.tail(5).to_bits());
        assert!((u.tail_n - 0.375).abs() < 1e-9);
    }
}
