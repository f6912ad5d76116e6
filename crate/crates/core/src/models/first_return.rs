//! First-return towers of interval maps.
//!
//! Pieces are subintervals of the base on which `f^t` is monotone and has not
//! yet returned. Each step splits a piece's image at the turning point,
//! applies one lap, and sorts the new image against the base: a part that
//! covers the base becomes a branch, a part that meets the base without
//! covering it is a partial return, and parts outside the base keep going.

use serde::{Deserialize, Serialize};

use super::map1d::Map1D;
use crate::interval::Interval;
use crate::tower::{Branch, BranchMap, GibbsMarkovTower, Jacobian, TowerError, DEFAULT_R_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstReturnOptions {
    pub r_max: u32,
    /// Pieces shorter than this are abandoned.
    pub min_branch_len: f64,
    /// Cap on simultaneously tracked pieces.
    pub max_pieces: usize,
    /// Image endpoints this close to a base endpoint or the turning point are
    /// snapped onto it.
    pub endpoint_tol: f64,
    /// Unassigned fraction of the base above which the base is reported as
    /// not Markov.
    pub nonmarkov_threshold: f64,
    pub fit_beta: f64,
    pub fit_samples: usize,
}

impl Default for FirstReturnOptions {
    fn default() -> Self {
        FirstReturnOptions {
            r_max: DEFAULT_R_MAX,
            min_branch_len: 1e-12,
            max_pieces: 1 << 16,
            endpoint_tol: 1e-12,
            nonmarkov_threshold: 1e-3,
            fit_beta: 0.5,
            fit_samples: 16,
        }
    }
}

/// Raised, not returned as an error, when too much of the base has no
/// detected full-branch return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovBase {
    pub unassigned_fraction: f64,
    pub threshold: f64,
    pub r_max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstReturnOutcome {
    pub tower: GibbsMarkovTower,
    pub warning: Option<NonMarkovBase>,
    /// Base length returning onto part of the base only.
    pub partial_return_mass: f64,
    /// Base length in pieces abandoned as too short.
    pub short_piece_mass: f64,
    /// Base length still travelling at `r_max` or dropped by the piece cap.
    pub unresolved_mass: f64,
    pub pieces_capped: bool,
}

#[derive(Debug, Clone)]
struct Piece {
    domain: Interval,
    image: Interval,
    itinerary: Vec<u8>,
    /// Whether `f^t` increases on the domain.
    increasing: bool,
}

impl Piece {
    /// Domain point mapped to `y`; image endpoints map to domain endpoints exactly.
    fn pull(&self, map: &Map1D, y: f64) -> f64 {
        let (at_lo, at_hi) = if self.increasing {
            (self.domain.lo, self.domain.hi)
        } else {
            (self.domain.hi, self.domain.lo)
        };
        if y == self.image.lo {
            return at_lo;
        }
        if y == self.image.hi {
            return at_hi;
        }
        let x = self.itinerary.iter().rev().fold(y, |z, &lap| map.lap_inverse(lap, z));
        x.clamp(self.domain.lo, self.domain.hi)
    }

    /// Subpiece over the image part `[y0, y1]`.
    fn restrict(&self, map: &Map1D, y0: f64, y1: f64) -> Piece {
        let (a, b) = (self.pull(map, y0), self.pull(map, y1));
        Piece {
            domain: Interval::spanning(a, b),
            image: Interval::new(y0, y1),
            itinerary: self.itinerary.clone(),
            increasing: self.increasing,
        }
    }
}

fn snap(y: f64, targets: &[f64], tol: f64) -> f64 {
    targets.iter().copied().find(|t| (y - t).abs() <= tol).unwrap_or(y)
}

/// Builds the first-return tower of `map` to `base`.
pub fn first_return_tower(
    map: &Map1D,
    base: Interval,
    opts: &FirstReturnOptions,
) -> Result<FirstReturnOutcome, TowerError> {
    let dom = map.domain();
    if !(base.len() > 0.0 && base.lo >= dom.lo && base.hi <= dom.hi) {
        return Err(TowerError::Invalid(format!(
            "base {base} is not a subinterval of the map domain {dom}"
        )));
    }
    if opts.r_max == 0 || !(opts.min_branch_len > 0.0) || opts.max_pieces == 0 {
        return Err(TowerError::Invalid(
            "r_max, min_branch_len and max_pieces must be positive".into(),
        ));
    }
    let c = map.turning_point();
    let tol = opts.endpoint_tol;
    let targets = [base.lo, base.hi, c, dom.lo, dom.hi];

    let mut live = vec![Piece {
        domain: base,
        image: base,
        itinerary: Vec::new(),
        increasing: true,
    }];
    let mut branches = Vec::new();
    let (mut partial, mut short, mut unresolved) = (0.0, 0.0, 0.0);
    let mut capped = false;

    for t in 1..=opts.r_max {
        let mut next = Vec::new();
        for piece in live.drain(..) {
            let halves = if piece.image.lo < c && c < piece.image.hi {
                vec![
                    piece.restrict(map, piece.image.lo, c),
                    piece.restrict(map, c, piece.image.hi),
                ]
            } else {
                vec![piece]
            };
            for half in halves {
                let lap = map.lap_of(half.image.mid());
                let (u, v) = (map.lap_eval(lap, half.image.lo), map.lap_eval(lap, half.image.hi));
                let flips = v < u;
                let image = Interval::spanning(snap(u, &targets, tol), snap(v, &targets, tol));
                let mut itinerary = half.itinerary;
                itinerary.push(lap);
                let moved = Piece {
                    domain: half.domain,
                    image,
                    itinerary,
                    increasing: half.increasing != flips,
                };
                if moved.domain.is_empty() || moved.image.is_empty() {
                    continue;
                }
                let cut_lo = base.lo.clamp(image.lo, image.hi);
                let cut_hi = base.hi.clamp(image.lo, image.hi);
                if image.lo < cut_lo {
                    next.push(moved.restrict(map, image.lo, cut_lo));
                }
                if cut_hi < image.hi {
                    next.push(moved.restrict(map, cut_hi, image.hi));
                }
                if cut_lo < cut_hi {
                    let inside = moved.restrict(map, cut_lo, cut_hi);
                    if cut_lo == base.lo && cut_hi == base.hi {
                        branches.push(Branch::new(
                            inside.domain,
                            t,
                            BranchMap::Composed {
                                map: *map,
                                itinerary: inside.itinerary,
                            },
                            Jacobian::Derived,
                        ));
                    } else {
                        partial += inside.domain.len();
                    }
                }
            }
        }
        next.retain(|p| {
            let keep = p.domain.len() >= opts.min_branch_len;
            if !keep {
                short += p.domain.len();
            }
            keep
        });
        if next.len() > opts.max_pieces {
            capped = true;
            next.sort_by(|a, b| b.domain.len().total_cmp(&a.domain.len()));
            unresolved += next.drain(opts.max_pieces..).map(|p| p.domain.len()).sum::<f64>();
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    unresolved += live.iter().map(|p| p.domain.len()).sum::<f64>();

    let placeholder = crate::tower::DistortionBudget::new(0.0, opts.fit_beta, 0.0, 0.0, 0.0)?;
    let tower = GibbsMarkovTower::with_uncovered_mass(base, branches, opts.r_max, placeholder)?;
    let budget = tower.fit_budget(opts.fit_beta, opts.fit_samples)?;
    let tower = tower.with_budget(budget)?;
    let fraction = tower.unassigned_mass() / base.len();
    let warning = (fraction > opts.nonmarkov_threshold).then_some(NonMarkovBase {
        unassigned_fraction: fraction,
        threshold: opts.nonmarkov_threshold,
        r_max: opts.r_max,
    });
    Ok(FirstReturnOutcome {
        tower,
        warning,
        partial_return_mass: partial,
        short_piece_mass: short,
        unresolved_mass: unresolved,
        pieces_capped: capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::system::{iterate, System};
    use crate::tower::{reference_histogram, validate_tower};

    fn build(map: Map1D, lo: f64, hi: f64) -> FirstReturnOutcome {
        first_return_tower(&map, Interval::new(lo, hi), &FirstReturnOptions::default()).unwrap()
    }

    #[test]
    fn doubling_on_the_full_interval_is_trivial() {
        let out = build(Map1D::Doubling, 0.0, 1.0);
        let t = &out.tower;
        assert_eq!(t.branches().len(), 2);
        assert!(t.branches().iter().all(|b| b.return_time == 1));
        assert_eq!(t.unassigned_mass(), 0.0);
        assert!(out.warning.is_none());
    }

    #[test]
    fn doubling_on_half_has_geometric_masses() {
        let out = build(Map1D::Doubling, 0.0, 0.5);
        let t = &out.tower;
        let h = reference_histogram(t);
        for (&k, &m) in &h {
            assert_eq!(m, 0.5f64.powi(k as i32), "k = {k}");
        }
        assert!(t.unassigned_mass() < 1e-12);
        assert!(h.len() >= 38);
        validate_tower(t, 16).unwrap();
    }

    #[test]
    fn logistic_on_the_full_interval_has_two_laps() {
        let out = build(Map1D::Logistic, 0.0, 1.0);
        assert_eq!(out.tower.branches().len(), 2);
        assert!(out.tower.branches().iter().all(|b| b.return_time == 1));
    }

    #[test]
    fn logistic_nice_interval_is_markov() {
        let out = build(Map1D::Logistic, 0.25, 0.75);
        assert!(out.warning.is_none(), "{:?}", out.warning);
        assert_eq!(out.partial_return_mass, 0.0);
        validate_tower(&out.tower, 16).unwrap();
    }

    #[test]
    fn branch_maps_are_iterates() {
        let out = build(Map1D::tent(2.0).unwrap(), 0.25, 0.5);
        let sys = System::Interval(Map1D::tent(2.0).unwrap());
        for b in out.tower.branches().iter().take(12) {
            let x = b.domain.from_unit(0.37);
            let direct = iterate(&sys, [x, 0.0], b.return_time as usize).unwrap()[0];
            assert!((direct - b.eval(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn non_markov_tent_reports_unassigned_mass() {
        let opts = FirstReturnOptions {
            r_max: 12,
            ..FirstReturnOptions::default()
        };
        let out = first_return_tower(&Map1D::tent(1.9).unwrap(), Interval::new(0.3, 0.6), &opts).unwrap();
        assert!(out.partial_return_mass > 0.0);
        assert!(out.warning.is_some());
        let covered: f64 = out.tower.branches().iter().map(|b| b.domain.len()).sum();
        let accounted = covered + out.partial_return_mass + out.short_piece_mass + out.unresolved_mass;
        assert!((accounted - 0.3).abs() < 1e-12);
    }

    #[test]
    fn base_outside_domain_is_rejected() {
        assert!(first_return_tower(
            &Map1D::Doubling,
            Interval::new(0.5, 1.5),
            &FirstReturnOptions::default()
        )
        .is_err());
    }
}
