//! Three-point spaces `{0, x, y}` with `d(x,y) = s <= d(x,0) = d(y,0) = 1`:
//! exact norm identities, the lower bound for `‖δx - βδy‖`, and a grid
//! search measuring how far `(δx, δy)` is from having an isometric image
//! `(a_x, b_x), (a_y, b_y)` in two-dimensional ℓ1.

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::free_norm::{self, FreeVector};
use crate::metric::FiniteMetricSpace;
use crate::rational::{self, Rational};

pub fn space(s: &Rational) -> Result<FiniteMetricSpace> {
    check_s(s)?;
    FiniteMetricSpace::from_fn(vec!["0".into(), "x".into(), "y".into()], |i, j| {
        if i > 0 && j > 0 {
            s.clone()
        } else {
            rational::int(1)
        }
    })
}

fn check_s(s: &Rational) -> Result<()> {
    if !s.is_positive() || s > &Rational::one() {
        return Err(Error::Domain(format!("s = {} is outside (0, 1]", rational::format(s))));
    }
    Ok(())
}

/// `{1/4, 1/2, 1, 2, 4} ∪ {s, 1/s}`, sorted.
pub fn default_betas(s: &Rational) -> Vec<Rational> {
    let mut betas: Vec<Rational> = [(1, 4), (1, 2), (1, 1), (2, 1), (4, 1)]
        .iter()
        .map(|&(p, q)| rational::ratio(p, q))
        .chain([s.clone(), s.recip()])
        .collect();
    betas.sort();
    betas.dedup();
    betas
}

/// `max{s, sβ, s(β+1)/2}`.
pub fn beta_bound(s: &Rational, beta: &Rational) -> Rational {
    let half_sum = s * (beta + Rational::one()) / rational::int(2);
    rational::max(rational::max(s, &(s * beta)), &half_sum).clone()
}

/// `max{s, sβ, s/(2(β+1))}`, the other way to parse the bound.
pub fn beta_bound_alt(s: &Rational, beta: &Rational) -> Rational {
    let quotient = s / (rational::int(2) * (beta + Rational::one()));
    rational::max(rational::max(s, &(s * beta)), &quotient).clone()
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaRow {
    #[serde(with = "crate::rational")]
    pub beta: Rational,
    /// `‖δx - βδy‖`.
    #[serde(with = "crate::rational")]
    pub norm: Rational,
    #[serde(with = "crate::rational")]
    pub bound: Rational,
    #[serde(with = "crate::rational")]
    pub alt_bound: Rational,
    pub holds: bool,
    pub alt_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSearch {
    /// Grid step is `1 / resolution` on the box `[-1, 1]^4`.
    pub resolution: u32,
    pub pairs_examined: u64,
    /// Smallest over the grid of the largest violation among the four
    /// equalities and the two inequality families at the chosen `β`.
    #[serde(with = "crate::rational")]
    pub min_violation: Rational,
    /// `(a_x, b_x, a_y, b_y)` attaining the minimum.
    #[serde(with = "crate::rational::vec")]
    pub argmin: Vec<Rational>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreePointReport {
    #[serde(with = "crate::rational")]
    pub s: Rational,
    #[serde(with = "crate::rational")]
    pub norm_x: Rational,
    #[serde(with = "crate::rational")]
    pub norm_y: Rational,
    #[serde(with = "crate::rational")]
    pub norm_difference: Rational,
    #[serde(with = "crate::rational")]
    pub norm_sum: Rational,
    pub identities_hold: bool,
    pub betas: Vec<BetaRow>,
    pub search: GridSearch,
}

impl ThreePointReport {
    pub fn passed(&self) -> bool {
        self.identities_hold && self.betas.iter().all(|b| b.holds) && self.search.min_violation.is_positive()
    }
}

pub fn three_point_report(s: &Rational, betas: Option<&[Rational]>, resolution: u32) -> Result<ThreePointReport> {
    let space = space(s)?;
    let betas = betas.map_or_else(|| default_betas(s), <[Rational]>::to_vec);
    if betas.iter().any(|b| !b.is_positive()) {
        return Err(Error::Domain("β must be positive".into()));
    }
    let one = Rational::one();
    let x = FreeVector::dirac(3, 1);
    let y = FreeVector::dirac(3, 2);
    let norm = |v: &FreeVector| free_norm::free_norm(&space, v).map(|c| c.value);
    let norm_x = norm(&x)?;
    let norm_y = norm(&y)?;
    let norm_difference = norm(&x.minus(&y))?;
    let norm_sum = norm(&x.plus(&y))?;
    let identities_hold = norm_x == one && norm_y == one && &norm_difference == s && norm_sum == rational::int(2);
    let rows = betas
        .iter()
        .map(|beta| {
            let value = norm(&x.minus(&y.scaled(beta)))?;
            let bound = beta_bound(s, beta);
            let alt_bound = beta_bound_alt(s, beta);
            Ok(BetaRow {
                beta: beta.clone(),
                holds: bound <= value,
                alt_holds: alt_bound <= value,
                norm: value,
                bound,
                alt_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let search = grid_search(s, &betas, resolution)?;
    Ok(ThreePointReport {
        s: s.clone(),
        norm_x,
        norm_y,
        norm_difference,
        norm_sum,
        identities_hold,
        betas: rows,
        search,
    })
}

fn small(value: &Rational) -> Result<(i128, i128)> {
    match (value.numer().to_i128(), value.denom().to_i128()) {
        (Some(p), Some(q)) if q < 1 << 40 && p.abs() < 1 << 40 => Ok((p, q)),
        _ => Err(Error::Domain(format!("{} is too large for the grid search", rational::format(value)))),
    }
}

/// Nonnegative fraction `num / den` compared by cross multiplication.
#[derive(Clone, Copy, Debug)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    const INFINITE: Frac = Frac { num: 1, den: 0 };

    fn lt(self, other: Frac) -> bool {
        self.num * other.den < other.num * self.den
    }

    fn max(self, other: Frac) -> Frac {
        if self.lt(other) { other } else { self }
    }
}

/// Values of `β` where `|a_x - β a_y| + |b_x - β b_y|` changes slope.
fn kinks(ax: i128, bx: i128, ay: i128, by: i128) -> impl Iterator<Item = (i128, i128)> {
    [(ax, ay), (bx, by)]
        .into_iter()
        .filter(|&(n, d)| n != 0 && d != 0 && (n > 0) == (d > 0))
        .map(|(n, d)| (n.abs(), d.abs()))
}

/// Exhaustive search over `(a_x, b_x, a_y, b_y) ∈ ([-1, 1] ∩ Z/k)^4`.
///
/// Each point is scored by its largest violation: the four equalities, and
/// both inequality families at every `β` in `betas`, at `β = 1` and at the
/// kinks of the right-hand side. The bound is linear on either side of
/// `β = 1` and the right-hand side is linear between its kinks, so these
/// extra values give the worst `β` of each family wherever it is finite.
///
/// The system is invariant under the symmetries of the ℓ1 square applied
/// to both points, so `x` ranges over `0 <= b_x <= a_x` only. Points are
/// visited in order of their own sphere violation, which bounds the total
/// violation from below and lets both loops stop early.
pub fn grid_search(s: &Rational, betas: &[Rational], resolution: u32) -> Result<GridSearch> {
    check_s(s)?;
    if resolution == 0 {
        return Err(Error::Domain("resolution must be positive".into()));
    }
    let k = i128::from(resolution);
    let (p, q) = small(s)?;
    let fixed = betas.iter().map(small).collect::<Result<Vec<_>>>()?;
    // `bound(β) - |x - β y|` for `β = u/w`, over the denominator `2kqw`.
    let family = |u: i128, w: i128, x: (i128, i128), y: (i128, i128)| {
        let bound = (2 * k * p * w).max(2 * k * p * u).max(k * p * (u + w));
        let rhs = 2 * q * ((x.0 * w - u * y.0).abs() + (x.1 * w - u * y.1).abs());
        Frac {
            num: (bound - rhs).max(0),
            den: 2 * k * q * w,
        }
    };
    let sphere = |a: i128, b: i128| (a.abs() + b.abs() - k).abs();
    let mut xs: Vec<(i128, i128, i128)> = (0..=k)
        .flat_map(|a| (0..=a).map(move |b| (sphere(a, b), a, b)))
        .collect();
    let mut ys: Vec<(i128, i128, i128)> = (-k..=k)
        .flat_map(|a| (-k..=k).map(move |b| (sphere(a, b), a, b)))
        .collect();
    xs.sort();
    ys.sort();

    let mut best = Frac::INFINITE;
    let mut argmin = [0i128; 4];
    let mut pairs = 0u64;
    for &(ex, ax, bx) in &xs {
        let ex = Frac { num: ex, den: k };
        if !ex.lt(best) {
            break;
        }
        for &(ey, ay, by) in &ys {
            let ey = Frac { num: ey, den: k };
            if !ey.lt(best) {
                break;
            }
            pairs += 1;
            let e3 = Frac {
                num: (((ax - ay).abs() + (bx - by).abs()) * q - k * p).abs(),
                den: k * q,
            };
            let e4 = Frac {
                num: ((ax + ay).abs() + (bx + by).abs() - 2 * k).abs(),
                den: k,
            };
            let mut worst = ex.max(ey).max(e3).max(e4);
            if !worst.lt(best) {
                continue;
            }
            let (x, y) = ((ax, bx), (ay, by));
            let forward = fixed.iter().copied().chain([(1, 1)]).chain(kinks(ax, bx, ay, by));
            for (u, w) in forward {
                worst = worst.max(family(u, w, x, y));
            }
            let backward = fixed.iter().copied().chain([(1, 1)]).chain(kinks(ay, by, ax, bx));
            for (u, w) in backward {
                worst = worst.max(family(u, w, y, x));
            }
            if worst.lt(best) {
                best = worst;
                argmin = [ax, bx, ay, by];
            }
        }
    }
    let to_rational = |n: i128, d: i128| Rational::new(n.into(), d.into());
    Ok(GridSearch {
        resolution,
        pairs_examined: pairs,
        min_violation: to_rational(best.num, best.den),
        argmin: argmin.iter().map(|&c| to_rational(c, k)).collect(),
    })
}

/// The score used by [`grid_search`] at one point, evaluated directly in
/// rationals.
pub fn violation(s: &Rational, betas: &[Rational], point: &[Rational; 4]) -> Rational {
    let [ax, bx, ay, by] = point;
    let one = Rational::one();
    let mut worst = [
        (ax.abs() + bx.abs() - &one).abs(),
        (ay.abs() + by.abs() - &one).abs(),
        ((ax - ay).abs() + (bx - by).abs() - s).abs(),
        ((ax + ay).abs() + (bx + by).abs() - rational::int(2)).abs(),
    ]
    .into_iter()
    .max()
    .expect("nonempty");
    let kinks = |x: (&Rational, &Rational), y: (&Rational, &Rational)| {
        [(x.0, y.0), (x.1, y.1)]
            .into_iter()
            .filter(|(_, d)| !d.is_zero())
            .map(|(n, d)| n / d)
            .filter(Signed::is_positive)
            .collect::<Vec<_>>()
    };
    let gap = |beta: &Rational, x: (&Rational, &Rational), y: (&Rational, &Rational)| {
        beta_bound(s, beta) - ((x.0 - beta * y.0).abs() + (x.1 - beta * y.1).abs())
    };
    let base: Vec<Rational> = betas.iter().cloned().chain([one]).collect();
    for (x, y) in [((ax, bx), (ay, by)), ((ay, by), (ax, bx))] {
        for beta in base.iter().cloned().chain(kinks(x, y)) {
            worst = worst.max(gap(&beta, x, y));
        }
    }
    worst.max(Rational::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn identities() {
        for s in [ratio(1, 4), ratio(1, 2), ratio(3, 4), int(1)] {
            let report = three_point_report(&s, None, 8).unwrap();
            assert!(report.identities_hold);
            assert!(report.betas.iter().all(|b| b.holds && b.alt_holds));
        }
    }

    #[test]
    fn beta_two_at_half() {
        let s = ratio(1, 2);
        let report = three_point_report(&s, Some(&[int(2)]), 4).unwrap();
        assert_eq!(report.betas[0].norm, ratio(3, 2));
        assert_eq!(report.betas[0].bound, int(1));
        assert_eq!(beta_bound(&s, &int(2)), int(1));
        assert_eq!(beta_bound_alt(&s, &int(2)), int(1));
    }

    #[test]
    fn symmetric_case_is_tight() {
        let report = three_point_report(&int(1), Some(&[int(1)]), 4).unwrap();
        assert_eq!(report.betas[0].norm, int(1));
        assert_eq!(report.betas[0].bound, int(1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(three_point_report(&int(0), None, 4).is_err());
        assert!(three_point_report(&ratio(3, 2), None, 4).is_err());
        assert!(three_point_report(&ratio(1, 2), Some(&[int(-1)]), 4).is_err());
        assert!(grid_search(&ratio(1, 2), &[int(1)], 0).is_err());
    }

    #[test]
    fn default_grid_contains_s_points() {
        let betas = default_betas(&ratio(1, 3));
        assert!(betas.contains(&ratio(1, 3)) && betas.contains(&int(3)));
        assert_eq!(default_betas(&int(1)).len(), 5);
    }

    #[test]
    fn search_matches_direct_evaluation() {
        let s = ratio(1, 2);
        let betas = default_betas(&s);
        let search = grid_search(&s, &betas, 8).unwrap();
        let point: [Rational; 4] = search.argmin.clone().try_into().unwrap();
        assert_eq!(violation(&s, &betas, &point), search.min_violation);
        // Brute force over the coarse full grid agrees.
        let k = 8;
        let grid: Vec<Rational> = (-k..=k).map(|i| ratio(i, k)).collect();
        let mut best: Option<Rational> = None;
        for ax in &grid {
            for bx in &grid {
                for ay in &grid {
                    for by in &grid {
                        let v = violation(&s, &betas, &[ax.clone(), bx.clone(), ay.clone(), by.clone()]);
                        if best.as_ref().is_none_or(|b| &v < b) {
                            best = Some(v);
                        }
                    }
                }
            }
        }
        assert_eq!(best.unwrap(), search.min_violation);
    }

    #[test]
    fn kinks_catch_what_the_fixed_grid_misses() {
        let s = ratio(1, 2);
        let point = [ratio(1, 2), ratio(1, 2), ratio(1, 4), ratio(3, 4)];
        // The equalities and every fixed β hold exactly at this point.
        // The worst kink is β = 3/2 in the swapped family: bound 3/4 against
        // |1/4 - 3/4| + |3/4 - 3/4| = 1/2.
        assert_eq!(violation(&s, &[], &point), ratio(1, 4));
        assert_eq!(super::beta_bound(&s, &ratio(3, 2)), ratio(3, 4));
        let search = grid_search(&s, &default_betas(&s), 16).unwrap();
        assert!(search.min_violation.is_positive());
    }
}
