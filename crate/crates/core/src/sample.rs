//! Seeded deterministic point sampling and the data-parallel sample map.
//!
//! All verification in this crate happens at finitely many sample points,
//! so reproducibility is part of the contract: a `Sampler` with a fixed
//! seed always produces the same points, on every platform. Coordinates
//! marked nonzero are kept away from zero by a magnitude floor, and scenes
//! may declare excluded loci — points where a declared expression is
//! smaller than [`EXCLUSION_FLOOR`] in absolute value are skipped, which
//! keeps rank decisions away from genuinely singular sets.
//!
//! Per-point work is embarrassingly parallel; [`map_points`] fans it out
//! with rayon when the `parallel` feature (default) is enabled and falls
//! back to a plain sequential loop otherwise. [`map_points_seq`] is always
//! sequential and exists so benchmarks can compare the two.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{Chart, CoordDomain, Expr};
use crate::{Error, Result};

/// Default sampling seed.
pub const DEFAULT_SEED: u64 = 42;

/// Magnitude floor for coordinates marked nonzero.
pub const DEFAULT_NONZERO_FLOOR: f64 = 0.25;

/// Points where a declared excluded-locus expression is below this in
/// absolute value are skipped.
pub const EXCLUSION_FLOOR: f64 = 0.05;

/// Deterministic sampler over a chart's domain box.
#[derive(Debug, Clone)]
pub struct Sampler {
    seed: u64,
    nonzero_floor: f64,
    box_overrides: Vec<(String, f64, f64)>,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::new(DEFAULT_SEED)
    }
}

impl Sampler {
    pub fn new(seed: u64) -> Sampler {
        Sampler {
            seed,
            nonzero_floor: DEFAULT_NONZERO_FLOOR,
            box_overrides: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Restrict sampling of one interval coordinate to `[lo, hi]` without
    /// touching the chart's domain (trajectories may still use the full
    /// domain).
    pub fn with_box(mut self, coord: &str, lo: f64, hi: f64) -> Sampler {
        assert!(lo < hi, "empty sampling interval");
        self.box_overrides.push((coord.to_string(), lo, hi));
        self
    }

    pub fn with_nonzero_floor(mut self, floor: f64) -> Sampler {
        assert!(floor > 0.0);
        self.nonzero_floor = floor;
        self
    }

    fn draw(&self, rng: &mut ChaCha8Rng, chart: &Chart) -> Vec<f64> {
        (0..chart.dim())
            .map(|i| {
                let over = self
                    .box_overrides
                    .iter()
                    .find(|(c, _, _)| c == chart.coord(i));
                match (chart.domain(i), over) {
                    (_, Some(&(_, lo, hi))) | (CoordDomain::Interval(lo, hi), None) => {
                        lo + rng.gen::<f64>() * (hi - lo)
                    }
                    (CoordDomain::Nonzero { max_abs }, None) => {
                        let sign = if rng.gen::<f64>() < 0.5 { -1.0 } else { 1.0 };
                        let mag = self.nonzero_floor
                            + rng.gen::<f64>() * (max_abs - self.nonzero_floor).max(0.0);
                        sign * mag
                    }
                }
            })
            .collect()
    }

    fn admissible(&self, chart: &Chart, point: &[f64], excluded: &[Expr]) -> bool {
        if chart.first_escape(point).is_some() {
            return false;
        }
        for (i, v) in point.iter().enumerate() {
            if matches!(chart.domain(i), CoordDomain::Nonzero { .. })
                && v.abs() < self.nonzero_floor * 0.999
            {
                return false;
            }
        }
        excluded.iter().all(|e| {
            e.evaluate(point)
                .map(|v| v.abs() >= EXCLUSION_FLOOR)
                .unwrap_or(false)
        })
    }

    /// `count` points in the sampling box.
    pub fn points(&self, chart: &Chart, count: usize) -> Result<Vec<Vec<f64>>> {
        self.points_excluding(chart, count, &[])
    }

    /// `count` points avoiding the excluded loci.
    pub fn points_excluding(
        &self,
        chart: &Chart,
        count: usize,
        excluded: &[Expr],
    ) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(count);
        let max_attempts = count.max(1) * 1000;
        for _ in 0..max_attempts {
            if out.len() == count {
                break;
            }
            let p = self.draw(&mut rng, chart);
            if self.admissible(chart, &p, excluded) {
                out.push(p);
            }
        }
        if out.len() < count {
            return Err(Error::SamplingExhausted {
                requested: count,
                found: out.len(),
            });
        }
        Ok(out)
    }

    /// `count` points on the zero set of `constraints`, found by projecting
    /// box samples onto the set with a Gauss-Newton iteration. Points that
    /// fail to converge, leave the domain, or hit an excluded locus are
    /// rejected and redrawn.
    pub fn points_on(
        &self,
        chart: &Chart,
        constraints: &[Expr],
        count: usize,
        excluded: &[Expr],
    ) -> Result<Vec<Vec<f64>>> {
        if constraints.is_empty() {
            return self.points_excluding(chart, count, excluded);
        }
        let grads: Vec<Vec<Expr>> = constraints.iter().map(|c| c.gradient()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(count);
        let max_attempts = count.max(1) * 1000;
        for _ in 0..max_attempts {
            if out.len() == count {
                break;
            }
            let start = self.draw(&mut rng, chart);
            if let Some(p) = project_onto(chart, constraints, &grads, start) {
                if self.admissible(chart, &p, excluded) {
                    out.push(p);
                }
            }
        }
        if out.len() < count {
            return Err(Error::SamplingExhausted {
                requested: count,
                found: out.len(),
            });
        }
        Ok(out)
    }
}

/// Gauss-Newton projection of `start` onto the joint zero set. Returns
/// `None` when evaluation fails or the iteration does not converge.
fn project_onto(
    chart: &Chart,
    constraints: &[Expr],
    grads: &[Vec<Expr>],
    start: Vec<f64>,
) -> Option<Vec<f64>> {
    let n = chart.dim();
    let k = constraints.len();
    let mut x = DVector::from_vec(start);
    for _ in 0..40 {
        let mut c = DVector::zeros(k);
        for (i, e) in constraints.iter().enumerate() {
            c[i] = e.evaluate(x.as_slice()).ok()?;
        }
        if c.amax() <= 1e-13 {
            return Some(x.as_slice().to_vec());
        }
        let mut jac = DMatrix::zeros(k, n);
        for (i, row) in grads.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                jac[(i, j)] = g.evaluate(x.as_slice()).ok()?;
            }
        }
        let svd = jac.svd(true, true);
        let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return None;
        }
        let delta = svd.solve(&(-&c), 1e-12 * max).ok()?;
        if !delta.iter().all(|v| v.is_finite()) {
            return None;
        }
        x += delta;
    }
    None
}

// ---------------------------------------------------------------------------
// data-parallel map over sample points
// ---------------------------------------------------------------------------

/// Apply `f` to every point; runs on rayon with the `parallel` feature
/// (default), sequentially otherwise. Output order matches input order.
#[cfg(feature = "parallel")]
pub fn map_points<T, F>(points: &[Vec<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    use rayon::prelude::*;
    points.par_iter().map(|p| f(p.as_slice())).collect()
}

/// Apply `f` to every point; runs on rayon with the `parallel` feature
/// (default), sequentially otherwise. Output order matches input order.
#[cfg(not(feature = "parallel"))]
pub fn map_points<T, F>(points: &[Vec<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    points.iter().map(|p| f(p.as_slice())).collect()
}

/// Always-sequential variant, kept as the benchmark baseline.
pub fn map_points_seq<T, F>(points: &[Vec<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    points.iter().map(|p| f(p.as_slice())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn cover_chart() -> std::sync::Arc<Chart> {
        Chart::new("total", &["z", "p", "q"])
            .extended("total", "s", CoordDomain::nonzero())
            .unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let chart = Chart::new("c", &["x", "y"]);
        let a = Sampler::new(7).points(&chart, 10).unwrap();
        let b = Sampler::new(7).points(&chart, 10).unwrap();
        assert_eq!(a, b);
        let c = Sampler::new(8).points(&chart, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nonzero_coordinates_respect_the_floor() {
        let chart = cover_chart();
        let pts = Sampler::default().points(&chart, 50).unwrap();
        for p in &pts {
            assert!(p[3].abs() >= DEFAULT_NONZERO_FLOOR * 0.999, "s = {}", p[3]);
            assert!(p[3].abs() <= CoordDomain::DEFAULT_NONZERO_MAX_ABS + 1e-12);
        }
    }

    #[test]
    fn excluded_loci_are_avoided() {
        let chart = Chart::new("c", &["z", "p", "q"]);
        let excl = [parse("p", &chart).unwrap()];
        let pts = Sampler::default()
            .points_excluding(&chart, 100, &excl)
            .unwrap();
        for p in &pts {
            assert!(p[1].abs() >= EXCLUSION_FLOOR);
        }
    }

    #[test]
    fn projection_lands_on_linear_constraint() {
        let chart = Chart::new("c", &["z", "p", "q"]);
        let cons = [parse("p + z", &chart).unwrap()];
        let pts = Sampler::default().points_on(&chart, &cons, 40, &[]).unwrap();
        for p in &pts {
            assert!((p[0] + p[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_lands_on_nonlinear_level_set() {
        let chart = cover_chart();
        let cons = [parse("s*(p + z) - 1", &chart).unwrap()];
        let pts = Sampler::default().points_on(&chart, &cons, 40, &[]).unwrap();
        for p in &pts {
            assert!((p[3] * (p[1] + p[0]) - 1.0).abs() <= 1e-10);
            assert!(p[3].abs() >= DEFAULT_NONZERO_FLOOR * 0.999);
        }
    }

    #[test]
    fn parallel_and_sequential_maps_agree() {
        let chart = Chart::new("c", &["x", "y"]);
        let pts = Sampler::default().points(&chart, 64).unwrap();
        let f = |p: &[f64]| p[0] * p[1] + p[0].sin();
        let a = map_points(&pts, f);
        let b = map_points_seq(&pts, f);
        assert_eq!(a, b);
    }
}
