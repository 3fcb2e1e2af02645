//! Unstable entropy along one-dimensional leaves: length growth of iterated
//! leaf segments, greedy separated sets, and the identity with the sum of
//! unstable exponents.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::livsic::leaf::LeafTracer;
use crate::livsic::LivsicError;
use crate::perturbation::{torus_delta, wrap, PerturbationError, PerturbedMap};
use crate::periodic::{DataVerdict, PeriodicDataReport};
use crate::scalar::Real;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error(transparent)]
    Leaf(#[from] LivsicError),
    #[error(transparent)]
    Map(#[from] PerturbationError),
    #[error("segment radius must be positive")]
    DegenerateSegment,
    #[error("band {0} is not one-dimensional within its flag")]
    NotOneDimensional(usize),
    #[error("refinement exceeded {cap} points")]
    RefinementExplosion { cap: usize },
    #[error("horizon {n} times exponent {rate} exceeds 60")]
    HorizonTooLong { n: usize, rate: f64 },
}

pub const REFINEMENT_CAP: usize = 4_000_000;
pub const DEFAULT_H_MAX: f64 = 0.02;
pub const IDENTITY_TOLERANCE: f64 = 0.02;

/// Polyline through a leaf, with adapted parameters and Euclidean arc length.
#[derive(Clone, Debug, Serialize)]
pub struct LeafSegment<T> {
    pub band: usize,
    pub center: Vec<T>,
    pub points: Vec<Vec<T>>,
    pub params: Vec<T>,
    /// Cumulative Euclidean arc length from the first point.
    pub arc: Vec<T>,
    pub h_max: f64,
    /// `max |sin∠(chord, band direction at the chord midpoint)|` over sampled edges.
    pub alignment_residual: f64,
    /// Largest turning angle per unit length between consecutive chords.
    pub curvature: f64,
}

impl<T: Real> LeafSegment<T> {
    pub fn length(&self) -> T {
        *self.arc.last().expect("non-empty segment")
    }
}

fn polyline_arc<T: Real>(points: &[Vec<T>]) -> Vec<T> {
    let mut arc = Vec::with_capacity(points.len());
    let mut acc = T::zero();
    arc.push(acc);
    for w in points.windows(2) {
        acc += linalg::norm(&torus_delta(&w[1], &w[0]));
        arc.push(acc);
    }
    arc
}

/// Which bands can be traced as curves: the weakest unstable band, and the
/// whole unstable bundle when it is one-dimensional; likewise for stable.
fn one_dimensional(f: &PerturbedMap<impl Real>, band: usize) -> bool {
    let s = &f.analysis().spectral;
    let k = s.stable_count;
    band == k || band + 1 == k || (band >= k && s.unstable_count == 1) || (band < k && k == 1)
}

/// Segment of leaf-radius `delta` (Euclidean arc on each side of `x`) through
/// `x` along `band`.
pub fn trace_segment<T: Real>(
    tracer: &LeafTracer<'_, T>,
    x: &[T],
    delta: T,
    h_max: f64,
) -> Result<LeafSegment<T>, EntropyError> {
    if !(delta > T::zero()) {
        return Err(EntropyError::DegenerateSegment);
    }
    if !one_dimensional(tracer.f, tracer.band) {
        return Err(EntropyError::NotOneDimensional(tracer.band));
    }
    let x = wrap(x);
    let v = tracer.direction(&x)?;
    let s = delta / linalg::norm(&v);
    let fwd = tracer.trace(&x, s)?;
    let bwd = tracer.trace(&x, -s)?;
    let mut points: Vec<Vec<T>> = bwd.points.iter().rev().map(|p| wrap(p)).collect();
    let mut params: Vec<T> = bwd.params.iter().rev().copied().collect();
    points.extend(fwd.points.iter().skip(1).map(|p| wrap(p)));
    params.extend(fwd.params.iter().skip(1).copied());
    let arc = polyline_arc(&points);

    let mut align = T::zero();
    let mut curv = T::zero();
    let stride = (points.len() / 16).max(1);
    for i in (0..points.len() - 1).step_by(stride) {
        let chord = torus_delta(&points[i + 1], &points[i]);
        let mid = linalg::axpy(T::lit(0.5), &chord, &points[i]);
        let dir = linalg::normalize(&tracer.direction(&mid)?);
        align = align.max(linalg::distance_to_span(&linalg::normalize(&chord), &[dir]));
    }
    for i in 1..points.len() - 1 {
        let a = linalg::normalize(&torus_delta(&points[i], &points[i - 1]));
        let b = linalg::normalize(&torus_delta(&points[i + 1], &points[i]));
        let h = arc[i + 1] - arc[i - 1];
        curv = curv.max(linalg::distance_to_span(&b, &[a]) * T::lit(2.0) / h);
    }
    Ok(LeafSegment {
        band: tracer.band,
        center: x,
        points,
        params,
        arc,
        h_max,
        alignment_residual: align.to_f64_lossy(),
        curvature: curv.to_f64_lossy(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthCurve {
    pub lengths: Vec<f64>,
    pub log_lengths: Vec<f64>,
    pub slope: f64,
    pub ci: (f64, f64),
    /// Polyline sizes after refinement at each iterate.
    pub point_counts: Vec<usize>,
    pub backward: bool,
}

impl GrowthCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,length,log_length\n");
        for (k, (l, g)) in self.lengths.iter().zip(&self.log_lengths).enumerate() {
            s.push_str(&format!("{k},{l:.12e},{g:.12e}\n"));
        }
        s
    }
}

/// Parameters and cumulative lengths of one iterate of the segment.
#[derive(Clone, Debug)]
struct Level<T> {
    params: Vec<T>,
    arc: Vec<T>,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let xb = xs.iter().sum::<f64>() / m;
    let yb = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let slope = sxy / sxx;
    if xs.len() < 3 {
        return (slope, 0.0);
    }
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - yb - slope * (x - xb)).powi(2))
        .sum();
    (slope, (ss / (m - 2.0) / sxx).sqrt())
}

/// Iterates the whole segment `n_max` times (by `f`, or `f⁻¹` when
/// `backward`), refining by local leaf re-tracing so that adjacent points
/// stay within `h_max`.
fn iterate_segment<T: Real>(
    tracer: &LeafTracer<'_, T>,
    seg: &LeafSegment<T>,
    n_max: usize,
    backward: bool,
) -> Result<(GrowthCurve, Vec<Level<T>>), EntropyError> {
    let f = tracer.f;
    let rate = f.analysis().spectral.exponents[tracer.band].abs();
    if n_max as f64 * rate > 60.0 {
        return Err(EntropyError::HorizonTooLong { n: n_max, rate });
    }
    // Refinement keeps about len·e^{n·rate}/h_max points; refuse up front.
    let expected = seg.length().to_f64_lossy() * (n_max as f64 * rate).exp() / seg.h_max;
    if expected > REFINEMENT_CAP as f64 {
        return Err(EntropyError::RefinementExplosion { cap: REFINEMENT_CAP });
    }
    let h_max = T::lit(seg.h_max);
    let mut pts = seg.points.clone();
    let mut params = seg.params.clone();
    let mut levels = vec![Level {
        params: params.clone(),
        arc: seg.arc.clone(),
    }];
    let mut lengths = vec![seg.length().to_f64_lossy()];
    let mut counts = vec![pts.len()];
    for _ in 0..n_max {
        pts = pts
            .par_iter()
            .map(|p| if backward { f.inverse_eval(p) } else { Ok(f.eval(p)) })
            .collect::<Result<Vec<_>, PerturbationError>>()?;
        loop {
            let long: Vec<usize> = (0..pts.len() - 1)
                .filter(|&i| linalg::norm(&torus_delta(&pts[i + 1], &pts[i])) > h_max)
                .collect();
            if long.is_empty() {
                break;
            }
            if pts.len() + long.len() > REFINEMENT_CAP {
                return Err(EntropyError::RefinementExplosion { cap: REFINEMENT_CAP });
            }
            // Midpoints re-traced along the image leaf from the left neighbour.
            let mids = long
                .par_iter()
                .map(|&i| {
                    let gap = torus_delta(&pts[i + 1], &pts[i]);
                    let s = linalg::dot(&tracer.covector, &gap) / T::lit(2.0);
                    Ok(wrap(&tracer.rk4(&pts[i], s)?))
                })
                .collect::<Result<Vec<_>, LivsicError>>()?;
            let mut np = Vec::with_capacity(pts.len() + long.len());
            let mut nq = Vec::with_capacity(pts.len() + long.len());
            let mut li = 0;
            for i in 0..pts.len() {
                np.push(pts[i].clone());
                nq.push(params[i]);
                if li < long.len() && long[li] == i {
                    np.push(mids[li].clone());
                    nq.push((params[i] + params[i + 1]) / T::lit(2.0));
                    li += 1;
                }
            }
            pts = np;
            params = nq;
        }
        let arc = polyline_arc(&pts);
        lengths.push(arc.last().expect("points").to_f64_lossy());
        counts.push(pts.len());
        levels.push(Level {
            params: params.clone(),
            arc,
        });
    }
    let log_lengths: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
    let ks: Vec<f64> = (0..log_lengths.len()).map(|k| k as f64).collect();
    let (slope, se) = ols(&ks, &log_lengths);
    Ok((
        GrowthCurve {
            lengths,
            log_lengths,
            slope,
            ci: (slope - 1.96 * se, slope + 1.96 * se),
            point_counts: counts,
            backward,
        },
        levels,
    ))
}

/// `len(f^k(segment))` for `k = 0..=n_max` and the fitted log-length slope.
pub fn volume_growth<T: Real>(
    tracer: &LeafTracer<'_, T>,
    seg: &LeafSegment<T>,
    n_max: usize,
    backward: bool,
) -> Result<GrowthCurve, EntropyError> {
    Ok(iterate_segment(tracer, seg, n_max, backward)?.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparatedSetEstimate {
    pub epsilons: Vec<f64>,
    /// `counts[e][n]` is the greedy `(n, ε_e)`-separated cardinality.
    pub counts: Vec<Vec<usize>>,
    /// Growth rate of `log N` over horizons `n/2..=n`, per ε.
    pub rates: Vec<f64>,
    pub fit_from: usize,
    /// Slope of the length curve from the same iteration.
    pub volume_slope: f64,
}

/// Piecewise-linear `C(s)` of a level, evaluated at sorted `queries`.
fn resample<T: Real>(level: &Level<T>, queries: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(queries.len());
    let mut j = 0;
    let p = &level.params;
    for &q in queries {
        while j + 2 < p.len() && p[j + 1] < q {
            j += 1;
        }
        let (a, b) = (p[j], p[j + 1]);
        let t = if b > a { ((q - a) / (b - a)).max(T::zero()).min(T::one()) } else { T::zero() };
        out.push(level.arc[j] + t * (level.arc[j + 1] - level.arc[j]));
    }
    out
}

/// Greedy maximal `(n, ε)`-separated subsets of the segment under
/// `max_{j≤n} d_W(f^j a, f^j b)`, with `d_W` the arc length of the image
/// sub-arc.
pub fn separated_set_entropy<T: Real>(
    tracer: &LeafTracer<'_, T>,
    seg: &LeafSegment<T>,
    epsilons: &[f64],
    n: usize,
) -> Result<SeparatedSetEstimate, EntropyError> {
    let (growth, levels) = iterate_segment(tracer, seg, n, false)?;
    let cand = levels.last().expect("levels").params.clone();
    let cum: Vec<Vec<T>> = levels.par_iter().map(|l| resample(l, &cand)).collect();
    let counts: Vec<Vec<usize>> = epsilons
        .iter()
        .map(|&eps| {
            let eps = T::lit(eps);
            (0..=n)
                .map(|m| {
                    let mut count = 1;
                    let mut last = 0;
                    for c in 1..cand.len() {
                        let sep = (0..=m)
                            .map(|j| cum[j][c] - cum[j][last])
                            .fold(T::zero(), T::max);
                        if sep >= eps {
                            count += 1;
                            last = c;
                        }
                    }
                    count
                })
                .collect()
        })
        .collect();
    let fit_from = (n / 2).max(1);
    let rates = counts
        .iter()
        .map(|c| {
            let ks: Vec<f64> = (fit_from..=n).map(|k| k as f64).collect();
            let ys: Vec<f64> = (fit_from..=n).map(|k| (c[k] as f64).ln()).collect();
            ols(&ks, &ys).0
        })
        .collect();
    Ok(SeparatedSetEstimate {
        epsilons: epsilons.to_vec(),
        counts,
        rates,
        fit_from,
        volume_slope: growth.slope,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyIdentityCheck {
    pub i: usize,
    pub expected: f64,
    pub measured: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Bands beyond the first enter through their exponents, not geometry.
    pub arithmetic_bands: usize,
}

/// Unstable exponents from a constant-data report.
pub fn unstable_exponents(report: &PeriodicDataReport) -> Option<Vec<f64>> {
    (report.verdict == DataVerdict::Constant).then(|| {
        report
            .mean_exponents
            .iter()
            .copied()
            .filter(|&e| e > 0.0)
            .collect()
    })
}

/// `|slope − Σ_{j≤i} λ^u_j| < 0.02·Σ`, where `slope` measures the growth of
/// the weakest unstable band and bands `2..=i` are added from `exponents`.
pub fn check_entropy_identity(
    growth: &GrowthCurve,
    exponents: &[f64],
    i: usize,
) -> EntropyIdentityCheck {
    let i = i.clamp(1, exponents.len().max(1));
    let expected: f64 = exponents.iter().take(i).sum();
    let measured = growth.slope + exponents.iter().take(i).skip(1).sum::<f64>();
    let relative_error = (measured - expected).abs() / expected.abs();
    EntropyIdentityCheck {
        i,
        expected,
        measured,
        relative_error,
        tolerance: IDENTITY_TOLERANCE,
        pass: relative_error < IDENTITY_TOLERANCE,
        arithmetic_bands: i - 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toral_linear::IntMatrix;

    fn log_mu() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).ln()
    }

    #[test]
    fn linear_segment_is_straight_and_grows_exactly() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let tr = LeafTracer::new(&f, 1).unwrap();
        let seg = trace_segment(&tr, &[0.2, 0.3], 0.05, DEFAULT_H_MAX).unwrap();
        assert!((seg.length() - 0.1).abs() < 1e-12);
        assert!(seg.alignment_residual < 1e-12 && seg.curvature < 1e-6);
        let g = volume_growth(&tr, &seg, 8, false).unwrap();
        assert!((g.slope - log_mu()).abs() < 1e-6, "{}", g.slope);
        assert!(g.point_counts.iter().all(|&c| c < 100_000));
    }

    #[test]
    fn stable_band_backwards() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let tr = LeafTracer::new(&f, 0).unwrap();
        let seg = trace_segment(&tr, &[0.2, 0.3], 0.05, DEFAULT_H_MAX).unwrap();
        let g = volume_growth(&tr, &seg, 6, true).unwrap();
        assert!((g.slope - log_mu()).abs() < 1e-6);
    }

    #[test]
    fn degenerate_segment_rejected() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let tr = LeafTracer::new(&f, 1).unwrap();
        assert_eq!(
            trace_segment(&tr, &[0.2, 0.3], 0.0, DEFAULT_H_MAX).unwrap_err(),
            EntropyError::DegenerateSegment
        );
    }

    #[test]
    fn separated_sets_without_dynamics_count_by_spacing() {
        let f = PerturbedMap::<f64>::linear(IntMatrix::cat_map()).unwrap();
        let tr = LeafTracer::new(&f, 1).unwrap();
        let seg = trace_segment(&tr, &[0.2, 0.3], 0.05, 0.001).unwrap();
        let est = separated_set_entropy(&tr, &seg, &[0.01], 1).unwrap();
        // Length 0.1 at n = 0: points every 0.01 plus the first.
        assert!((est.counts[0][0] as i64 - 11).abs() <= 1, "{:?}", est.counts);
    }

    #[test]
    fn mismatched_exponents_fail_identity() {
        let g = GrowthCurve {
            lengths: vec![],
            log_lengths: vec![],
            slope: log_mu(),
            ci: (0.0, 0.0),
            point_counts: vec![],
            backward: false,
        };
        assert!(check_entropy_identity(&g, &[log_mu()], 1).pass);
        assert!(!check_entropy_identity(&g, &[1.2 * log_mu()], 1).pass);
    }
}
