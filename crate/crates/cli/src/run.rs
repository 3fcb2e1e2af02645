//! Pipeline orchestration: each stage records claims and artifacts, and a
//! failed stage only disables the stages that need its output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use toral_rigidity::cocycle::{exponent_field, finite_time_exponents, local_constancy_check, FieldGrid, FieldVerdict};
use toral_rigidity::conjugacy::{
    estimate_regularity, inverse_consistency, rigidity_verdict, sample_line, skew_series,
    solve_conjugacy, Conjugacy, RegularityEstimate,
};
use toral_rigidity::entropy::{
    check_entropy_identity, separated_set_entropy, trace_segment, unstable_exponents,
    volume_growth, DEFAULT_H_MAX,
};
use toral_rigidity::livsic::leaf::{multiplicativity_check, ConformalMetric, LeafTracer};
use toral_rigidity::livsic::{
    obstruction_test, solve_transfer, telescoping_check, uniform_convergence, CocycleObservable,
    ObservableKind, ObstructionReport, Sampling, SolveOptions,
};
use toral_rigidity::periodic::{
    compare_with_linear, continue_orbits, periodic_data, ContinuationOptions, DataVerdict,
    LinearMatch, PeriodicDataReport,
};
use toral_rigidity::perturbation::{Mode, ScalarTrig};
use toral_rigidity::toral_linear::{enumerate_periodic_points, is_irreducible_over_q, periodic_point_count};
use toral_rigidity::{linalg, IntMatrix, PerturbedMapF64, PeriodicOrbitRecordF64, TransferFunctionF64};

use crate::config::ExperimentConfig;
use crate::plots::{heatmap, line_plot, Series};
use crate::report::{RunReport, StageStatus, StageSummary};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot write to {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

type StageResult = Result<(), String>;

struct Pipeline<'c> {
    cfg: &'c ExperimentConfig,
    out: PathBuf,
    f: Option<PerturbedMapF64>,
    irreducible: Option<bool>,
    records: Vec<PeriodicOrbitRecordF64>,
    periodic: Option<(PeriodicDataReport, LinearMatch)>,
    obstruction: Option<ObstructionReport>,
    transfer: Option<TransferFunctionF64>,
    regularity: Option<RegularityEstimate>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> String + '_ {
    move |e| format!("cannot write {}: {e}", path.display())
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

impl Pipeline<'_> {
    fn write(&self, st: &mut StageSummary, name: &str, body: &str) -> StageResult {
        let path = self.out.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        st.artifacts.push(name.to_string());
        Ok(())
    }

    fn plotted(&self, st: &mut StageSummary, stem: &str, wrote: std::io::Result<bool>) -> StageResult {
        if wrote.map_err(io_err(&self.out.join(stem)))? {
            st.artifacts.push(format!("{stem}.svg"));
            st.artifacts.push(format!("{stem}.csv"));
        }
        Ok(())
    }

    fn map(&self) -> &PerturbedMapF64 {
        self.f.as_ref().expect("gated on the map stage")
    }

    fn seed(&self, salt: u64) -> u64 {
        self.cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt)
    }

    fn build_map(&mut self, st: &mut StageSummary) -> StageResult {
        let m = &self.cfg.map;
        let int = |rows: &[Vec<i64>]| IntMatrix::from_i64(rows).map_err(|e| e.to_string());
        let f = match &m.skew {
            Some(s) => {
                let psi = ScalarTrig {
                    dim: s.a.len(),
                    terms: s.psi.iter().map(|t| (t.k.clone(), t.amplitude, t.phase)).collect(),
                };
                PerturbedMapF64::make_counterexample(int(&s.a)?, int(&s.b)?, s.n, s.m, psi, m.epsilon)
            }
            None if m.epsilon == 0.0 || m.modes.is_empty() => PerturbedMapF64::linear(int(&m.matrix)?),
            None => {
                let modes = m
                    .modes
                    .iter()
                    .map(|md| Mode {
                        k: md.k.clone(),
                        c: md.c.clone(),
                        phase: md.phase,
                    })
                    .collect();
                PerturbedMapF64::make_generic(int(&m.matrix)?, modes, m.epsilon)
            }
        }
        .map_err(|e| e.to_string())?;
        let cert = f.certificate();
        st.claim(
            "make_generic / make_counterexample",
            "Anosov certificate C1 size of Du",
            sci(cert.displacement_c1),
            None,
            format!("epsilon {}", m.epsilon),
            Some(true),
        );
        if let Some(s) = f.skew() {
            st.claim(
                "make_counterexample",
                "series exponent min(1, m log|lambda| / (n log|mu|))",
                format!("{:.4}", s.series_exponent),
                None,
                format!("n {}, m {}", s.n, s.m),
                None,
            );
            st.claim(
                "make_counterexample",
                "stated critical exponent n log|mu| / (m log|lambda|)",
                format!("{:.4}", s.predicted_exponent),
                None,
                format!("n {}, m {}", s.n, s.m),
                None,
            );
        }
        self.write(st, "map.json", &serde_json::to_string_pretty(&serde_json::json!({
            "linear_part": f.linear_part().rows().iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "certificate": cert,
            "skew": f.skew(),
        })).expect("json"))?;
        self.f = Some(f);
        Ok(())
    }

    fn linear(&mut self, st: &mut StageSummary) -> StageResult {
        let owned = self.map().clone();
        let f = &owned;
        let l = f.linear_part();
        let s = &f.analysis().spectral;
        st.claim(
            "analyze",
            "eigenvalues",
            format!("{:.12?}", s.eigenvalues),
            Some(1e-12),
            "root refinement",
            None,
        );
        st.claim("analyze", "stable / unstable dimensions", format!("{} / {}", s.stable_count, s.unstable_count), None, "exact", None);
        let irr = is_irreducible_over_q(&l.char_poly()).map_err(|e| e.to_string())?;
        st.claim(
            "is_irreducible_over_q",
            format!("char poly {} irreducible", s.char_poly.pretty()),
            irr.is_irreducible(),
            None,
            "exact",
            None,
        );
        self.irreducible = Some(irr.is_irreducible());
        if f.is_linear() {
            let x = vec![0.3; l.dim()];
            let e = finite_time_exponents(f, &x, 100).map_err(|e| e.to_string())?;
            let err = e
                .exponents
                .iter()
                .zip(&s.exponents)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            st.claim("cocycle_exponents", "QR exponents vs log|eigenvalues|", sci(err), Some(1e-10), "N = 100", Some(err < 1e-10));
        }
        let mut rows = String::from("n,det_count,enumerated\n");
        let mut exact = true;
        for n in 1..=6u32 {
            let count = periodic_point_count(l, n).map_err(|e| e.to_string())?;
            match enumerate_periodic_points(l, n, 20_000) {
                Ok(pts) => {
                    exact &= count == pts.len().into();
                    rows.push_str(&format!("{n},{count},{}\n", pts.len()));
                }
                Err(_) => break,
            }
        }
        st.claim("enumerate_periodic_points", "enumerated counts equal |det(L^n - I)|", exact, None, "n <= 6 (cap 20000)", Some(exact));
        self.write(st, "periodic_counts.csv", &rows)?;
        self.write(st, "linear.json", &serde_json::to_string_pretty(f.analysis()).expect("json"))
    }

    fn field(&mut self, st: &mut StageSummary) -> StageResult {
        let f = self.map();
        let d = f.dim();
        let res = self.cfg.grids.field;
        let grid = if d == 2 {
            FieldGrid::full(2, res)
        } else {
            FieldGrid::sub(d, res, vec![0, 1], 0.3)
        };
        let n = self.cfg.horizons.field_n;
        let tau = self.cfg.tolerances.tau_reg;
        let field = exponent_field(f, &grid, n, tau).map_err(|e| e.to_string())?;
        let c = local_constancy_check(&field);
        let spread = field.max_spread();
        st.claim(
            "exponent_field",
            "verdict",
            format!("{:?}", field.verdict),
            Some(tau),
            format!("N = {n}, {} points", grid.len()),
            Some(field.verdict == FieldVerdict::RegularConsistent),
        );
        st.claim("exponent_field", "max spread of exponents", sci(spread), Some(tau), format!("N = {n}"), Some(spread < tau));
        st.claim(
            "exponent_field",
            "tail drift N/2 -> N (previous N/4 -> N/2)",
            format!("{} ({})", sci(field.max_tail_slope), sci(field.max_previous_tail_slope)),
            None,
            format!("N = {n}"),
            None,
        );
        st.claim("local_constancy_check", "all exponents locally constant", c.constant, Some(c.tolerance), format!("N = {n}"), Some(c.constant));
        self.write(st, "field.csv", &field.to_csv())?;
        let top: Vec<f64> = field.estimates.iter().map(|e| *e.exponents.last().expect("d > 0")).collect();
        let wrote = heatmap(&self.out.join("field_top_exponent"), "largest finite-time exponent", res, &top);
        self.plotted(st, "field_top_exponent", wrote)
    }

    fn periodic(&mut self, st: &mut StageSummary) -> StageResult {
        let f = self.map();
        let t = self.cfg.horizons.t_max;
        let cont = continue_orbits(f, t, &ContinuationOptions::default()).map_err(|e| e.to_string())?;
        let tau = self.cfg.tolerances.tau_pd;
        let rep = periodic_data(&cont.records, tau).map_err(|e| e.to_string())?;
        let lm = compare_with_linear(&rep, &f.analysis().spectral);
        st.claim("continue_orbits", "orbits continued (seed failures)", format!("{} ({})", cont.records.len(), cont.failures.len()), None, format!("T_max = {t}"), Some(cont.failures.is_empty()));
        st.claim(
            "periodic_data",
            "verdict, max exponent deviation",
            format!("{:?}, {}", rep.verdict, sci(rep.max_deviation)),
            Some(tau),
            format!("T_max = {t}"),
            Some(rep.verdict == DataVerdict::Constant),
        );
        st.claim(
            "compare_with_linear",
            "periodic exponents vs L",
            format!("{lm:?}"),
            Some(tau),
            format!("T_max = {t}"),
            Some(matches!(lm, LinearMatch::MatchesLinear { .. })),
        );
        let d = f.dim();
        let mut csv = String::from("orbit,period,seed,residual");
        for i in 1..=d {
            csv.push_str(&format!(",exponent_{i}"));
        }
        csv.push('\n');
        for (i, r) in cont.records.iter().enumerate() {
            csv.push_str(&format!("{i},{},{},{:.3e}", r.period, r.seed, r.residual));
            for e in &r.exponents {
                csv.push_str(&format!(",{e:.14e}"));
            }
            csv.push('\n');
        }
        self.write(st, "periodic.csv", &csv)?;
        self.records = cont.records;
        self.periodic = Some((rep, lm));
        Ok(())
    }

    fn livsic(&mut self, st: &mut StageSummary) -> StageResult {
        let owned = self.map().clone();
        let f = &owned;
        let (rep, _) = self.periodic.as_ref().expect("gated on periodic");
        let k = f.analysis().spectral.stable_count;
        let lam = rep.mean_exponents[k];
        let g = CocycleObservable::new(f, ObservableKind::UnstableFlag(1), lam).map_err(|e| e.to_string())?;
        let tau = self.cfg.tolerances.tau_obs;
        let obs = obstruction_test(&g, &self.records, tau).map_err(|e| e.to_string())?;
        let t = self.cfg.horizons.t_max;
        st.claim("obstruction_test", format!("max |orbit average of g - Lambda| for {}", obs.observable), sci(obs.max_abs_average), Some(tau), format!("T_max = {t}"), Some(obs.pass));
        self.obstruction = Some(obs.clone());
        if !obs.pass {
            st.claim("solve_transfer", "transfer function", "not solved: obstruction test failed", None, "-", None);
            return Ok(());
        }
        let d = f.dim();
        let mut opts = SolveOptions::for_dim(d);
        if self.cfg.horizons.cutoff > 0 {
            opts.cutoff = self.cfg.horizons.cutoff;
        }
        if let Sampling::Random { ref mut seed, .. } = opts.sampling {
            *seed = self.seed(1);
        }
        opts.propagation_steps = self.cfg.horizons.propagation_steps;
        let phi = solve_transfer(&g, &obs, &opts).map_err(|e| e.to_string())?;
        let hz = format!("K = {}", phi.cutoff);
        st.claim("solve_transfer", "sup residual of phi(f x) - phi(x) = g(x) - Lambda", sci(phi.residual), None, hz.clone(), None);
        st.claim("solve_transfer", "normal-equation condition", sci(phi.condition), Some(opts.condition_limit), hz.clone(), Some(phi.condition < opts.condition_limit));
        st.claim(
            "solve_transfer",
            "orbit propagation discrepancy",
            sci(phi.propagation_discrepancy),
            Some(10.0 * phi.residual + 1e-12),
            format!("{} steps", phi.propagation_steps),
            Some(toral_rigidity::livsic::propagation_agrees(&phi)),
        );
        let pts = self.cfg.grids.check_points;
        let n = self.cfg.horizons.telescoping_n;
        let tel = telescoping_check(&phi, &g, n, pts, self.seed(2)).map_err(|e| e.to_string())?;
        st.claim("telescoping_check", "log Jacobian telescoping residual", sci(tel.max_residual), Some(1e-6), format!("n = {n}, {pts} points"), Some(tel.max_residual < 1e-6));
        st.claim("telescoping_check", "uniform Jacobian bound C^-1 e^{n Lambda} .. C e^{n Lambda}", tel.uniform_bound_holds, None, format!("n = {n}"), Some(tel.uniform_bound_holds));
        let hs = &self.cfg.horizons.uniform;
        let uc = uniform_convergence(&phi, &g, hs, pts, self.seed(3)).map_err(|e| e.to_string())?;
        let rows: Vec<String> = uc.rows.iter().map(|(n, m, e)| format!("n={n}: {} <= {}", sci(*m), sci(*e))).collect();
        st.claim("uniform_convergence", "Birkhoff averages within (2|phi| + n r)/n (+1e-12 slack)", rows.join("; "), None, format!("n in {hs:?}"), Some(uc.holds));
        let mut uc_csv = String::from("n,max_deviation,envelope\n");
        for (n, m, e) in &uc.rows {
            uc_csv.push_str(&format!("{n},{m:.12e},{e:.12e}\n"));
        }
        self.write(st, "uniform_convergence.csv", &uc_csv)?;
        self.write(st, "transfer_coefficients.csv", &phi.coefficients_csv())?;
        if d == 2 {
            self.write(st, "transfer_grid.csv", &phi.grid_csv(2, 64))?;
        }
        // Multiplicativity needs a one-dimensional first unstable leaf.
        if let Ok(tr) = LeafTracer::new(f, k) {
            let s = &f.analysis().spectral;
            let one_dim = k + 1 == d || (s.moduli[k + 1] - s.moduli[k]).abs() > 1e-9;
            if one_dim && self.cfg.grids.leaf_pairs > 0 {
                let metric = ConformalMetric::new(tr, &phi);
                let starts = Sampling::Random {
                    count: self.cfg.grids.leaf_pairs,
                    seed: self.seed(4),
                }
                .points::<f64>(d);
                let m = multiplicativity_check(&metric, &starts, 0.02).map_err(|e| e.to_string())?;
                st.claim("multiplicativity_check", "d(f a, f b) / d(a, b) vs e^Lambda, relative", sci(m.max_relative_error), Some(1e-6), format!("{} pairs, delta 0.02", m.pairs), Some(m.max_relative_error < 1e-6));
            }
        }
        self.transfer = Some(phi);
        Ok(())
    }

    fn conjugacy(&mut self, st: &mut StageSummary) -> StageResult {
        let f = self.map();
        let d = f.dim();
        let tail = self.cfg.tolerances.series_tail;
        let checks = Sampling::Random {
            count: self.cfg.grids.check_points.max(20),
            seed: self.seed(5),
        }
        .points::<f64>(d);
        if f.skew().is_some() {
            let s = skew_series::<f64>(f, None).map_err(|e| e.to_string())?;
            let (worst, ok) = s.check_residual(&checks);
            st.claim("skew_series", "eta(A^n x) - lambda^m eta(x) - psi(x)", sci(worst), Some(s.residual_bound()), format!("K = {} terms", s.terms), Some(ok));
            let general = Conjugacy::new(f, tail).map_err(|e| e.to_string())?;
            let mut gap = 0.0f64;
            for x in checks.iter().take(20) {
                let a = general.displacement(x).map_err(|e| e.to_string())?;
                let b = s.displacement(x);
                gap = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(gap, f64::max);
            }
            // The band series iterates the base in floats; its rounding sets the floor.
            let sk = f.skew().expect("skew");
            let tol = s.float_orbit_allowance(sk.mu.abs().powi(sk.n as i32)).max(1e-8);
            st.claim("solve_conjugacy", "skew series vs band series", sci(gap), Some(tol), "20 points", Some(gap < tol));
            self.write(st, "eta.csv", &s.eta_csv(self.cfg.grids.conjugacy.max(16)))?;
            return Ok(());
        }
        let res = self.cfg.grids.conjugacy;
        if res > 0 {
            let grid = if d == 2 { FieldGrid::full(2, res) } else { FieldGrid::sub(d, res, vec![0, 1], 0.3) };
            let field = solve_conjugacy(f, &grid, tail).map_err(|e| e.to_string())?;
            let hz = format!("terms {:?}, {} points", field.terms, grid.len());
            st.claim("solve_conjugacy", "sup |h(f x) - L h(x)|", sci(field.residual), Some(1e-8), hz.clone(), Some(field.residual < 1e-8));
            st.claim("solve_conjugacy", "tail bound of the truncated series", sci(field.tail_bound), Some(tail), hz.clone(), None);
            st.claim("solve_conjugacy", "sup |u|", sci(field.sup_norm), None, hz.clone(), None);
            st.claim("solve_conjugacy", "lattice periodicity defect", sci(field.periodicity_defect), Some(1e-9), hz, Some(field.periodicity_defect < 1e-9));
            self.write(st, "conjugacy.csv", &field.to_csv())?;
        }
        let c = Conjugacy::new(f, tail).map_err(|e| e.to_string())?;
        let inv = inverse_consistency(&c, &checks).map_err(|e| e.to_string())?;
        st.claim("inverse_consistency", "sup |hbar(h(x)) - x|", sci(inv), Some(1e-8), format!("{} points", checks.len()), Some(inv < 1e-8));
        Ok(())
    }

    fn regularity(&mut self, st: &mut StageSummary) -> StageResult {
        let f = self.map();
        let d = f.dim();
        let count = 1usize << self.cfg.grids.regularity_log2;
        let top = (self.cfg.grids.regularity_log2 - 2).min(14);
        let (samples, target) = if f.skew().is_some() {
            let s = skew_series::<f64>(f, None).map_err(|e| e.to_string())?;
            let g = |x: &[f64]| s.eta(x);
            (sample_line(&g, &[0.1234, 0.0], &[1.0, 0.0], count), "eta along x1")
        } else if f.is_linear() {
            st.status = StageStatus::Skipped("the conjugacy of a linear map is the identity".into());
            return Ok(());
        } else {
            let c = Conjugacy::new(f, self.cfg.tolerances.series_tail).map_err(|e| e.to_string())?;
            let k = f.analysis().spectral.stable_count;
            let ell = f.analysis().spectral.covectors[k].clone();
            let g = |x: &[f64]| c.displacement(x).map(|u| linalg::dot(&ell, &u)).unwrap_or(f64::NAN);
            let mut x0 = vec![0.3; d];
            x0[0] = 0.1234;
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            (sample_line(&g, &x0, &v, count), "unstable component of u along x1")
        };
        if samples.iter().any(|v| !v.is_finite()) {
            return Err("non-finite samples along the regularity line".into());
        }
        let r = estimate_regularity(&samples, 1.0, true, 3..=top).map_err(|e| e.to_string())?;
        let hz = format!("{count} samples, scales 2^-3 .. 2^-{top}");
        st.claim("estimate_regularity", format!("Hölder exponent of {target}"), format!("{:.4} (CI {:.4} .. {:.4})", r.alpha, r.ci.0, r.ci.1), None, hz.clone(), None);
        st.claim("estimate_regularity", "Lipschitz verdict", format!("{:?}", r.verdict), None, hz, None);
        if let Some(s) = f.skew() {
            st.claim("estimate_regularity", "alpha - series exponent", format!("{:+.4}", r.alpha - s.series_exponent), Some(0.1), "-", Some((r.alpha - s.series_exponent).abs() <= 0.1));
        }
        self.write(st, "structure_function.csv", &r.to_csv())?;
        let data: Vec<(f64, f64)> = r.scales.iter().map(|s| (s.delta.log2(), s.oscillation.log2())).collect();
        let mx = data.iter().map(|p| p.0).sum::<f64>() / data.len() as f64;
        let my = data.iter().map(|p| p.1).sum::<f64>() / data.len() as f64;
        let fit: Vec<(f64, f64)> = data.iter().map(|p| (p.0, my + r.alpha_raw * (p.0 - mx))).collect();
        let series = [
            Series { name: "log2 S(delta)".into(), points: data, markers: true },
            Series { name: format!("fit, slope {:.4}", r.alpha_raw), points: fit, markers: false },
        ];
        let note = format!("alpha {:.4}, {:?}", r.alpha, r.verdict);
        let wrote = line_plot(&self.out.join("structure_function_plot"), "structure function", ("log2 delta", "log2 S"), &series, Some(&note));
        self.plotted(st, "structure_function_plot", wrote)?;
        self.regularity = Some(r);
        Ok(())
    }

    fn entropy(&mut self, st: &mut StageSummary) -> StageResult {
        let f = self.map();
        let d = f.dim();
        let s = &f.analysis().spectral;
        let band = s.stable_count;
        let tr = LeafTracer::new(f, band).map_err(|e| e.to_string())?;
        let mut x = vec![0.3; d];
        x[0] = 0.2;
        let delta = self.cfg.grids.segment_delta;
        let seg = trace_segment(&tr, &x, delta, DEFAULT_H_MAX).map_err(|e| e.to_string())?;
        st.claim("trace_segment", "alignment residual of chords", sci(seg.alignment_residual), None, format!("delta {delta}, h_max {DEFAULT_H_MAX}"), None);
        let n = self.cfg.horizons.n_max;
        let growth = volume_growth(&tr, &seg, n, false).map_err(|e| e.to_string())?;
        let want = s.exponents[band];
        let rel = (growth.slope - want).abs() / want;
        st.claim("volume_growth", format!("log-length slope vs log|beta| = {want:.6}"), format!("{:.6} ({:.2}%)", growth.slope, 100.0 * rel), Some(0.02), format!("n_max = {n}"), Some(rel < 0.02));
        self.write(st, "growth.csv", &growth.to_csv())?;
        let mut series = vec![Series {
            name: "log length".into(),
            points: growth.log_lengths.iter().enumerate().map(|(k, &l)| (k as f64, l)).collect(),
            markers: true,
        }];
        let l0 = growth.log_lengths[0];
        series.push(Series {
            name: format!("log|beta| = {want:.4}"),
            points: (0..=n).map(|k| (k as f64, l0 + want * k as f64)).collect(),
            markers: false,
        });
        let note = format!("fitted slope {:.5}", growth.slope);
        let wrote = line_plot(&self.out.join("growth_plot"), "leaf volume growth", ("iterate", "log length"), &series, Some(&note));
        self.plotted(st, "growth_plot", wrote)?;

        let ns = self.cfg.horizons.separated_n;
        if ns > 0 {
            let eps = &self.cfg.grids.separated_eps;
            let est = separated_set_entropy(&tr, &seg, eps, ns).map_err(|e| e.to_string())?;
            for (e, r) in eps.iter().zip(&est.rates) {
                let rel = (r - est.volume_slope).abs() / est.volume_slope;
                st.claim("separated_set_entropy", format!("separated rate at eps {e} vs volume slope"), format!("{r:.5} ({:.2}%)", 100.0 * rel), Some(0.05), format!("n = {ns}, fit from {}", est.fit_from), Some(rel < 0.05));
            }
            let mut csv = String::from("n");
            for e in eps {
                csv.push_str(&format!(",count_eps_{e}"));
            }
            csv.push('\n');
            for k in 0..=ns {
                csv.push_str(&k.to_string());
                for c in &est.counts {
                    csv.push_str(&format!(",{}", c[k]));
                }
                csv.push('\n');
            }
            self.write(st, "separated_counts.csv", &csv)?;
        }
        if let Some((rep, _)) = &self.periodic {
            if let Some(ex) = unstable_exponents(rep) {
                for i in [1, ex.len()] {
                    let c = check_entropy_identity(&growth, &ex, i);
                    let how = if c.arithmetic_bands > 0 { format!(" ({} bands arithmetic)", c.arithmetic_bands) } else { String::new() };
                    st.claim("check_entropy_identity", format!("h(W_{i}) vs sum of {i} periodic unstable exponents{how}"), format!("{:.6} vs {:.6}", c.measured, c.expected), Some(c.tolerance), format!("n_max = {n}"), Some(c.pass));
                    if ex.len() == 1 {
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stages in pipeline order with their prerequisites.
const ORDER: [(&str, &[&str]); 7] = [
    ("linear", &[]),
    ("field", &[]),
    ("periodic", &[]),
    ("livsic", &["periodic"]),
    ("conjugacy", &[]),
    ("regularity", &[]),
    ("entropy", &[]),
];

fn enabled(cfg: &ExperimentConfig, name: &str) -> bool {
    let s = &cfg.stages;
    match name {
        "linear" => s.linear,
        "field" => s.field,
        "periodic" => s.periodic || s.livsic,
        "livsic" => s.livsic,
        "conjugacy" => s.conjugacy,
        "regularity" => s.regularity,
        "entropy" => s.entropy,
        _ => false,
    }
}

/// Runs the enabled stages and writes the report and artifacts under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, RunError> {
    let started = Instant::now();
    std::fs::create_dir_all(out).map_err(|source| RunError::Output {
        path: out.to_path_buf(),
        source,
    })?;
    let mut p = Pipeline {
        cfg,
        out: out.to_path_buf(),
        f: None,
        irreducible: None,
        records: Vec::new(),
        periodic: None,
        obstruction: None,
        transfer: None,
        regularity: None,
    };
    let mut stages = Vec::new();
    let mut st = StageSummary::new("perturbation");
    let t = Instant::now();
    if let Err(e) = p.build_map(&mut st) {
        st.status = StageStatus::Failed(e);
    }
    st.seconds = t.elapsed().as_secs_f64();
    stages.push(st);
    let mut failed: Vec<&str> = Vec::new();
    for (name, needs) in ORDER {
        if !enabled(cfg, name) {
            continue;
        }
        if p.f.is_none() {
            stages.push(StageSummary::skipped(name, "map construction failed"));
            continue;
        }
        if let Some(n) = needs.iter().find(|n| failed.contains(n)) {
            stages.push(StageSummary::skipped(name, format!("prerequisite {n} failed")));
            failed.push(name);
            continue;
        }
        let mut st = StageSummary::new(name);
        let t = Instant::now();
        let res = match name {
            "linear" => p.linear(&mut st),
            "field" => p.field(&mut st),
            "periodic" => p.periodic(&mut st),
            "livsic" => p.livsic(&mut st),
            "conjugacy" => p.conjugacy(&mut st),
            "regularity" => p.regularity(&mut st),
            "entropy" => p.entropy(&mut st),
            _ => unreachable!(),
        };
        if let Err(e) = res {
            st.status = StageStatus::Failed(e);
            failed.push(name);
        }
        st.seconds = t.elapsed().as_secs_f64();
        stages.push(st);
    }
    let verdict = p.periodic.as_ref().map(|(rep, lm)| {
        let irr = p.irreducible.unwrap_or_else(|| {
            is_irreducible_over_q(&p.map().linear_part().char_poly()).is_ok_and(|i| i.is_irreducible())
        });
        rigidity_verdict(rep, lm, irr, p.obstruction.as_ref(), p.regularity.as_ref())
    });
    let report = RunReport {
        config: cfg.clone(),
        stages,
        verdict,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let files = [
        ("config.toml", cfg.to_toml()),
        ("report.json", serde_json::to_string_pretty(&report).expect("json")),
        ("report.txt", report.to_text()),
    ];
    for (name, body) in files {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|source| RunError::Output { path, source })?;
    }
    Ok(report)
}
