//! One function per suite. Each returns its CSV files and verdicts; nothing
//! here touches the file system.

use cloaklab::convergence::{self, SweepConfig};
use cloaklab::forms;
use cloaklab::geometry::LinkComponent;
use cloaklab::surgery::{self, BoundaryGluing, RadialExtension};
use cloaklab::transform::TransformationMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, Suite};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Verdict {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: value <= tolerance,
            value,
            tolerance,
        }
    }

    /// Passes when `value > tolerance`.
    pub fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: value > tolerance,
            value,
            tolerance,
        }
    }

    /// Passes when `value < tolerance`.
    pub fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: value < tolerance,
            value,
            tolerance,
        }
    }
}

#[derive(Debug, Default)]
pub struct SuiteOutput {
    pub files: Vec<(String, String)>,
    pub verdicts: Vec<Verdict>,
}

pub const PROFILE_SAMPLES: usize = 10_000;
pub const DERIVATIVE_SAMPLES: usize = 1000;
pub const INJECTIVITY_PAIRS: usize = 10_000;
pub const SPECTRUM_COUNT: usize = 6;

fn max_ratio(v: &[f64]) -> f64 {
    v.windows(2)
        .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 0.0 } else { w[1] / w[0] })
        .fold(0.0, f64::max)
}

pub fn run_suite(exp: &Experiment, suite: Suite) -> Result<SuiteOutput, cloaklab::Error> {
    match suite {
        Suite::Sweep => sweep(exp),
        Suite::Spectrum => spectrum(exp),
        Suite::Capacity => capacity(exp),
        Suite::Conductivity => conductivity(exp),
        Suite::Surgery => surgery_suite(exp),
        Suite::All => {
            let mut out = SuiteOutput::default();
            for s in Suite::All.members() {
                if exp.model.dimension() == 3 && matches!(s, Suite::Sweep | Suite::Spectrum) {
                    log::warn!("skipping {} on t3", s.name());
                    continue;
                }
                log::info!("suite {}", s.name());
                let part = run_suite(exp, s)?;
                out.files.extend(part.files);
                out.verdicts.extend(part.verdicts);
            }
            Ok(out)
        }
    }
}

fn sweep_config(exp: &Experiment) -> SweepConfig {
    SweepConfig {
        model: exp.model.clone(),
        link: exp.link.clone(),
        eps_list: exp.eps_list.clone(),
        h: exp.h,
        k2: exp.k2,
        source: exp.source.clone(),
        window: exp.window.clone(),
        reference_check_h: Some(2.0 * exp.h),
    }
}

fn sweep(exp: &Experiment) -> Result<SuiteOutput, cloaklab::Error> {
    let cfg = sweep_config(exp);
    let report = convergence::eps_sweep(&cfg)?;
    if report.reference_limited {
        log::warn!(
            "reference-limited: references at h and 2h differ by {:e} in L2(V)",
            report.reference_difference.unwrap_or(f64::NAN)
        );
    }
    let l2: Vec<f64> = report.rows.iter().map(|r| r.l2_error).collect();
    let sup: Vec<f64> = report.rows.iter().map(|r| r.sup_error).collect();
    let mut out = SuiteOutput {
        files: vec![("sweep.csv".into(), report.to_csv())],
        verdicts: vec![
            Verdict::at_most("sweep_l2_decreasing", max_ratio(&l2), 1.0 + convergence::JITTER),
            Verdict::at_most("sweep_sup_decreasing", max_ratio(&sup), 1.0 + convergence::JITTER),
        ],
    };
    if l2.len() >= 2 {
        out.verdicts
            .push(Verdict::below("sweep_final_below_half", l2[l2.len() - 1] / l2[0], 0.5));
    }
    if let Some(fit) = report.fit {
        log::info!("fit a = {}, b = {}", fit.a, fit.b);
        out.verdicts.push(Verdict::at_most("sweep_log_fit_residual", fit.residual, 0.5));
    }
    if !exp.lambdas.is_empty() {
        let r = convergence::resolvent_sweep(&cfg, &exp.lambdas)?;
        out.files.push(("resolvent.csv".into(), r.to_csv()));
        out.verdicts.push(Verdict::at_most(
            "resolvent_decreasing",
            max_ratio(&r.max_over_grid),
            1.0 + convergence::JITTER,
        ));
    }
    Ok(out)
}

/// Lowest `n` eigenvalues of `-Laplace` on the flat torus with these periods.
pub fn flat_torus_eigenvalues(periods: &[f64], n: usize) -> Vec<f64> {
    let kmax = n as i64 + 1;
    let mut vals = Vec::new();
    for a in -kmax..=kmax {
        for b in -kmax..=kmax {
            let x = std::f64::consts::TAU * a as f64 / periods[0];
            let y = std::f64::consts::TAU * b as f64 / periods[1];
            vals.push(x * x + y * y);
        }
    }
    vals.sort_by(f64::total_cmp);
    vals.truncate(n);
    vals
}

fn spectrum(exp: &Experiment) -> Result<SuiteOutput, cloaklab::Error> {
    let reps = convergence::spectrum_sweep(&sweep_config(exp), SPECTRUM_COUNT)?;
    let last = reps.last().expect("at least the reference");
    let exact = flat_torus_eigenvalues(exp.model.periods(), SPECTRUM_COUNT);
    let rel = last.eigenvalues[1..]
        .iter()
        .zip(&exact[1..])
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    Ok(SuiteOutput {
        files: vec![("spectrum.csv".into(), convergence::spectrum_csv(&reps))],
        verdicts: vec![
            Verdict::at_most("spectrum_zero_simple", last.eigenvalues[0].abs(), 1e-8),
            Verdict::above("spectrum_first_nonzero", last.eigenvalues[1], 1e-8),
            Verdict::at_most("spectrum_relative_error", rel, 0.05),
        ],
    })
}

fn capacity(exp: &Experiment) -> Result<SuiteOutput, cloaklab::Error> {
    let r0 = 0.5 * exp.link.radius_bound();
    let factor = match exp.link.components()[0] {
        LinkComponent::Point { .. } => 1.0,
        LinkComponent::Circle { axis, .. } => exp.model.periods()[axis],
    };
    let caps: Vec<f64> = exp
        .eps_list
        .par_iter()
        .map(|&e| forms::capacity(&exp.model, &exp.link, e, r0, exp.h))
        .collect::<Result<_, _>>()?;
    let mut csv = String::from("epsilon,capacity,analytic,rel_err\n");
    let mut worst = 0.0f64;
    for (&e, &c) in exp.eps_list.iter().zip(&caps) {
        let a = factor * forms::analytic_capacity(e, r0);
        let rel = (c - a).abs() / a;
        worst = worst.max(rel);
        csv.push_str(&format!("{e},{c},{a},{rel}\n"));
    }
    let mut verdicts = vec![
        Verdict::at_most("capacity_rel_err", worst, 0.05),
        Verdict::below("capacity_decreasing", max_ratio(&caps), 1.0),
    ];
    if caps.len() >= 2 {
        let (_, res) = forms::capacity_fit(&caps, &exp.eps_list, r0)?;
        verdicts.push(Verdict::at_most("capacity_fit_residual", res, 0.05));
    }
    Ok(SuiteOutput {
        files: vec![("capacity.csv".into(), csv)],
        verdicts,
    })
}

fn conductivity(exp: &Experiment) -> Result<SuiteOutput, cloaklab::Error> {
    let p = TransformationMap::blow_up(&exp.link).singularity_profile(PROFILE_SAMPLES)?;
    let mut csv = String::from("r_tilde,sqrt_det,sigma_rr,sigma_thth,sigma_ss\n");
    for s in &p.samples {
        csv.push_str(&format!("{},{},{},{},{}\n", s.r_tilde, s.sqrt_det, s.sigma_rr, s.sigma_thth, s.sigma_ss));
    }
    let violations = p.sqrt_det.violations + p.sigma_rr.violations + p.sigma_thth.violations + p.sigma_ss.violations;
    Ok(SuiteOutput {
        files: vec![("conductivity.csv".into(), csv)],
        verdicts: vec![
            Verdict::at_most("slope_sqrt_det", (p.sqrt_det.slope - 1.0).abs(), 0.01),
            Verdict::at_most("slope_sigma_rr", (p.sigma_rr.slope - 1.0).abs(), 0.01),
            Verdict::at_most("slope_sigma_thth", (p.sigma_thth.slope + 1.0).abs(), 0.01),
            Verdict::at_most("slope_sigma_ss", (p.sigma_ss.slope - 1.0).abs(), 0.01),
            Verdict::at_most("singular_bounds_violations", violations as f64, 0.0),
        ],
    })
}

fn surgery_suite(exp: &Experiment) -> Result<SuiteOutput, cloaklab::Error> {
    let j = exp.link.len();
    let gluing = BoundaryGluing::dehn_twist(j)?;
    let round_trip = gluing.round_trip_error()?;
    let h = RadialExtension::new(gluing);
    let d = surgery::derivative_control_check(&h, DERIVATIVE_SAMPLES, exp.seed)?;
    let inj = surgery::injectivity_radial(&h, INJECTIVITY_PAIRS, exp.seed.wrapping_add(1))?;
    let handle = surgery::injectivity_handle(j, INJECTIVITY_PAIRS, exp.seed.wrapping_add(2))?;
    Ok(SuiteOutput {
        files: vec![("surgery.csv".into(), d.to_csv())],
        verdicts: vec![
            Verdict::at_most("gluing_round_trip", round_trip, surgery::ROUND_TRIP_TOL),
            Verdict::at_most("radial_derivative_error", d.radial_error, 1e-8),
            Verdict::at_most("partials_bound", d.bound, 1.0 + 1e-6),
            Verdict::at_most("injectivity_radial_collisions", inj.collisions as f64, 0.0),
            Verdict::at_most("injectivity_handle_collisions", handle.collisions as f64, 0.0),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_eigenvalues() {
        let tau = std::f64::consts::TAU;
        assert_eq!(flat_torus_eigenvalues(&[tau, tau], 6), vec![0.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        assert_eq!(flat_torus_eigenvalues(&[tau, 2.0 * tau], 4), vec![0.0, 0.25, 0.25, 1.0]);
    }

    #[test]
    fn ratios_and_verdicts() {
        assert_eq!(max_ratio(&[4.0, 2.0, 2.1]), 1.05);
        assert!(Verdict::at_most("x", 1.0, 1.0).pass);
        assert!(!Verdict::below("x", 1.0, 1.0).pass);
    }
}
