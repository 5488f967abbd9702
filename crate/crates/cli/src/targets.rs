//! Reproduction targets. Each target is a pure function of the context and
//! its own derived seed.

use std::f64::consts::FRAC_PI_2;

use serde_json::json;

use rydq_core::ensemble::{
    double_excitation_fraction, mean_density, peak_optical_depth, rms_pair_distance,
    sample_positions, CloudGeometry,
};
use rydq_core::interactions::{
    blockade_average, blockade_radius, calibrate_threshold, pair_potential, threshold_crossings,
    AverageConvention, BlockadeThreshold, Branch, CrossingDirection, ThresholdConvention,
};
use rydq_core::prep::{evolve, mw_rampdown_comparison, scan_three_photon, Integrator, E, G, R, RP};
use rydq_core::qubit::{
    fit_rabi, fit_ramsey, leakage_scale, rabi_population, rabi_populations, ramsey_contrast,
    ramsey_scan, spectator_leakage, synthetic_rabi, two_excitation_contrast, washout_timescale,
    zeeman_splittings, MeasurementChannel, RabiConfig,
};
use rydq_core::readout::{
    calibrate_r_low, detection_operating_point, exact_repeated_table, fidelity_at,
    fidelity_vs_rate, fit_histograms, repeated_measurement_table, separated_pmfs,
    transistor_gain, Classifier, FitOptions, RepeatedTable, TableNormalization, WindowHistogram,
};
use rydq_core::seed::seed_derive;
use rydq_core::telegraph::{
    closed_form_mean, exact_joint_pmf, exact_pmf, mean_rate_curve, simulate_counts,
    simulate_trajectories, two_window_joint, CountPmf, TelegraphParams, Window, BIN_WIDTH,
};
use rydq_core::Result;

use crate::config::RunConfig;
use crate::output::{num, to_value, Artifact, Table};

/// Targets written by `reproduce-all`, in output order.
pub const TARGETS: [&str; 10] = [
    "fig2a_histograms",
    "fig2b_rate",
    "fig2c_table1",
    "fig3_rabi",
    "fig4_ramsey",
    "figS1a_prep_scan",
    "figS3_multistart",
    "figS4_rate_sweep",
    "figS5b_blockade_prep",
    "figS6_detection_blockade",
];

/// Configuration plus the detection operating point shared by all targets.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub params: TelegraphParams,
    pub window: Window,
    pub classifier: Classifier,
    /// Balanced detection fidelity at the classifier threshold.
    pub f_det: f64,
    pub r_low_calibrated: bool,
}

impl Context {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let window = Window::new(0.0, cfg.telegraph.window_len)?;
        let (r_low, calibrated) = match cfg.telegraph.r_low {
            Some(r) => (r, false),
            None => (
                calibrate_r_low(
                    cfg.telegraph.target_fd,
                    &cfg.telegraph_params(0.0),
                    &window,
                )?,
                true,
            ),
        };
        let params = cfg.telegraph_params(r_low);
        params.validate()?;
        let (threshold, f_det) = match cfg.readout.threshold {
            Some(t) => {
                let (up, down) = separated_pmfs(&params, &window)?;
                (t, fidelity_at(&up, &down, t as usize))
            }
            None => detection_operating_point(&params, &window)?,
        };
        Ok(Self {
            cfg: cfg.clone(),
            params,
            window,
            classifier: Classifier { threshold, window },
            f_det,
            r_low_calibrated: calibrated,
        })
    }

    pub fn seed(&self, target: &str) -> u64 {
        seed_derive(self.cfg.master_seed, target, 0)
    }

    fn channel(&self) -> Result<MeasurementChannel> {
        MeasurementChannel::new(
            self.params.f_prep,
            self.cfg.qubit.f_det.unwrap_or(self.f_det),
        )
    }
}

pub fn run_target(name: &str, ctx: &Context) -> Result<Artifact> {
    match name {
        "fig2a_histograms" => histograms(ctx),
        "fig2b_rate" => rate(ctx),
        "fig2c_table1" => table1(ctx),
        "fig3_rabi" => rabi(ctx),
        "fig4_ramsey" => ramsey(ctx),
        "figS1a_prep_scan" => prep_scan(ctx),
        "figS3_multistart" => multistart(ctx),
        "figS4_rate_sweep" => rate_sweep(ctx),
        "figS5b_blockade_prep" => blockade_prep(ctx),
        "figS6_detection_blockade" => detection_blockade(ctx),
        "ensemble" => ensemble(ctx),
        "detect_joint" => joint(ctx),
        "readout_gain" => gain(ctx),
        "qubit_washout" => washout(ctx),
        other => Err(rydq_core::Error::Domain(format!("unknown target `{other}`"))),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn histograms(ctx: &Context) -> Result<Artifact> {
    let name = "fig2a_histograms";
    let seed = ctx.seed(name);
    let (p, w) = (&ctx.params, &ctx.window);
    let n = ctx.cfg.telegraph.n_shots;
    let exact_p = exact_pmf(p, w, true)?;
    let exact_u = exact_pmf(p, w, false)?;
    let mc_p = CountPmf::from_counts(&simulate_counts(p, w, true, n, seed_derive(seed, "prepared", 0))?);
    let mc_u = CountPmf::from_counts(&simulate_counts(p, w, false, n, seed_derive(seed, "unprepared", 0))?);
    let mut t = Table::new(
        "histograms",
        &["count", "exact_prepared", "exact_unprepared", "mc_prepared", "mc_unprepared"],
    );
    let len = exact_p.len().max(exact_u.len()).max(mc_p.len()).max(mc_u.len());
    for k in 0..len {
        t.push_nums(&[k as f64, exact_p.get(k), exact_u.get(k), mc_p.get(k), mc_u.get(k)]);
    }
    let mut a = Artifact::new(name, seed);
    a.tables.push(t);
    a.headline("r_low", p.r_low);
    a.headline("threshold", ctx.classifier.threshold as f64);
    a.headline("f_det", ctx.f_det);
    a.headline("tv_prepared", exact_p.total_variation(&mc_p));
    a.headline("tv_unprepared", exact_u.total_variation(&mc_u));
    a.headline("mean_prepared", exact_p.mean());
    a.headline("mean_unprepared", exact_u.mean());
    a.headline("closed_form_mean_prepared", closed_form_mean(p, w, true));
    a.headline("closed_form_mean_unprepared", closed_form_mean(p, w, false));
    a.results = json!({
        "params": to_value(p),
        "window": to_value(w),
        "r_low_calibrated": ctx.r_low_calibrated,
        "n_shots": n,
    });
    Ok(a)
}

fn rate(ctx: &Context) -> Result<Artifact> {
    let name = "fig2b_rate";
    let seed = ctx.seed(name);
    let p = &ctx.params;
    let len = ctx.cfg.telegraph.trace_len;
    let grid = linspace(0.0, len, (len / 0.1).round() as usize + 1);
    let model_p = mean_rate_curve(p, true, &grid)?;
    let model_u = mean_rate_curve(p, false, &grid)?;
    let mut model = Table::new("rate_model", &["t_us", "prepared", "unprepared"]);
    for (i, &t) in grid.iter().enumerate() {
        model.push_nums(&[t, model_p[i], model_u[i]]);
    }
    let w = Window::new(0.0, len)?;
    let n = ctx.cfg.telegraph.trace_shots;
    let mean_bins = |prepared: bool, label: &str| -> Result<Vec<f64>> {
        let trajs = simulate_trajectories(p, &w, prepared, n, seed_derive(seed, label, 0))?;
        let bins = trajs.first().map_or(0, |t| t.binned_counts.len());
        let mut acc = vec![0.0; bins];
        for t in &trajs {
            for (a, c) in acc.iter_mut().zip(&t.binned_counts) {
                *a += *c as f64;
            }
        }
        Ok(acc.iter().map(|s| s / n as f64).collect())
    };
    let mc_p = mean_bins(true, "prepared")?;
    let mc_u = mean_bins(false, "unprepared")?;
    let mut mc = Table::new("rate_mc", &["t_mid_us", "prepared", "unprepared"]);
    for i in 0..mc_p.len() {
        let lo = i as f64 * BIN_WIDTH;
        let hi = (lo + BIN_WIDTH).min(len);
        mc.push_nums(&[0.5 * (lo + hi), mc_p[i] / (hi - lo), mc_u[i] / (hi - lo)]);
    }
    let g = transistor_gain(p, &ctx.window)?;
    let mut a = Artifact::new(name, seed);
    a.tables.extend([model, mc]);
    a.headline("gain", g.gain);
    a.headline("gain_input", g.gain_input);
    a.results = json!({ "gain": to_value(&g), "trace_shots": n });
    Ok(a)
}

fn table_rows(t: &mut Table, tab: &RepeatedTable, source: &str) {
    let norm = match tab.normalization {
        TableNormalization::Raw => "raw",
        TableNormalization::PreparationCorrected => "preparation_corrected",
    };
    for (label, row) in [("first", tab.first), ("second", tab.second)] {
        t.push(vec![
            norm.into(),
            source.into(),
            label.into(),
            num(row.prepared_detect_up),
            num(row.prepared_no_detect),
            num(row.unprepared_detect_up),
            num(row.unprepared_no_detect),
        ]);
    }
}

fn table1(ctx: &Context) -> Result<Artifact> {
    let name = "fig2c_table1";
    let seed = ctx.seed(name);
    let mut t = Table::new(
        "table1",
        &[
            "normalization",
            "source",
            "measurement",
            "prepared_detect_up",
            "prepared_no_detect",
            "unprepared_detect_up",
            "unprepared_no_detect",
        ],
    );
    let mut agree = Table::new(
        "agreement",
        &[
            "normalization",
            "source",
            "agreement",
            "agreement_prepared",
            "agreement_unprepared",
            "second_row_mean",
        ],
    );
    let mut a = Artifact::new(name, seed);
    let mut results = serde_json::Map::new();
    for (norm, key) in [
        (TableNormalization::Raw, "raw"),
        (TableNormalization::PreparationCorrected, "corrected"),
    ] {
        let exact = exact_repeated_table(&ctx.params, &ctx.classifier, norm)?;
        let mc = repeated_measurement_table(
            &ctx.params,
            &ctx.classifier,
            norm,
            ctx.cfg.readout.table_shots,
            seed_derive(seed, key, 0),
        )?;
        for (tab, source) in [(&exact, "exact"), (&mc, "mc")] {
            table_rows(&mut t, tab, source);
            agree.push(vec![
                key.into(),
                source.into(),
                num(tab.agreement),
                num(tab.agreement_prepared),
                num(tab.agreement_unprepared),
                num(tab.second_row_mean),
            ]);
        }
        a.headline(&format!("{key}_first_prepared_up"), exact.first.prepared_detect_up);
        a.headline(&format!("{key}_first_unprepared_up"), exact.first.unprepared_detect_up);
        a.headline(&format!("{key}_second_prepared_up"), exact.second.prepared_detect_up);
        a.headline(&format!("{key}_second_unprepared_up"), exact.second.unprepared_detect_up);
        a.headline(&format!("{key}_agreement"), exact.agreement);
        a.headline(&format!("{key}_second_row_mean"), exact.second_row_mean);
        a.headline(&format!("{key}_mc_agreement"), mc.agreement);
        results.insert(key.into(), json!({ "exact": to_value(&exact), "mc": to_value(&mc) }));
    }
    a.tables.extend([t, agree]);
    results.insert("threshold".into(), json!(ctx.classifier.threshold));
    a.results = serde_json::Value::Object(results);
    Ok(a)
}

fn rabi(ctx: &Context) -> Result<Artifact> {
    let name = "fig3_rabi";
    let seed = ctx.seed(name);
    let q = &ctx.cfg.qubit;
    let cfg = ctx.cfg.rabi_config();
    let two_level = RabiConfig {
        include_spectator: false,
        ..cfg.clone()
    };
    let ch = ctx.channel()?;
    let times = linspace(0.0, q.rabi_t_max, q.rabi_points);
    let mut pops = Table::new(
        "populations",
        &["t_us", "p_up_two_level", "p_up", "p_down", "p_spectator"],
    );
    for &t in &times {
        let p = rabi_populations(&cfg, t)?;
        pops.push_nums(&[t, rabi_population(&two_level, t)?, p[0], p[1], p[2]]);
    }
    let observed = synthetic_rabi(&cfg, &ch, &times, seed)?;
    let fit = fit_rabi(&times, &observed, &ch)?;
    let noiseless: Vec<f64> = times
        .iter()
        .map(|&t| ch.apply(rabi_population(&two_level, t)?))
        .collect::<Result<_>>()?;
    let clean = fit_rabi(&times, &noiseless, &ch)?;
    let mut data = Table::new("data", &["t_us", "observed", "corrected", "fit"]);
    for (&t, &y) in times.iter().zip(&observed) {
        data.push_nums(&[
            t,
            y,
            ch.invert(y)?.p,
            rydq_core::qubit::rabi_model(fit.omega, fit.contrast, fit.contrast_decay_per_2pi, t),
        ]);
    }
    let dense = linspace(0.0, 2.0, 4001);
    let leak = spectator_leakage(&cfg, &dense)?;
    let z = zeeman_splittings(q.b_field_gauss)?;
    let geom = ctx.cfg.geometry();
    let plus = washout_timescale(&ctx.cfg.pair_model(Branch::Plus)?, &geom)?;
    let minus = washout_timescale(&ctx.cfg.pair_model(Branch::Minus)?, &geom)?;
    let mut a = Artifact::new(name, seed);
    a.tables.extend([pops, data]);
    a.headline("pi_time_ns", 1e3 * cfg.pi_time());
    a.headline("omega_fit_mhz", fit.omega);
    a.headline("contrast_fit", fit.contrast);
    a.headline("delta_c_fit", fit.contrast_decay_per_2pi);
    a.headline("noiseless_delta_c", clean.contrast_decay_per_2pi);
    a.headline("max_spectator_leakage", leak);
    a.headline("leakage_scale", leakage_scale(&cfg));
    a.headline("zeeman_p32_mhz", z.p32_mhz);
    a.headline("zeeman_s12_mhz", z.s12_mhz);
    a.headline("washout_plus_ns", 1e3 * plus);
    a.headline("washout_minus_ns", 1e3 * minus);
    a.results = json!({
        "config": to_value(&cfg),
        "channel": to_value(&ch),
        "fit": to_value(&fit),
        "noiseless_fit": to_value(&clean),
    });
    Ok(a)
}

fn ramsey(ctx: &Context) -> Result<Artifact> {
    let name = "fig4_ramsey";
    let seed = ctx.seed(name);
    let q = &ctx.cfg.qubit;
    let cfg = ctx.cfg.ramsey_config();
    let fringes = ramsey_scan(&cfg, &q.ramsey_taus, q.ramsey_shots_per_phase, seed)?;
    let contrasts: Vec<f64> = fringes.iter().map(|f| f.contrast).collect();
    let fit = fit_ramsey(&q.ramsey_taus, &contrasts)?;
    let mut ft = Table::new("fringes", &["tau_us", "phase_rad", "fraction"]);
    for f in &fringes {
        for (ph, y) in f.phases.iter().zip(&f.fractions) {
            ft.push_nums(&[f.tau, *ph, *y]);
        }
    }
    let mut ct = Table::new("contrast", &["tau_us", "contrast", "analytic", "fit"]);
    for f in &fringes {
        ct.push_nums(&[
            f.tau,
            f.contrast,
            ramsey_contrast(&cfg, f.tau),
            fit.amplitude * (-(f.tau / fit.t2_star).powi(2)).exp(),
        ]);
    }
    let mut a = Artifact::new(name, seed);
    a.tables.extend([ft, ct]);
    a.headline("t2_star_us", fit.t2_star);
    a.headline("amplitude", fit.amplitude);
    a.headline("detuning_sigma_rad_per_us", cfg.detuning_sigma());
    a.results = json!({ "config": to_value(&cfg), "fit": to_value(&fit) });
    Ok(a)
}

fn prep_scan(ctx: &Context) -> Result<Artifact> {
    let name = "figS1a_prep_scan";
    let seed = ctx.seed(name);
    let p = &ctx.cfg.prep;
    let cfg = ctx.cfg.prep_config();
    let grid = linspace(-p.scan_half_span, p.scan_half_span, p.scan_points);
    let ls = scan_three_photon(&cfg, &grid, p.dt)?;
    let mut lt = Table::new("lineshape", &["detuning_mhz", "p_rprime", "p_r", "p_e"]);
    for i in 0..grid.len() {
        lt.push_nums(&[ls.detunings[i], ls.p_rprime[i], ls.p_r[i], ls.p_e[i]]);
    }
    let traj = evolve(&cfg, p.dt, Integrator::default())?;
    let mut tt = Table::new("trajectory", &["t_us", "p_g", "p_e", "p_r", "p_rprime"]);
    let stride = (traj.times.len() / 300).max(1);
    for (i, (t, pop)) in traj.times.iter().zip(&traj.populations).enumerate() {
        if i % stride == 0 || i + 1 == traj.times.len() {
            tt.push_nums(&[*t, pop[G], pop[E], pop[R], pop[RP]]);
        }
    }
    let fin = traj.final_populations();
    let ramp = mw_rampdown_comparison(&cfg, p.dt)?;
    let mut a = Artifact::new(name, seed);
    a.tables.extend([lt, tt]);
    a.headline("peak_mhz", ls.peak_mhz);
    a.headline("fwhm_mhz", ls.fwhm_mhz.unwrap_or(f64::NAN));
    a.headline("final_p_rprime", fin[RP]);
    a.headline("final_p_r", fin[R]);
    a.headline("final_p_e", fin[E]);
    a.headline("final_p_g", fin[G]);
    a.headline("max_p_e", traj.max_population[E]);
    a.headline("max_p_r", traj.max_population[R]);
    a.results = json!({ "config": to_value(&cfg), "rampdown": to_value(&ramp) });
    Ok(a)
}

fn multistart(ctx: &Context) -> Result<Artifact> {
    let name = "figS3_multistart";
    let seed = ctx.seed(name);
    let r = &ctx.cfg.readout;
    let p = &ctx.params;
    let data: Vec<WindowHistogram> = r
        .fit_starts
        .iter()
        .enumerate()
        .map(|(i, &t0)| {
            let w = Window::new(t0, ctx.window.t_len)?;
            let counts = simulate_counts(p, &w, true, r.fit_shots, seed_derive(seed, "start", i as u64))?;
            Ok(WindowHistogram::from_counts(w, &counts))
        })
        .collect::<Result<_>>()?;
    let init = TelegraphParams {
        r_high: 0.9 * p.r_high,
        r_low: 0.9 * p.r_low,
        gamma_loss: 1.5 * p.gamma_loss.max(0.01),
        f_prep: 0.85,
        ..*p
    };
    let opts = FitOptions {
        fit_gamma_imp: r.fit_gamma_imp,
        restarts: r.fit_restarts,
        seed: seed_derive(seed, "fit", 0),
    };
    let fit = fit_histograms(&data, &init, true, &opts)?;
    let fitted = fit.params(p);
    let mut t = Table::new("histograms", &["t_start_us", "count", "occurrences", "fitted"]);
    for h in &data {
        let pmf = exact_pmf(&fitted, &h.window, true)?;
        let shots = h.shots() as f64;
        for k in 0..pmf.len().max(h.occurrences.len()) {
            t.push_nums(&[
                h.window.t_start,
                k as f64,
                h.occurrences.get(k).copied().unwrap_or(0) as f64,
                shots * pmf.get(k),
            ]);
        }
    }
    let mut a = Artifact::new(name, seed);
    a.tables.push(t);
    a.headline("f_prep", fit.f_prep);
    a.headline("gamma_loss", fit.gamma_loss);
    a.headline("r_high", fit.r_high);
    a.headline("r_low", fit.r_low);
    if let Some(se) = &fit.std_errors {
        a.headline("f_prep_se", se.f_prep);
        a.headline("gamma_loss_se", se.gamma_loss);
    }
    a.results = json!({ "truth": to_value(p), "fit": to_value(&fit) });
    Ok(a)
}

fn rate_sweep(ctx: &Context) -> Result<Artifact> {
    let name = "figS4_rate_sweep";
    let seed = ctx.seed(name);
    let r = &ctx.cfg.readout;
    let p = &ctx.params;
    let beta = if p.r_high > 0.0 { p.gamma_imp / p.r_high } else { 0.0 };
    let points = fidelity_vs_rate(p, &r.sweep_rates, beta, &r.sweep_windows)?;
    let mut t = Table::new(
        "sweep",
        &["r_high", "r_low", "gamma_imp", "window_len_us", "threshold", "f_d"],
    );
    for pt in &points {
        t.push_nums(&[pt.r_high, pt.r_low, pt.gamma_imp, pt.window_len, pt.threshold as f64, pt.f_d]);
    }
    let best = points
        .iter()
        .max_by(|a, b| a.f_d.total_cmp(&b.f_d))
        .expect("non-empty sweep");
    let mut a = Artifact::new(name, seed);
    a.tables.push(t);
    a.headline("best_f_d", best.f_d);
    a.headline("best_r_high", best.r_high);
    a.headline("beta", beta);
    a.results = json!({ "points": to_value(&points) });
    Ok(a)
}

fn blockade_prep(ctx: &Context) -> Result<Artifact> {
    let name = "figS5b_blockade_prep";
    let seed = ctx.seed(name);
    let model = ctx.cfg.rprime_model()?;
    let thr = BlockadeThreshold::new(
        ctx.cfg.interactions.three_photon_linewidth,
        ThresholdConvention::FullLinewidth,
    )?;
    let mut t = Table::new("radius", &["theta_deg", "c6", "r_b_um"]);
    for deg in linspace(0.0, 90.0, ctx.cfg.interactions.theta_points) {
        let th = deg.to_radians();
        t.push_nums(&[deg, model.c6_at(th), blockade_radius(&model, &thr, th)?]);
    }
    let axial = blockade_radius(&model, &thr, 0.0)?;
    let transverse = blockade_radius(&model, &thr, FRAC_PI_2)?;
    let geom = ctx.cfg.geometry();
    let frac = double_excitation_fraction(&geom, &model, &thr, ctx.cfg.ensemble.n_pairs, seed)?;
    let mut a = Artifact::new(name, seed);
    a.tables.push(t);
    a.headline("r_b_axial_um", axial);
    a.headline("r_b_transverse_um", transverse);
    a.headline("aspect_ratio", transverse / axial);
    for (key, conv) in [
        ("solid_angle_mean_um", AverageConvention::SolidAngleMean),
        ("arithmetic_axes_mean_um", AverageConvention::ArithmeticAxesMean),
        ("geometric_axes_mean_um", AverageConvention::GeometricAxesMean),
    ] {
        a.headline(key, blockade_average(&model, &thr, conv)?);
    }
    a.headline("double_excitation_fraction", frac.fraction);
    a.results = json!({ "model": to_value(&model), "threshold": to_value(&thr), "pairs": to_value(&frac) });
    Ok(a)
}

fn detection_blockade(ctx: &Context) -> Result<Artifact> {
    let name = "figS6_detection_blockade";
    let seed = ctx.seed(name);
    let i = &ctx.cfg.interactions;
    let plus = ctx.cfg.pair_model(Branch::Plus)?;
    let minus = ctx.cfg.pair_model(Branch::Minus)?;
    let thr = calibrate_threshold(&plus, i.plus_branch_radius, 0.0, ThresholdConvention::HalfLinewidth)?;
    let nu = thr.energy();
    let mut pot = Table::new("potential", &["r_um", "v_plus_mhz", "v_minus_mhz", "threshold_mhz"]);
    for r in linspace(i.r_min, i.r_max, i.r_points) {
        pot.push_nums(&[r, pair_potential(&plus, r, 0.0)?, pair_potential(&minus, r, 0.0)?, nu]);
    }
    let mut cross = Table::new("crossings", &["branch", "r_um", "direction"]);
    for (label, m) in [("plus", &plus), ("minus", &minus)] {
        for c in threshold_crossings(m, &thr, 0.0, i.r_max)? {
            let dir = match c.direction {
                CrossingDirection::Rising => "rising",
                CrossingDirection::Falling => "falling",
            };
            cross.push(vec![label.into(), num(c.radius), dir.into()]);
        }
    }
    let geom = ctx.cfg.geometry();
    let d0 = rms_pair_distance(&geom);
    let mut a = Artifact::new(name, seed);
    a.tables.extend([pot, cross]);
    a.headline("threshold_mhz", nu);
    a.headline("eit_linewidth_mhz", thr.linewidth);
    a.headline("r_b_plus_um", blockade_radius(&plus, &thr, 0.0)?);
    a.headline("r_b_minus_um", blockade_radius(&minus, &thr, 0.0)?);
    a.headline("branch_mean_um", blockade_average(&plus, &thr, AverageConvention::BranchMean)?);
    a.headline("d0_um", d0);
    a.headline("v_plus_d0_mhz", pair_potential(&plus, d0, 0.0)?);
    a.headline("v_minus_d0_mhz", pair_potential(&minus, d0, 0.0)?);
    let frac = double_excitation_fraction(&geom, &plus, &thr, ctx.cfg.ensemble.n_pairs, seed)?;
    a.headline("double_excitation_fraction_plus", frac.fraction);
    a.results = json!({ "threshold": to_value(&thr), "pairs_plus": to_value(&frac) });
    Ok(a)
}

/// Root-mean-square separation of independently sampled atom pairs.
pub fn sampled_pair_distance(geom: &CloudGeometry, n_pairs: u64, seed: u64) -> f64 {
    let g = CloudGeometry {
        n_atoms: 2 * n_pairs,
        ..geom.clone()
    };
    let pts = sample_positions(&g, seed);
    let ms: f64 = pts
        .chunks(2)
        .map(|p| (0..3).map(|k| (p[0][k] - p[1][k]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n_pairs as f64;
    ms.sqrt()
}

fn ensemble(ctx: &Context) -> Result<Artifact> {
    let name = "ensemble";
    let seed = ctx.seed(name);
    let geom = ctx.cfg.geometry();
    geom.validate()?;
    let d0 = rms_pair_distance(&geom);
    let mc = sampled_pair_distance(&geom, ctx.cfg.ensemble.n_pairs, seed);
    let mut a = Artifact::new(name, seed);
    a.headline("d0_um", d0);
    a.headline("d0_sampled_um", mc);
    a.headline("peak_optical_depth", peak_optical_depth(&geom)?);
    a.headline("mean_density_cm3", mean_density(&geom));
    a.results = json!({ "geometry": to_value(&geom) });
    Ok(a)
}

fn joint(ctx: &Context) -> Result<Artifact> {
    let name = "detect_joint";
    let seed = ctx.seed(name);
    let w1 = ctx.window;
    let w2 = Window::new(w1.end(), w1.t_len)?;
    let mut a = Artifact::new(name, seed);
    for (prepared, label) in [(true, "prepared"), (false, "unprepared")] {
        let shots = two_window_joint(
            &ctx.params,
            &w1,
            &w2,
            prepared,
            ctx.cfg.readout.table_shots,
            seed_derive(seed, label, 0),
        )?;
        let mut t = Table::new(&format!("shots_{label}"), &["first", "second"]);
        for (x, y) in &shots {
            t.push_nums(&[*x as f64, *y as f64]);
        }
        a.tables.push(t);
        let exact = exact_joint_pmf(&ctx.params, &w1, &w2, prepared)?;
        let mut e = Table::new(&format!("exact_{label}"), &["first", "second", "probability"]);
        for (n1, row) in exact.iter().enumerate() {
            for (n2, q) in row.iter().enumerate() {
                if *q > 1e-12 {
                    e.push_nums(&[n1 as f64, n2 as f64, *q]);
                }
            }
        }
        a.tables.push(e);
    }
    a.headline("threshold", ctx.classifier.threshold as f64);
    Ok(a)
}

fn gain(ctx: &Context) -> Result<Artifact> {
    let name = "readout_gain";
    let g = transistor_gain(&ctx.params, &ctx.window)?;
    let mut a = Artifact::new(name, ctx.seed(name));
    a.headline("gain", g.gain);
    a.headline("gain_input", g.gain_input);
    a.headline("gain_no_switching", (ctx.params.r_high - ctx.params.r_low) * ctx.window.t_len);
    a.results = to_value(&g);
    Ok(a)
}

fn washout(ctx: &Context) -> Result<Artifact> {
    let name = "qubit_washout";
    let seed = ctx.seed(name);
    let q = &ctx.cfg.qubit;
    let geom = ctx.cfg.geometry();
    let grid = linspace(0.0, q.washout_t_max, q.washout_points);
    let mut t = Table::new("contrast", &["t_us", "plus", "minus"]);
    let plus_m = ctx.cfg.pair_model(Branch::Plus)?;
    let minus_m = ctx.cfg.pair_model(Branch::Minus)?;
    let plus = two_excitation_contrast(&plus_m, &geom, q.omega, &grid, q.washout_pairs, seed_derive(seed, "plus", 0))?;
    let minus = two_excitation_contrast(&minus_m, &geom, q.omega, &grid, q.washout_pairs, seed_derive(seed, "minus", 0))?;
    for i in 0..grid.len() {
        t.push_nums(&[grid[i], plus[i], minus[i]]);
    }
    let mut a = Artifact::new(name, seed);
    a.tables.push(t);
    a.headline("timescale_plus_ns", 1e3 * washout_timescale(&plus_m, &geom)?);
    a.headline("timescale_minus_ns", 1e3 * washout_timescale(&minus_m, &geom)?);
    a.headline("min_contrast_plus", plus.iter().cloned().fold(f64::INFINITY, f64::min));
    a.headline("min_contrast_minus", minus.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(a)
}
