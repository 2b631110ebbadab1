//! One function per subcommand. Each returns its CSV table, a JSON results
//! object for the summary, and optionally the sampled Hamiltonian in
//! MatrixMarket form.

use std::fmt::Write as _;

use serde_json::{json, Value};

use msalab_core::field::{
    chi_square_independence, estimate_log_holder, estimate_mixing, generate_field, FieldSample, LatticeBox,
};
use msalab_core::geometry::{build_cube, LatticeCube, RegionSelector};
use msalab_core::hamiltonian::{assemble, AssembledHamiltonian};
use msalab_core::msa::{
    default_time_grid, derive_parameters, dynamical_moment, eigenfunction_decay_fit, ldp_experiment,
    mc_edge_probability, mc_singularity_probability, ns_test_with, scale_sequence, CubeConfig, DynamicalMomentSpec,
    ProbabilityEstimate, ScaleParameters,
};
use msalab_core::spectral::{all_pairs, spectral_bottom, verify_combes_thomas_with, DEFAULT_MIN_ETA};
use msalab_core::stats::trial_seed;

use crate::config::{ExperimentConfig, InitialRegion};
use crate::{Failure, Subcommand};

pub struct Artifacts {
    pub csv: String,
    pub results: Value,
    pub matrix: Option<String>,
}

pub fn run(sub: Subcommand, c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    match sub {
        Subcommand::SampleField => sample_field(c),
        Subcommand::Mixing => mixing(c),
        Subcommand::Spectrum => spectrum(c),
        Subcommand::NsTest => ns_test(c),
        Subcommand::CombesThomas => combes_thomas(c),
        Subcommand::Ldp => ldp(c),
        Subcommand::McEdge => mc_edge(c),
        Subcommand::McSingular => mc_singular(c),
        Subcommand::DecayFit => decay_fit(c),
        Subcommand::Dynamics => dynamics(c),
        Subcommand::ScalingRun => scaling_run(c),
    }
}

fn initial_cube(c: &ExperimentConfig) -> Result<LatticeCube, Failure> {
    let m = &c.model;
    Ok(build_cube(
        m.n,
        m.d,
        &vec![0; m.n * m.d],
        c.scales.l0,
        c.scales.h,
        c.scales.budget(),
    )?)
}

fn cube_config(c: &ExperimentConfig) -> CubeConfig {
    CubeConfig {
        n: c.model.n,
        d: c.model.d,
        spacing: c.scales.h,
        center: vec![0; c.model.n * c.model.d],
        interaction: c.model.interaction.spec(),
        budget: c.scales.budget(),
    }
}

/// Parameters with `L0 = l`.
fn scale_at(c: &ExperimentConfig, l: f64) -> Result<ScaleParameters, Failure> {
    let m = &c.model;
    Ok(derive_parameters(m.big_n, m.n, m.d, l, c.msa.p, c.msa.gamma_ct)?.with_alpha(c.scales.alpha)?)
}

/// The field of Monte Carlo trial 0 on the cube's field box.
fn sample_on(c: &ExperimentConfig, cube: &LatticeCube) -> Result<FieldSample, Failure> {
    let spec = c.field.spec(cube.field_box(), trial_seed(c.mc.master_seed, 0));
    Ok(generate_field(&spec)?)
}

fn sampled_hamiltonian(c: &ExperimentConfig) -> Result<AssembledHamiltonian, Failure> {
    let cube = initial_cube(c)?;
    let field = sample_on(c, &cube)?;
    Ok(assemble(&cube, &field, &c.model.interaction.spec())?)
}

fn estimate_cells(e: &ProbabilityEstimate) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        e.trials,
        e.hits,
        e.p_hat,
        e.wilson_interval.lo,
        e.wilson_interval.hi,
        e.wilson_interval.one_sided,
        e.paper_bound.map_or(String::new(), |b| b.to_string())
    )
}

fn sample_field(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let cube = initial_cube(c)?;
    let field = sample_on(c, &cube)?;
    let values = field.values();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Artifacts {
        csv: field.to_csv(),
        results: json!({
            "region": field.region(),
            "sites": values.len(),
            "mean": mean,
            "min": min,
            "max": max,
            "site_mean": field.spec.site_mean(),
            "laplace_transform_at_one": field.spec.laplace_transform_at_one(),
            "dependence_range": field.spec.dependence_range(),
        }),
        matrix: None,
    })
}

fn mixing(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let d = c.model.d;
    let mut hi = vec![0; d];
    hi[0] = c.mixing.extent - 1;
    let spec = c.field.spec(LatticeBox::new(vec![0; d], hi), c.mc.master_seed);
    let trials = c.mc.trials as u64;
    let diag = estimate_mixing(&spec, &c.mixing.distances, trials)?;
    let holder = estimate_log_holder(&spec, &c.mixing.epsilons, trials)?;
    let beyond = spec.dependence_range() + 1;
    let chi = if (beyond as i64) < c.mixing.extent {
        Some(chi_square_independence(&spec, beyond, trials, c.mixing.chi_square_bins)?)
    } else {
        None
    };

    let mut csv = String::from("# schema: mixing v1\ndistance,alpha,alpha_se,moment_gap_pair,moment_gap_triple\n");
    for (i, dist) in diag.distance_grid.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            dist,
            diag.alpha_estimates[i],
            diag.alpha_standard_errors[i],
            diag.moment_gap_pairs[i],
            diag.moment_gap_triples[i].map_or(String::new(), |g| g.to_string())
        );
    }
    Ok(Artifacts {
        csv,
        results: json!({
            "mixing": diag,
            "log_holder": holder,
            "chi_square_beyond_range": chi.map(|r| json!({"distance": beyond, "result": r})),
        }),
        matrix: None,
    })
}

fn spectrum(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let h = sampled_hamiltonian(c)?;
    let k = c.spectrum.k.min(h.dim());
    let bottom = spectral_bottom(&h, k)?;
    let mut csv = String::from("# schema: spectrum v1\nindex,eigenvalue,residual\n");
    for (i, (l, r)) in bottom.k_lowest.iter().zip(&bottom.residuals).enumerate() {
        let _ = writeln!(csv, "{i},{l},{r}");
    }
    Ok(Artifacts {
        csv,
        results: json!({
            "dimension": h.dim(),
            "e0": bottom.e0,
            "k_lowest": bottom.k_lowest,
            "method": bottom.method,
            "max_residual": bottom.residuals.iter().copied().fold(0.0, f64::max),
            "gershgorin_lower_bound": h.spectral_lower_bound(),
        }),
        matrix: Some(h.matrix.to_matrix_market()),
    })
}

fn ns_test(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let h = sampled_hamiltonian(c)?;
    let scale = scale_at(c, c.scales.l0)?;
    let bottom = spectral_bottom(&h, 1)?;
    let energies = if c.ns_test.energies.is_empty() {
        vec![bottom.e0 + c.ns_test.shift]
    } else {
        c.ns_test.energies.clone()
    };
    let mut csv = String::from("# schema: ns-test v1\nenergy,verdict,block_norm,threshold,reason\n");
    let mut verdicts = Vec::new();
    for e in energies {
        let v = ns_test_with(&h, &bottom, &scale, e)?;
        let verdict = if v.is_ns() { "NS" } else { "S" };
        let reason = serde_json::to_value(v.reason).unwrap();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            v.energy,
            verdict,
            v.block_norm.map_or(String::new(), |b| b.to_string()),
            v.threshold,
            reason.as_str().unwrap_or_default()
        );
        verdicts.push(v);
    }
    Ok(Artifacts {
        csv,
        results: json!({
            "scale": scale,
            "gamma": scale.gamma(),
            "e0": bottom.e0,
            "verdicts": verdicts,
        }),
        matrix: Some(h.matrix.to_matrix_market()),
    })
}

fn combes_thomas(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let h = sampled_hamiltonian(c)?;
    let bottom = spectral_bottom(&h, 1)?;
    let energy = bottom.e0 - c.combes_thomas.eta;
    let mut pairs = all_pairs(h.dim());
    let limit = c.combes_thomas.max_pairs;
    if limit > 0 && limit < pairs.len() {
        let stride = pairs.len() / limit;
        pairs = pairs.into_iter().step_by(stride).take(limit).collect();
    }
    let min_eta = DEFAULT_MIN_ETA.min(c.combes_thomas.eta);
    let report = verify_combes_thomas_with(&h, &bottom, energy, c.msa.gamma_ct, &pairs, min_eta)?;
    Ok(Artifacts {
        csv: report.to_csv(),
        results: json!({
            "energy": report.energy,
            "eta": report.eta,
            "gamma_ct": report.gamma_ct,
            "total_dim": report.total_dim,
            "particle_dim": report.particle_dim,
            "pairs": report.pairs.len(),
            "violations": report.violations,
            "max_ratio": report.max_ratio,
            "max_residual": report.max_residual,
            "columns_solved": report.columns_solved,
        }),
        matrix: Some(h.matrix.to_matrix_market()),
    })
}

fn ldp(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let d = c.model.d;
    let spec = c.field.spec(LatticeBox::centered(&vec![0; d], 1), c.mc.master_seed);
    let report = ldp_experiment(&spec, &c.ldp.scales, c.mc.trials)?;
    let mut csv = String::from(
        "# schema: ldp v1\nL,volume,sites,trials,hits,p_hat,wilson_lo,wilson_hi,one_sided,paper_bound,markov_failures,mean_average\n",
    );
    for v in &report.volumes {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            v.l,
            v.volume,
            v.sites,
            estimate_cells(&v.estimate),
            v.markov_failures,
            v.mean_average
        );
    }
    let p = report.p_hats();
    let decreasing = p.windows(2).all(|w| w[1] < w[0]);
    Ok(Artifacts {
        csv,
        results: json!({
            "report": report,
            "checks": {
                "p_hat_strictly_decreasing": decreasing,
                "fitted_rate_positive": report.fitted_rate.is_some_and(|r| r > 0.0),
                "markov_step_exact": report.markov_failures() == 0,
            }
        }),
        matrix: None,
    })
}

fn mc_edge(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let scale = scale_at(c, c.scales.l0)?;
    let spec = c.field.spec(LatticeBox::centered(&vec![0; c.model.d], 1), c.mc.master_seed);
    let est = mc_edge_probability(&spec, &cube_config(c), &scale, c.mc.trials, c.msa.b)?;
    let mut csv = String::from(
        "# schema: mc-edge v1\nevent,threshold,trials,hits,p_hat,wilson_lo,wilson_hi,one_sided,paper_bound\n",
    );
    for (name, e) in [("edge-below-sqrt", &est.estimate), ("edge-below-b-l2", &est.lifshitz)] {
        let threshold = match e.event {
            msalab_core::msa::Event::EdgeBelow { threshold } => threshold,
            _ => f64::NAN,
        };
        let _ = writeln!(csv, "{name},{threshold},{}", estimate_cells(e));
    }
    let mean_e0 = est.ground_energies.iter().sum::<f64>() / est.ground_energies.len() as f64;
    Ok(Artifacts {
        csv,
        results: json!({
            "scale": scale,
            "estimate": est.estimate,
            "lifshitz": est.lifshitz,
            "b": est.b,
            "mean_ground_energy": mean_e0,
        }),
        matrix: None,
    })
}

fn mc_singular(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let scale = scale_at(c, c.scales.l0)?;
    let spec = c.field.spec(LatticeBox::centered(&vec![0; c.model.d], 1), c.mc.master_seed);
    let est = mc_singularity_probability(&spec, &cube_config(c), &scale, c.mc.trials, c.msa.grid_step(scale.e_star))?;
    let mut csv = String::from("# schema: mc-singular v1\ntrial,e0,edge,grid_checked,grid_singular,max_ratio\n");
    for (i, r) in est.records.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{}",
            r.e0, r.edge, r.grid_checked, r.grid_singular, r.max_ratio
        );
    }
    Ok(Artifacts {
        csv,
        results: json!({
            "scale": scale,
            "estimate": est.estimate,
            "edge_hits": est.edge_hits,
            "grid_extra_hits": est.grid_extra_hits,
            "soundness_failures": est.soundness_failures,
            "gap_violations": est.gap_violations,
            "ns_checks": est.ns_checks,
            "energy_grid": est.grid,
        }),
        matrix: None,
    })
}

fn decay_fit(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let h = sampled_hamiltonian(c)?;
    let bottom = spectral_bottom(&h, c.decay_fit.k.min(h.dim()))?;
    let fits = eigenfunction_decay_fit(&h, &bottom)?;
    let mut csv = String::from("# schema: decay-fit v1\nindex,energy,peak,rate,r_squared,localized,points\n");
    for f in &fits {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            f.index, f.energy, f.peak, f.rate, f.r_squared, f.localized, f.points
        );
    }
    Ok(Artifacts {
        csv,
        results: json!({ "method": bottom.method, "fits": fits }),
        matrix: Some(h.matrix.to_matrix_market()),
    })
}

fn dynamics(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let cube = initial_cube(c)?;
    let h = assemble(&cube, &sample_on(c, &cube)?, &c.model.interaction.spec())?;
    let e0 = spectral_bottom(&h, 1)?.e0;
    let interval = match c.dynamics.interval {
        Some([lo, hi]) => (lo, hi),
        None => (e0, e0 + c.dynamics.width),
    };
    if interval.1 < e0 {
        log::warn!("energy window [{}, {}] lies below the ground energy {e0}; the projection is zero", interval.0, interval.1);
    }
    let region = match c.dynamics.region {
        InitialRegion::Interior => RegionSelector::Interior,
        InitialRegion::Center => RegionSelector::Point(vec![0.0; cube.axes()]),
    };
    let spec = DynamicalMomentSpec {
        s: c.dynamics.s,
        interval,
        k: region,
        time_grid: default_time_grid(c.dynamics.time_points),
    };
    let trace = dynamical_moment(&h, &spec)?;
    let control = if c.dynamics.free_control {
        let free = FieldSample::from_values(
            c.field.spec(cube.field_box(), 0),
            vec![0.0; cube.field_box().len()],
        )?;
        let h_free = assemble(&cube, &free, &c.model.interaction.spec())?;
        let e0_free = spectral_bottom(&h_free, 1)?.e0;
        // Same window width, anchored at the free ground energy.
        let free_spec = DynamicalMomentSpec {
            interval: (e0_free, e0_free + (interval.1 - interval.0)),
            ..spec
        };
        Some(dynamical_moment(&h_free, &free_spec)?)
    } else {
        None
    };

    let mut csv = String::from("# schema: dynamics v1\nt,value,free_value\n");
    for (i, (t, v)) in trace.times.iter().zip(&trace.values).enumerate() {
        let free = control.as_ref().map_or(String::new(), |f| f.values[i].to_string());
        let _ = writeln!(csv, "{t},{v},{free}");
    }
    Ok(Artifacts {
        csv,
        results: json!({
            "interval": [interval.0, interval.1],
            "e0": e0,
            "max": trace.max,
            "argmax_time": trace.argmax_time,
            "rank": trace.rank,
            "k_size": trace.k_size,
            "free_control": control.as_ref().map(|f| json!({
                "max": f.max,
                "argmax_time": f.argmax_time,
                "rank": f.rank,
            })),
        }),
        matrix: Some(h.matrix.to_matrix_market()),
    })
}

fn scaling_run(c: &ExperimentConfig) -> Result<Artifacts, Failure> {
    let axes = c.model.n * c.model.d;
    let seq = scale_sequence(c.scales.l0, c.scales.alpha, c.scales.count, c.scales.max_scale(axes))?;
    let spec = c.field.spec(LatticeBox::centered(&vec![0; c.model.d], 1), c.mc.master_seed);
    let cube = cube_config(c);
    let mut csv = String::from(
        "# schema: scaling-run v1\nL,m,e_star,threshold,trials,edge_hits,edge_p_hat,edge_wilson_hi,singular_hits,singular_p_hat,singular_wilson_lo,singular_wilson_hi,grid_extra_hits,soundness_failures,gap_violations,paper_bound\n",
    );
    let mut rows = Vec::new();
    for &l in &seq.scales {
        let scale = scale_at(c, l)?;
        let est = mc_singularity_probability(&spec, &cube, &scale, c.mc.trials, c.msa.grid_step(scale.e_star))?;
        let e = &est.estimate;
        let edge = ProbabilityEstimate::new(
            msalab_core::msa::Event::EdgeBelow {
                threshold: scale.edge_threshold(),
            },
            est.edge_hits,
            e.trials,
            Some(scale.paper_bound()),
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            l,
            scale.m,
            scale.e_star,
            scale.threshold(),
            e.trials,
            edge.hits,
            edge.p_hat,
            edge.wilson_interval.hi,
            e.hits,
            e.p_hat,
            e.wilson_interval.lo,
            e.wilson_interval.hi,
            est.grid_extra_hits,
            est.soundness_failures,
            est.gap_violations,
            scale.paper_bound()
        );
        rows.push(json!({
            "L": l,
            "scale": scale,
            "edge": edge,
            "singular": e,
            "grid_extra_hits": est.grid_extra_hits,
            "soundness_failures": est.soundness_failures,
            "gap_violations": est.gap_violations,
            "ns_checks": est.ns_checks,
        }));
    }
    let upper = |key: &str| -> Vec<f64> {
        rows.iter()
            .map(|r| r[key]["wilson_interval"]["hi"].as_f64().unwrap_or(f64::NAN))
            .collect()
    };
    let non_increasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] <= w[0]);
    let sound = rows.iter().all(|r| r["soundness_failures"] == 0 && r["gap_violations"] == 0);
    Ok(Artifacts {
        csv,
        results: json!({
            "scales": seq.scales,
            "truncated": seq.truncated,
            "per_scale": rows,
            "checks": {
                "edge_upper_bound_non_increasing": non_increasing(upper("edge")),
                "singular_upper_bound_non_increasing": non_increasing(upper("singular")),
                "gap_argument_sound": sound,
            }
        }),
        matrix: None,
    })
}
