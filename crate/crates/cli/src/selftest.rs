//! Fast structural checks runnable from the installed binary: POVM
//! completeness, Choi positivity, closed-form identities on the
//! noiseless line, statistics determinism, and the correction-term
//! reference value. One line per check; nonzero exit if any fail.

use anyhow::{bail, Result};
use b92key::qmath::hermitian_eigenvalues;
use b92key::{b92, estimation, finitekey, B92Params, BlochChannel, CMatrix};

const ALPHA: f64 = 0.39;

type Check = (&'static str, fn() -> std::result::Result<(), String>);

fn near(a: f64, b: f64, tol: f64, what: &str) -> std::result::Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs {b} (tol {tol})"))
    }
}

fn complete(sum: &CMatrix, dim: usize, what: &str) -> std::result::Result<(), String> {
    for i in 0..dim {
        for j in 0..dim {
            let expected = if i == j { 1.0 } else { 0.0 };
            if (sum[(i, j)].re - expected).abs() > 1e-12 || sum[(i, j)].im.abs() > 1e-12 {
                return Err(format!("{what}: entry ({i},{j}) = {}", sum[(i, j)]));
            }
        }
    }
    Ok(())
}

fn sift_povm_completeness() -> std::result::Result<(), String> {
    let povm = b92::sift_povm(ALPHA).map_err(|e| e.to_string())?;
    let sum = &povm.f0 + &povm.f1 + &povm.f0_bar + &povm.f1_bar;
    complete(&sum, 2, "sift POVM sum")?;
    for op in [&povm.f0, &povm.f1, &povm.f0_bar, &povm.f1_bar] {
        let eigs = hermitian_eigenvalues(op).map_err(|e| e.to_string())?;
        if eigs[0] < -1e-12 {
            return Err(format!("sift POVM element eigenvalue {}", eigs[0]));
        }
    }
    Ok(())
}

fn estimation_povm_completeness() -> std::result::Result<(), String> {
    let params = B92Params::new(ALPHA, 0.5).map_err(|e| e.to_string())?;
    let povm = estimation::estimation_povm(&params).map_err(|e| e.to_string())?;
    let mut sum = CMatrix::zeros(4, 4);
    for op in povm.elements.iter() {
        sum += op;
    }
    complete(&sum, 4, "estimation POVM sum")
}

fn depolarizing_choi_positive() -> std::result::Result<(), String> {
    for k in 0..=20 {
        let q = k as f64 / 20.0;
        for (name, ch) in [
            ("bloch-4q3", BlochChannel::depolarizing(q)),
            ("kraus-1q", BlochChannel::depolarizing_kraus(q)),
        ] {
            let min = ch.map_err(|e| e.to_string())?.min_choi_eigenvalue();
            if min < -1e-12 {
                return Err(format!("{name} q={q}: min Choi eigenvalue {min}"));
            }
        }
    }
    Ok(())
}

fn noiseless_closed_forms() -> std::result::Result<(), String> {
    let identity = BlochChannel::identity();
    let rho1 = b92::joint_state(&identity, ALPHA).map_err(|e| e.to_string())?;
    let expected = 2.0 * ALPHA * ALPHA * (1.0 - ALPHA * ALPHA);
    let p_sift = b92::sift_probability(&rho1, ALPHA).map_err(|e| e.to_string())?;
    near(p_sift, expected, 1e-9, "sift probability vs 2 a^2 b^2")?;
    let ambiguity = b92::eve_ambiguity(&rho1, ALPHA).map_err(|e| e.to_string())?;
    near(ambiguity, expected, 1e-9, "ambiguity vs 2 a^2 b^2")
}

fn sampled_statistics_deterministic() -> std::result::Result<(), String> {
    let params = B92Params::new(ALPHA, 0.5).map_err(|e| e.to_string())?;
    let ch = BlochChannel::depolarizing(0.05).map_err(|e| e.to_string())?;
    let lam_inf = estimation::channel_distribution(&ch, &params).map_err(|e| e.to_string())?;
    let draw = |seed| {
        estimation::empirical_distribution(&lam_inf, 10_000, estimation::StatisticsMode::Sampled, seed)
    };
    let a = draw(7).map_err(|e| e.to_string())?;
    let b = draw(7).map_err(|e| e.to_string())?;
    if a.probs != b.probs {
        return Err("same seed produced different frequencies".to_string());
    }
    let total: f64 = a.probs.iter().sum();
    near(total, 1.0, 1e-12, "sampled frequencies sum")
}

fn divergence_and_threshold() -> std::result::Result<(), String> {
    let params = B92Params::new(ALPHA, 0.5).map_err(|e| e.to_string())?;
    let ch = BlochChannel::depolarizing(0.05).map_err(|e| e.to_string())?;
    let lam = estimation::channel_distribution(&ch, &params).map_err(|e| e.to_string())?;
    let d = estimation::kl_divergence(&lam, &lam);
    if d.abs() > 1e-12 {
        return Err(format!("self-divergence {d}"));
    }
    let t = estimation::kl_threshold(100_000_000, 1e-5).map_err(|e| e.to_string())?;
    if !(t > 0.0 && t < 1e-5) {
        return Err(format!("threshold {t} out of expected scale"));
    }
    Ok(())
}

fn correction_reference_value() -> std::result::Result<(), String> {
    let sec = b92key::SecurityParams::default();
    let delta = finitekey::delta_correction(1_000_000, &sec).map_err(|e| e.to_string())?;
    near(delta, 0.029_407_908_781_391_323, 1e-12, "delta at a million-bit block")
}

fn noiseless_asymptote_is_unity() -> std::result::Result<(), String> {
    let rate =
        b92::asymptotic_rate(&BlochChannel::identity(), ALPHA).map_err(|e| e.to_string())?;
    near(rate, 1.0, 1e-9, "noiseless asymptotic rate")
}

const CHECKS: &[Check] = &[
    ("sift POVM completeness and positivity", sift_povm_completeness),
    ("estimation POVM completeness", estimation_povm_completeness),
    ("depolarizing Choi positivity", depolarizing_choi_positive),
    ("noiseless closed forms", noiseless_closed_forms),
    ("sampled statistics determinism", sampled_statistics_deterministic),
    ("KL divergence and threshold", divergence_and_threshold),
    ("correction reference value", correction_reference_value),
    ("noiseless asymptote", noiseless_asymptote_is_unity),
];

pub fn run_selftest() -> Result<()> {
    let mut failures = 0usize;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => println!("ok   {name}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("{} checks, {failures} failures", CHECKS.len());
    if failures > 0 {
        bail!("{failures} selftest checks failed");
    }
    Ok(())
}
