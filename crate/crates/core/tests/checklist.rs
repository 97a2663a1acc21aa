use driftlab::kernels::{KernelFamily, RadialKernel};
use driftlab::verify::{closed_form_sharp, run_checklist, run_checklist_with, DEFAULT_SEED};
use driftlab::Result;

#[test]
fn default_checklist_passes() {
    let report = run_checklist(DEFAULT_SEED);
    println!("{}", report.render());
    assert!(report.claims.len() >= 12);
    assert!(report.all_passed(), "{}", report.render());
}

fn flipped_laplacian(k: &RadialKernel, r: f64) -> Result<f64> {
    let v = closed_form_sharp(k, r)?;
    Ok(if k.family() == KernelFamily::Laplacian { -v } else { v })
}

#[test]
fn sign_flip_in_sharp_laplacian_is_caught() {
    let report = run_checklist_with(DEFAULT_SEED, flipped_laplacian);
    let ode = report.claim("sharp-kernel-defining-ode").unwrap();
    assert!(!ode.passed);
    assert!(!report.all_passed());
}

#[test]
fn claim_names_are_distinct() {
    let report = run_checklist(DEFAULT_SEED);
    let mut names: Vec<&str> = report.claims.iter().map(|c| c.name.as_str()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), report.claims.len());
}
