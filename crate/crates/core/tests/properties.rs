//! Randomized property battery at reduced instance counts; the end-to-end
//! verification suite re-runs it at full counts.

use discourse_sheaf::suite::*;

fn run(check: fn(u64, usize) -> CheckResult, instances: usize) {
    check(0xD15C0, instances).unwrap();
}

#[test]
fn hodge_identity() {
    run(hodge_kernel_identity, 50);
}

#[test]
fn psd() {
    run(laplacians_are_psd, 50);
}

#[test]
fn quadratic_form() {
    run(quadratic_form_identity, 50);
}

#[test]
fn orientation() {
    run(orientation_independence, 25);
}

#[test]
fn spectral_projector() {
    run(diffusion_matches_spectral_projector, 5);
}

#[test]
fn pinv_oracle() {
    run(pinv_matches_normal_equations, 50);
}

#[test]
fn section_nullity() {
    run(section_count_matches_eigen_nullity, 25);
}

#[test]
fn poisson_limits() {
    run(poisson_limit_properties, 40);
}

#[test]
fn solvability() {
    run(poisson_solvability_inclusion, 50);
}

#[test]
fn constrained_flow() {
    run(constrained_diffusion_matches_closed_form, 5);
}

#[test]
fn compatibility() {
    run(compatibility_agrees_with_minimal_energy, 25);
}

#[test]
fn dirichlet() {
    run(classical_dirichlet_reduction, 25);
}

#[test]
fn exact_sequence() {
    run(exact_sequence_dimensions, 25);
}

#[test]
fn duality() {
    run(discrepancy_duality_identity, 50);
}

#[test]
fn adjoint() {
    run(adjoint_formula, 50);
}

#[test]
fn gradient_fd() {
    run(gradient_matches_finite_differences, 25);
}

#[test]
fn learning_limits() {
    run(learning_limit_properties, 40);
}

#[test]
fn learning_flows() {
    run(learning_flow_matches_closed_form, 5);
}

#[test]
fn ridge() {
    run(ridge_sweep_properties, 10);
}

#[test]
fn structure_sheaves() {
    run(structure_sheaf_identities, 25);
}

#[test]
fn dissipation() {
    run(joint_dissipation_identity, 5);
}

#[test]
fn dichotomy() {
    run(frobenius_dichotomy_symmetric_side, 20);
}

#[test]
fn conservation() {
    run(conservation_drift, 3);
}

#[test]
fn stagnation() {
    run(stagnation_bounds_hold, 20);
}

#[test]
fn regularized() {
    run(regularized_bounds_hold, 5);
}

#[test]
fn gap_refinement() {
    run(gap_refinement_monotonicity, 5);
}

#[test]
fn uniform_mu() {
    run(structure_gap_uniform_opinions, 10);
}

#[test]
fn lambda_floor() {
    run(opinion_gap_eigenvalue_floor, 10);
}

#[test]
fn degenerate_rates() {
    run(joint_flow_degenerate_rates, 3);
}

#[test]
fn regime_consistency() {
    run(regime_threshold_consistency, 10);
}
