//! End-to-end checks of the attenuated pipeline against its range gates.

use std::sync::Arc;

use aatomo_core::config::RunConfig;
use aatomo_core::fields::{random_vector_field, BumpKind, Profile, ScalarFieldGrid};
use aatomo_core::geometry::{DiskDomain, InteriorGrid};
use aatomo_core::reconstruct::{check_range_att, reconstruct_att, Outcome};
use aatomo_core::transport::{forward_doppler, TransportConfig};

#[test]
fn shifted_boundary_mode_zero_is_rejected() {
    let cfg = RunConfig::default();
    let grid = Arc::new(InteriorGrid::new(cfg.pitch, cfg.delta, cfg.halo).unwrap());
    let a = ScalarFieldGrid::from_profile(grid.clone(), Profile::canonical_attenuation(0.5));
    let field = random_vector_field(2, BumpKind::GaussianTruncated, 0.9).unwrap();
    let domain = DiskDomain::new(cfg.n_b, cfg.delta).unwrap();
    let g = forward_doppler(&field, &a, &domain, TransportConfig::new(cfg.n_phi, cfg.ray_step).unwrap());

    let clean = check_range_att(&g, &a, &cfg).unwrap();
    assert!(clean.passed(), "{:?}", clean.checks);
    assert!(clean.get("g0_limit").unwrap() < 5e-3);

    let mut shifted = g.clone();
    let bump = 0.05 * g.sup_norm();
    shifted.values.iter_mut().for_each(|v| *v += bump);
    let report = check_range_att(&shifted, &a, &cfg).unwrap();
    assert!(report.get("g0_limit").unwrap() > 2e-2, "{:?}", report.checks);
    assert!(report.get("even_h").unwrap() < 1e-3);
    assert!(matches!(reconstruct_att(&shifted, &a, grid, &cfg).unwrap(), Outcome::Rejected(_)));
}
