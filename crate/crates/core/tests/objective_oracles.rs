//! The unified objective against direct brute-force scans of its defining
//! formulas, including the zero-temperature specializations and the small-ε
//! limits.

mod common;

use common::*;
use lvsm::objectives::{
    instance_lower_term, instance_upper_term, lemma1_gap, unified_objective, Backend,
    FamilyPreset, ObjectiveConfig, TemperaturePair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn enum_cfg(temps: TemperaturePair, loss: bool) -> ObjectiveConfig {
    ObjectiveConfig {
        c: 1.0,
        temps,
        loss_enabled: loss,
        backend: Backend::enumerate(),
    }
}

#[test]
fn upper_and_lower_terms_match_direct_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1D0);
    let temps = [
        (0.0, 1.0),   // marginal max-margin
        (0.0, 0.0),   // latent max-margin
        (1.0, 1.0),   // likelihood-style
        (0.5, 0.5),
        (0.7, 0.4),
    ];
    for trial in 0..60 {
        let n = rng.gen_range(2..=6);
        let graph = random_tree(&mut rng, n, 3);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        for &(ey, eh) in &temps {
            let cfg = enum_cfg(TemperaturePair { eps_y: ey, eps_h: eh }, true);
            let mut calls = 0;
            let up = instance_upper_term(&graph, &w, &inst, &cfg, &mut calls).unwrap();
            let lo = instance_lower_term(&graph, &w, &inst, &cfg, &mut calls).unwrap();
            let up_direct = direct_upper(&graph, &w, &inst, ey, eh, true);
            let lo_direct = direct_lower(&graph, &w, &inst, eh);
            assert!(
                (up - up_direct).abs() < 1e-9,
                "trial {trial} ({ey},{eh}): upper {up} vs {up_direct}"
            );
            assert!(
                (lo - lo_direct).abs() < 1e-9,
                "trial {trial} ({ey},{eh}): lower {lo} vs {lo_direct}"
            );
        }
    }
}

#[test]
fn presets_have_expected_temperatures_and_loss() {
    let cases = [
        (FamilyPreset::Mssvm, 0.0, 1.0, true),
        (FamilyPreset::Lssvm, 0.0, 0.0, true),
        (FamilyPreset::Hcrf, 1.0, 1.0, false),
        (FamilyPreset::LossAugmentedLikelihood, 1.0, 1.0, true),
        (FamilyPreset::EpsExtension(0.25), 0.25, 0.25, true),
    ];
    for (preset, ey, eh, loss) in cases {
        let t = preset.temps();
        assert_eq!((t.eps_y, t.eps_h), (ey, eh), "{preset:?}");
        assert_eq!(preset.loss_enabled(), loss, "{preset:?}");
    }
}

#[test]
fn hcrf_objective_is_regularized_negative_loglik() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11C7);
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let graph = random_tree(&mut rng, n, 3);
        let data: Vec<_> = (0..3).map(|_| random_instance(&graph, &mut rng)).collect();
        let w = random_weights(&graph, &mut rng, 1.0);
        let cfg = FamilyPreset::Hcrf.config(1.0, Backend::enumerate());
        let obj = unified_objective(&graph, &w, &data, &cfg).unwrap();
        // by hand: ½‖w‖² + Σ_i [log Σ_{y,h} e^{w·φ} − log Σ_h e^{w·φ(y_i)}]
        let mut direct = 0.5 * w.values.iter().map(|v| v * v).sum::<f64>();
        for inst in &data {
            direct += direct_upper(&graph, &w, inst, 1.0, 1.0, false)
                - direct_lower(&graph, &w, inst, 1.0);
        }
        assert!((obj - direct).abs() < 1e-9, "{obj} vs {direct}");
    }
}

#[test]
fn small_epsilon_approaches_the_zero_temperature_objectives() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x71E8);
    for trial in 0..50 {
        let n = rng.gen_range(2..=6);
        let graph = random_tree(&mut rng, n, 3);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        let mut calls = 0;

        // ε_y = 1e-3, ε_h = 1 vs the exact max-over-y marginal form
        let cfg = enum_cfg(TemperaturePair { eps_y: 1e-3, eps_h: 1.0 }, true);
        let u = instance_upper_term(&graph, &w, &inst, &cfg, &mut calls).unwrap();
        let direct = direct_upper(&graph, &w, &inst, 0.0, 1.0, true);
        assert!(
            (u - direct).abs() <= 1e-2 * (1.0 + direct.abs()),
            "trial {trial}: {u} vs marginal form {direct}"
        );

        // ε_y = ε_h = 1e-3 vs the exact max-over-(y, h) form
        let cfg = enum_cfg(TemperaturePair { eps_y: 1e-3, eps_h: 1e-3 }, true);
        let u = instance_upper_term(&graph, &w, &inst, &cfg, &mut calls).unwrap();
        let direct = direct_upper(&graph, &w, &inst, 0.0, 0.0, true);
        assert!(
            (u - direct).abs() <= 1e-2 * (1.0 + direct.abs()),
            "trial {trial}: {u} vs joint-max form {direct}"
        );
    }
}

#[test]
fn upper_term_is_monotone_in_temperature() {
    // larger ε gives a larger log-sum-exp, so U⁺ grows along the ε ladder
    let mut rng = ChaCha8Rng::seed_from_u64(0x300);
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let graph = random_tree(&mut rng, n, 3);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        let at = |ey: f64, eh: f64| {
            let mut calls = 0;
            let cfg = enum_cfg(TemperaturePair { eps_y: ey, eps_h: eh }, true);
            instance_upper_term(&graph, &w, &inst, &cfg, &mut calls).unwrap()
        };
        let lssvm = at(0.0, 0.0);
        let mssvm = at(0.0, 1.0);
        let soft = at(1.0, 1.0);
        assert!(lssvm <= mssvm + 1e-9);
        assert!(mssvm <= soft + 1e-9);
    }
}

#[test]
fn lemma_gap_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1E44A);
    let temp_menu = [
        TemperaturePair { eps_y: 0.0, eps_h: 1.0 },
        TemperaturePair { eps_y: 0.0, eps_h: 0.0 },
        TemperaturePair { eps_y: 1.0, eps_h: 1.0 },
        TemperaturePair { eps_y: 0.3, eps_h: 0.6 },
    ];
    for trial in 0..1000 {
        let n = rng.gen_range(2..=5);
        let graph = random_tree(&mut rng, n, 3);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.5);
        let temps = temp_menu[trial % temp_menu.len()];
        let gap = lemma1_gap(&graph, &w, &inst, temps, 24).unwrap();
        assert!(gap >= -1e-9, "trial {trial}: gap {gap} at {temps:?}");
    }
}
