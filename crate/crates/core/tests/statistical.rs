//! Distributional checks that need more samples than the unit tests.

use sglab_core::continuum::{sas_kernel, ContinuumModel, Numerics};
use sglab_core::couplings::{
    remove_self_edges, sample_preimage, sample_time_change_pair, skorokhod_map_discrete, time_change_couple,
};
use sglab_core::ensembles::{sample, EnsembleKind, ModelParams};
use sglab_core::randomness::{map_replicas, SeedSpec};
use sglab_core::semigroup::{trace_spectral, Parity, SemigroupQuery};
use sglab_core::spectra::{eigs_extreme, symmetrize, Which};
use sglab_core::walk_fk::{sample_lazy_path, sample_reflected_path};

#[test]
fn parity_changes_trace_by_under_five_percent() {
    let params = ModelParams::new(EnsembleKind::Hermite, 2000, 2.0);
    let q = SemigroupQuery::new(1.0);
    let spec = SeedSpec::new(31, "parity");
    for i in 0..20 {
        let s = sample(&params, &mut spec.stream(i)).unwrap();
        let a = trace_spectral(&s, &q).unwrap();
        let b = trace_spectral(&s, &q.with_parity(Parity::FloorPlusOne)).unwrap();
        assert!((a - b).abs() / a.abs() <= 0.05, "replica {i}: {a} vs {b}");
    }
}

#[test]
fn hermite_top_eigenvalue_below_growth_bound() {
    let params = ModelParams::new(EnsembleKind::Hermite, 2000, 2.0);
    let tops = map_replicas(&SeedSpec::new(32, "top"), 0..1000, |_, st| {
        let s = sample(&params, st).unwrap();
        let top = eigs_extreme(&symmetrize(&s).unwrap(), 1, Which::Largest).unwrap()[0];
        top / (s.m_n * s.m_n)
    });
    let worst = tops.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(worst < 5.5, "largest eigenvalue reached {worst} m_n^2");
}

#[test]
fn preimages_always_map_back() {
    let bad = map_replicas(&SeedSpec::new(33, "fibre"), 0..100_000, |_, st| {
        let a = skorokhod_map_discrete(&sample_lazy_path(0, 20, st));
        let p = sample_preimage(&a, st).unwrap();
        (skorokhod_map_discrete(&p).steps != a.steps) as u32
    });
    assert_eq!(bad.iter().sum::<u32>(), 0);
}

#[test]
fn time_change_output_has_uniform_increments() {
    let counts = map_replicas(&SeedSpec::new(34, "tc-inc"), 0..100_000, |_, st| {
        let (_, tc) = sample_time_change_pair(0, 10, st).unwrap();
        let mut c = [0u32; 3];
        for s in tc.s.steps {
            c[(s + 1) as usize] += 1;
        }
        c
    });
    let mut tot = [0u64; 3];
    for c in counts {
        for j in 0..3 {
            tot[j] += c[j] as u64;
        }
    }
    let all: u64 = tot.iter().sum();
    for c in tot {
        assert!((c as f64 / all as f64 - 1.0 / 3.0).abs() < 0.01, "{tot:?}");
    }
}

#[test]
fn kept_zero_holds_are_a_quarter() {
    let pairs = map_replicas(&SeedSpec::new(35, "tc-quarter"), 0..20_000, |_, st| {
        let t = sample_reflected_path(0, 400, st).unwrap();
        let tc = time_change_couple(&t, st).unwrap();
        (tc.kept_zero_holds, t.zero_holds())
    });
    let kept: usize = pairs.iter().map(|p| p.0).sum();
    let holds: usize = pairs.iter().map(|p| p.1).sum();
    let ratio = kept as f64 / holds as f64;
    assert!((ratio - 0.25).abs() < 0.02, "{ratio}");
}

#[test]
fn self_edge_count_is_binomial_third() {
    let theta = 300;
    let n = 20_000;
    let hs = map_replicas(&SeedSpec::new(36, "holds"), 0..n, |_, st| remove_self_edges(&sample_lazy_path(0, theta, st)).1 as f64);
    let mean = hs.iter().sum::<f64>() / n as f64;
    let tol = 3.0 * (theta as f64 * 2.0 / 9.0 / n as f64).sqrt();
    assert!((mean - theta as f64 / 3.0).abs() < tol, "{mean}");
    let var = hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((var / (theta as f64 * 2.0 / 9.0) - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn kernel_stable_under_refinement() {
    let model = ContinuumModel::airy(2.0).unwrap();
    let coarse = Numerics::default_for(1.0);
    let fine = Numerics { ds: coarse.ds / 2.0, h: coarse.h / 2.0 };
    let spec = SeedSpec::new(37, "refine");
    let a = sas_kernel(1.0, 1.0, 1.0, &model, &coarse, 100_000, &spec.child("coarse")).unwrap();
    let b = sas_kernel(1.0, 1.0, 1.0, &model, &fine, 100_000, &spec.child("fine")).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
}
