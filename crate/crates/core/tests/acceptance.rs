//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --release --test acceptance -- 4 5`.

use std::time::Instant;

use nalgebra::DMatrix;
use sglab_core::continuum::{
    boundary_lt_occupation, continuum_trace, heat_kernel, local_time_shifted, robin_kernel,
    sample_brownian, sas_kernel, ContinuumModel, Numerics,
};
use sglab_core::couplings::{
    boundary_lt_experiment, boundary_lt_limit_mean, fiber_check, occupation_split_experiment,
    reflected_path_probability, sample_time_change_pair, skorokhod_map_discrete,
};
use sglab_core::ensembles::{sample, EnsembleKind, ModelParams};
use sglab_core::randomness::{map_replicas, SeedSpec};
use sglab_core::semigroup::{pairing, theta, trace, trace_spectral, Boundary, SemigroupQuery};
use sglab_core::spectra::{
    edge_statistics, eigs_in_range, gershgorin_interval, ks_two_sample, symmetrize_matrix,
};
use sglab_core::stats::{chi_square, McEstimate, Welford};
use sglab_core::tridiag::{cell_averages, GridFunction, TridiagonalMatrix};
use sglab_core::walk_fk::{exhaustive_pairing, mc_pairing, mc_trace, sample_lazy_path, ChainKind, LatticePath};

const SEED: u64 = 20_240_611;

type Outcome = (bool, String);

fn seed(label: &str) -> SeedSpec {
    SeedSpec::new(SEED, label)
}

fn feynman_kac_identity() -> Outcome {
    let s = seed("fk-identity");
    let kinds = [
        EnsembleKind::Hermite,
        EnsembleKind::NonsymHermite,
        EnsembleKind::Laguerre,
        EnsembleKind::SpikedHermite,
        EnsembleKind::SpikedLaguerre,
    ];
    let mut worst: f64 = 0.0;
    let mut robin = 0;
    for i in 0..200u64 {
        let mut st = s.stream(i);
        let kind = kinds[i as usize % kinds.len()];
        let n = 2 + st.below(4) as usize;
        let beta = [1.0, 2.0, 4.0][st.below(3) as usize];
        let params = ModelParams::new(kind, n, beta).with_w(3.0 * st.uniform() - 1.0).with_nu(0.5);
        let smp = sample(&params, &mut st).expect("sample");
        let m2 = smp.m_n * smp.m_n;
        let target = st.below(7) as f64;
        let mut q = SemigroupQuery::new((target + 0.5) / (1.5 * m2));
        if kind.is_spiked() && st.coin() {
            q = q.with_boundary(Boundary::Robin);
            robin += 1;
        }
        assert!(theta(smp.m_n, &q).unwrap() <= 6);
        let f = GridFunction::new(smp.m_n, (0..=n).map(|_| st.standard_normal()).collect()).unwrap();
        let g = GridFunction::new(smp.m_n, (0..=n).map(|_| st.standard_normal()).collect()).unwrap();
        let exact = pairing(&smp, &q, &f, &g).expect("pairing");
        let paths = exhaustive_pairing(&smp, &q, &f, &g).expect("path sum");
        worst = worst.max((paths - exact).abs() / exact.abs());
    }
    (worst <= 1e-12, format!("200 instances ({robin} Robin), worst relative error {worst:.2e} (tol 1e-12)"))
}

fn walk_mc_vs_matrix() -> Outcome {
    let params = ModelParams::new(EnsembleKind::Hermite, 200, 2.0);
    let q = SemigroupQuery::new(1.0);
    let bump = |x: f64| (-(x - 1.0) * (x - 1.0)).exp();
    let s = seed("walk-mc");
    let (mut pair_ok, mut trace_ok) = (0, 0);
    for run in 0..100u64 {
        let smp = sample(&params, &mut s.child("matrix").stream(run)).unwrap();
        let f = cell_averages(bump, smp.m_n, smp.n, 4).unwrap();
        let exact_pair = pairing(&smp, &q, &f, &f).unwrap();
        let exact_trace = trace(&smp, &q).unwrap();
        let mp = mc_pairing(&smp, &q, &f, &f, 100_000, &s.child(&format!("pair{run}"))).unwrap();
        let mt = mc_trace(&smp, &q, 100_000, &s.child(&format!("trace{run}"))).unwrap();
        pair_ok += mp.covers(exact_pair, 3.0) as usize;
        trace_ok += mt.covers(exact_trace, 3.0) as usize;
    }
    (
        pair_ok >= 95 && trace_ok >= 95,
        format!("within 3 stderr: pairing {pair_ok}/100, trace {trace_ok}/100 (need >= 95 each)"),
    )
}

fn cross_family_convergence() -> Outcome {
    let q = SemigroupQuery::new(1.0);
    let s = seed("cross-family");
    let mut rows = Vec::new();
    for n in [500usize, 1000, 2000, 4000, 8000] {
        let params = ModelParams::new(EnsembleKind::Hermite, n, 2.0);
        let sub = s.child(&format!("n{n}"));
        let xs: Vec<f64> = map_replicas(&sub, 0..500, |_, st| {
            let smp = sample(&params, st).unwrap();
            trace_spectral(&smp, &q).unwrap()
        });
        rows.push((n, McEstimate::from_samples(&xs, &sub)));
    }
    let model = ContinuumModel::airy(2.0).unwrap();
    let cont = continuum_trace(1.0, &model, &Numerics::default_for(1.0), 100_000, &s.child("continuum")).unwrap();
    let gap = |e: &McEstimate| (e.mean - cont.mean).abs();
    let table: Vec<String> = rows
        .iter()
        .map(|(n, e)| format!("n={n}: {:.4}+-{:.4}", e.mean, e.stderr))
        .collect();
    let (first, last) = (&rows[0].1, &rows[rows.len() - 1].1);
    let shrinks = gap(last) < gap(first);
    let band = 3.0 * (last.stderr.powi(2) + cont.stderr.powi(2)).sqrt();
    let inside = gap(last) <= band;
    (
        shrinks && inside,
        format!(
            "continuum {:.4}+-{:.4}; {}; gap(8000)={:.4} vs gap(500)={:.4}, 3-sigma band {:.4}",
            cont.mean,
            cont.stderr,
            table.join(", "),
            gap(last),
            gap(first),
            band
        ),
    )
}

fn skorokhod_fibers() -> Outcome {
    let reports: Vec<_> = (0..=8).map(|th| fiber_check(th).unwrap()).collect();
    let ok = reports.iter().all(|r| r.is_exact());
    let images: Vec<String> = reports.iter().map(|r| r.images.to_string()).collect();
    (ok, format!("theta 0..=8 exact: {ok}; |C+| per theta: {}", images.join(",")))
}

fn coupling_marginals() -> Outcome {
    const N: u64 = 1_000_000;
    const THETA: usize = 6;
    let code = |p: &LatticePath| p.steps.iter().fold(0usize, |c, &s| 3 * c + (s + 1) as usize);
    let cells = 3usize.pow(THETA as u32);

    let s = seed("marginals");
    let mut t_counts = vec![0u64; cells];
    for c in map_replicas(&s.child("gamma"), 0..N, |_, st| code(&skorokhod_map_discrete(&sample_lazy_path(0, THETA, st)))) {
        t_counts[c] += 1;
    }
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let mut stray = 0;
    for (c, &k) in t_counts.iter().enumerate() {
        let mut steps = vec![0i8; THETA];
        let mut r = c;
        for x in steps.iter_mut().rev() {
            *x = (r % 3) as i8 - 1;
            r /= 3;
        }
        let p = reflected_path_probability(&LatticePath { start: 0, steps, kind: ChainKind::ReflectedT });
        if p > 0.0 {
            obs.push(k as f64);
            exp.push(p * N as f64);
        } else {
            stray += k;
        }
    }
    let (stat_t, df_t, p_t) = chi_square(&obs, &exp).unwrap();

    let mut s_counts = vec![0u64; cells];
    for c in map_replicas(&s.child("time-change"), 0..N, |_, st| code(&sample_time_change_pair(0, THETA, st).unwrap().1.s)) {
        s_counts[c] += 1;
    }
    let obs: Vec<f64> = s_counts.iter().map(|&k| k as f64).collect();
    let exp = vec![N as f64 / cells as f64; cells];
    let (stat_s, df_s, p_s) = chi_square(&obs, &exp).unwrap();
    (
        stray == 0 && p_t > 0.01 && p_s > 0.01,
        format!(
            "Gamma(S) vs T law: chi2={stat_t:.1} df={df_t} p={p_t:.3}; time change vs lazy law: chi2={stat_s:.1} df={df_s} p={p_s:.3}"
        ),
    )
}

fn occupation_split_rate() -> Outcome {
    let fit = occupation_split_experiment(&[16, 32, 64, 128], 1.0, 200, &seed("occupation-split")).unwrap();
    let pts: Vec<String> = fit.points.iter().map(|p| format!("m={}: {:.4}", p.m_n, p.error)).collect();
    (
        fit.slope <= -0.4,
        format!("slope {:.3}+-{:.3} (need <= -0.4); {}", fit.slope, fit.slope_stderr, pts.join(", ")),
    )
}

fn boundary_local_time() -> Outcome {
    let row = &boundary_lt_experiment(&[128], 1.0, 10_000, &seed("boundary-lt")).unwrap()[0];
    let target = boundary_lt_limit_mean(1.0);
    let ok = row.ks_p_value > 0.01 && (row.mean - target).abs() <= 0.02;
    (
        ok,
        format!(
            "KS D={:.4} p={:.3}; mean {:.4}+-{:.4} vs {:.4} (tol 0.02)",
            row.ks_statistic, row.ks_p_value, row.mean, row.mean_stderr, target
        ),
    )
}

fn nonsymmetric_edge() -> Outcome {
    let s = seed("edge");
    let a = edge_statistics(&ModelParams::new(EnsembleKind::NonsymHermite, 4000, 2.0), 1, 2000, &s.child("nonsym")).unwrap();
    let b = edge_statistics(&ModelParams::new(EnsembleKind::Hermite, 4000, 2.0), 1, 2000, &s.child("sym")).unwrap();
    let (d, p) = ks_two_sample(&a.column(0), &b.column(0)).unwrap();
    (p > 0.01, format!("two-sample KS D={d:.4} p={p:.3} (need p > 0.01)"))
}

fn dense(m: &TridiagonalMatrix) -> DMatrix<f64> {
    let n = m.size();
    DMatrix::from_fn(n, n, |i, j| m.get(i, j))
}

fn eigensolver_exactness() -> Outcome {
    let s = seed("eigen");
    let kinds = [
        EnsembleKind::Hermite,
        EnsembleKind::NonsymHermite,
        EnsembleKind::Laguerre,
        EnsembleKind::SpikedHermite,
        EnsembleKind::SpikedLaguerre,
    ];
    let mut dense_err: f64 = 0.0;
    for i in 0..200u64 {
        let mut st = s.child("dense").stream(i);
        let n = 2 + st.below(10) as usize;
        let kind = kinds[i as usize % kinds.len()];
        let smp = sample(&ModelParams::new(kind, n, 2.0).with_w(1.0).with_nu(0.5), &mut st).unwrap();
        let mat = smp.spiked_matrix.clone().unwrap_or(smp.matrix.clone());
        let mut oracle: Vec<f64> = dense(&mat).complex_eigenvalues().iter().map(|z| z.re).collect();
        oracle.sort_by(f64::total_cmp);
        let ours = eigs_in_range(&symmetrize_matrix(&mat).unwrap(), f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let scale = oracle.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for (a, b) in ours.iter().zip(&oracle) {
            dense_err = dense_err.max((a - b).abs() / scale);
        }
        assert_eq!(ours.len(), oracle.len());
    }

    let size = 20;
    let lap = TridiagonalMatrix::new(vec![2.0; size], vec![-1.0; size - 1], vec![-1.0; size - 1]).unwrap();
    let ours = eigs_in_range(&lap, f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let lap_err = ours
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (size + 1) as f64).cos();
            (x - exact).abs()
        })
        .fold(0.0, f64::max);

    let mut outside = 0;
    for i in 0..1000u64 {
        let mut st = s.child("gershgorin").stream(i);
        let n = 2 + st.below(60) as usize;
        let kind = kinds[i as usize % kinds.len()];
        let smp = sample(&ModelParams::new(kind, n, [1.0, 2.0, 4.0][i as usize % 3]).with_w(0.5), &mut st).unwrap();
        let (lo, hi) = gershgorin_interval(&smp.matrix);
        let eigs = eigs_in_range(&symmetrize_matrix(&smp.matrix).unwrap(), f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let slack = 1e-9 * lo.abs().max(hi.abs());
        outside += eigs.iter().filter(|&&x| x < lo - slack || x > hi + slack).count();
    }
    (
        dense_err <= 1e-10 && lap_err <= 1e-10 && outside == 0,
        format!(
            "dense oracle rel err {dense_err:.1e}, Laplacian err {lap_err:.1e} (tol 1e-10); eigenvalues outside Gershgorin: {outside} over 1000 samples"
        ),
    )
}

fn continuum_calibration() -> Outcome {
    let s = seed("continuum");
    let target = (2.0 / std::f64::consts::PI).sqrt();

    // Free Brownian local time at 0, bin centred on the level.
    let h = 0.02;
    let lts = map_replicas(&s.child("lt"), 0..20_000, |_, st| {
        let p = sample_brownian(0.0, 1.0, 1e-3, st).unwrap();
        local_time_shifted(&p, h, -0.5 * h).unwrap().at(0.0)
    });
    let lt = McEstimate::from_samples(&lts, &s);
    let lt_ok = (lt.mean - target).abs() <= 0.02;

    // Occupation-based boundary local time of |B| against the sup formula on
    // the same path: |B| = W + L with W = sum sign(B) dB and L = sup(-W).
    // The grid max of W is corrected for sampling.
    let (ds, hb) = (1e-4, 0.005);
    let pairs = map_replicas(&s.child("boundary"), 0..20_000, |_, st| {
        let mut p = sample_brownian(0.0, 1.0, ds, st).unwrap();
        let (mut w, mut sup) = (0.0f64, 0.0f64);
        for k in 1..p.values.len() {
            let prev = p.values[k - 1];
            w += prev.signum() * (p.values[k] - prev);
            sup = sup.max(-w);
        }
        p.values.iter_mut().for_each(|v| *v = v.abs());
        (boundary_lt_occupation(&p, hb), sup)
    });
    let (mut occ, mut sup) = (Welford::default(), Welford::default());
    for (a, b) in &pairs {
        occ.push(*a);
        sup.push(*b);
    }
    let oracle = sup.mean() + 0.582_597 * ds.sqrt();
    let blt_rel = (occ.mean() / oracle - 1.0).abs();
    let blt_ok = blt_rel <= 0.01;

    // Free kernels.
    let free = ContinuumModel::free();
    let num = Numerics::default_for(1.0);
    let dir = sas_kernel(1.0, 1.0, 1.0, &free, &num, 1_000_000, &s.child("dirichlet")).unwrap();
    let dir_exact = heat_kernel(1.0, 0.0) - heat_kernel(1.0, 2.0);
    let rob = robin_kernel(1.0, 1.0, 1.0, &free, 0.0, &num, 1_000_000, &s.child("robin")).unwrap();
    let rob_exact = heat_kernel(1.0, 0.0) + heat_kernel(1.0, 2.0);
    let dir_rel = (dir.mean / dir_exact - 1.0).abs();
    let rob_rel = (rob.mean / rob_exact - 1.0).abs();
    let k_ok = dir_rel <= 0.01 && rob_rel <= 0.01;
    (
        lt_ok && blt_ok && k_ok,
        format!(
            "E L0_1 {:.4}+-{:.4} vs {target:.4}; boundary LT {:.4} vs sup oracle {oracle:.4} (rel {blt_rel:.2e}); \
             Dirichlet kernel rel {dir_rel:.1e}, reflected kernel rel {rob_rel:.1e}",
            lt.mean,
            lt.stderr,
            occ.mean()
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact Feynman-Kac identity", feynman_kac_identity),
        ("walk Monte Carlo vs matrix", walk_mc_vs_matrix),
        ("cross-family trace convergence", cross_family_convergence),
        ("Skorokhod fiber exactness", skorokhod_fibers),
        ("coupling marginals", coupling_marginals),
        ("occupation splitting rate", occupation_split_rate),
        ("boundary local time law", boundary_local_time),
        ("non-symmetric edge law", nonsymmetric_edge),
        ("eigensolver exactness", eigensolver_exactness),
        ("continuum calibration", continuum_calibration),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        failed += !ok as usize;
        println!(
            "{} {id:>2} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
