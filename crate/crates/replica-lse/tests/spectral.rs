use rand::rngs::StdRng;
use rand::SeedableRng;
use replica_lse::finite_sim::{gram_eigenvalues, sample_instance, ChannelModel};
use replica_lse::{Penalty, SpectralModel, Support};

#[test]
fn mp_closed_form_and_derivative() {
    let m = SpectralModel::marchenko_pastur(0.7).unwrap();
    for w in [-3.0, -1.0, -0.2, 0.0, 0.5] {
        assert!((m.r_transform(w).unwrap() - 0.7 / (1.0 - w)).abs() < 1e-14);
        let h = 1e-5;
        let fd = (m.r_transform(w + h).unwrap() - m.r_transform(w - h).unwrap()) / (2.0 * h);
        assert!((m.r_derivative(w).unwrap() - fd).abs() < 1e-7);
    }
    assert!(m.r_transform(1.0).is_err());
    // ∫_a^b α/(1+ω)dω
    let v = m.r_integral(0.5, 2.0).unwrap();
    assert!((v - 0.7 * (3.0f64 / 1.5).ln()).abs() < 1e-12);
}

#[test]
fn point_mass_is_constant() {
    let m = SpectralModel::point_mass(0.5, 2.0).unwrap();
    for w in [-5.0, -0.3, 0.0] {
        assert!((m.r_transform(w).unwrap() - 2.0).abs() < 1e-14);
        assert!(m.r_derivative(w).unwrap().abs() < 1e-14);
    }
}

#[test]
fn empirical_of_identical_atoms_is_the_atom() {
    let m = SpectralModel::empirical(1.0, vec![1.5; 64]).unwrap();
    for w in [-2.0, -0.5, -1e-4] {
        assert!((m.r_transform(w).unwrap() - 1.5).abs() < 1e-10);
    }
}

#[test]
fn empirical_from_wishart_tracks_mp() {
    // 256×256 with α = 1: loose tolerance, the 1024 case is an acceptance criterion
    let p = sample_instance(256, 1.0, 1.0, Penalty::ridge(0.1).unwrap(), Support::Complex, ChannelModel::IidGaussian, 11).unwrap();
    let emp = SpectralModel::empirical(1.0, gram_eigenvalues(&p.h).unwrap()).unwrap();
    for w in [-2.0, -1.0, -0.3] {
        let want = 1.0 / (1.0 - w);
        assert!(((emp.r_transform(w).unwrap() - want) / want).abs() < 0.05, "ω={w}");
    }
}

#[test]
fn cached_transform_matches_direct() {
    let eigs: Vec<f64> = (0..200).map(|i| 0.1 + 3.0 * (i as f64 / 199.0).powi(2)).collect();
    let direct = SpectralModel::empirical(0.5, eigs.clone()).unwrap();
    let grid: Vec<f64> = (0..=400).map(|i| -4.0 + 4.0 * i as f64 / 400.0).collect();
    let cached = SpectralModel::empirical(0.5, eigs).unwrap().with_cache(&grid).unwrap();
    for w in [-3.7, -1.23, -0.51, -0.01] {
        let a = direct.r_transform(w).unwrap();
        let b = cached.r_transform(w).unwrap();
        assert!((a - b).abs() < 1e-6 * a.abs(), "{w}: {a} {b}");
    }
}

#[test]
fn mp_samples_have_unit_mean() {
    let m = SpectralModel::marchenko_pastur(2.0).unwrap();
    let mut rng = StdRng::seed_from_u64(1);
    // k > n: full rank, mean eigenvalue of HᴴH is α
    let v = m.sample_gram_spectrum(4000, 8000, &mut rng);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 2.0).abs() < 0.05, "{mean}");
    let lo = (1.0 - 2f64.sqrt()).powi(2);
    let hi = (1.0 + 2f64.sqrt()).powi(2);
    assert!(v.iter().all(|x| *x >= lo - 1e-9 && *x <= hi + 1e-9));
}
