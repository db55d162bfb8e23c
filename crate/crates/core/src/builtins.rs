//! Named example sources and seeded random instance generators.

use rand::Rng;

use crate::error::{HbrdError, Result};
use crate::rng;
use crate::source::{ComponentSource, DistortionSpec, ProductSource};

/// A point on the probability simplex with all coordinates at least `floor`.
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    assert!(floor * k as f64 <= 1.0);
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-12..1.0f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|v| floor + (1.0 - k as f64 * floor) * v / total)
        .collect()
}

fn bsc_rows(crossover: f64) -> Vec<Vec<f64>> {
    vec![
        vec![1.0 - crossover, crossover],
        vec![crossover, 1.0 - crossover],
    ]
}

fn constant_rows(n_in: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0]; n_in]
}

fn identity_rows(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// The two-decoder butterfly: X1, X2 independent uniform bits, the Y-side
/// decoder already holds X1 and the Z-side decoder already holds X2, while
/// the other coordinate of each side information is constant. One bit
/// serves both decoders losslessly.
pub fn fig2_butterfly() -> ProductSource {
    let uniform = vec![0.5, 0.5];
    let comp1 =
        ComponentSource::from_chain(&uniform, &identity_rows(2), &constant_rows(2)).unwrap();
    let comp2 = ComponentSource::from_chain(&uniform, &identity_rows(2), &constant_rows(2))
        .unwrap()
        .swap_side_info();
    ProductSource::new(
        comp1,
        comp2,
        DistortionSpec::hamming(2),
        DistortionSpec::hamming(2),
    )
    .unwrap()
}

/// Butterfly with the informative side-information coordinate passed
/// through a binary symmetric channel.
pub fn noisy_butterfly(crossover: f64) -> ProductSource {
    let uniform = vec![0.5, 0.5];
    let comp1 =
        ComponentSource::from_chain(&uniform, &bsc_rows(crossover), &constant_rows(2)).unwrap();
    let comp2 = ComponentSource::from_chain(&uniform, &bsc_rows(crossover), &constant_rows(2))
        .unwrap()
        .swap_side_info();
    ProductSource::new(
        comp1,
        comp2,
        DistortionSpec::hamming(2),
        DistortionSpec::hamming(2),
    )
    .unwrap()
}

/// Doubly symmetric binary pair in matched order: in both components
/// Y = BSC(X, 0.1) and Z = BSC(Y, 0.15), with Hamming distortion.
pub fn binary_matched() -> ProductSource {
    let uniform = vec![0.5, 0.5];
    let comp = ComponentSource::from_chain(&uniform, &bsc_rows(0.1), &bsc_rows(0.15)).unwrap();
    ProductSource::new(
        comp.clone(),
        comp,
        DistortionSpec::hamming(2),
        DistortionSpec::hamming(2),
    )
    .unwrap()
}

/// Random binary component with the chain X - Y - Z exact by construction.
pub fn random_degraded_binary_component<R: Rng>(rng: &mut R) -> ComponentSource {
    let px = random_simplex(rng, 2, 0.1);
    let y_rows = vec![random_simplex(rng, 2, 0.05), random_simplex(rng, 2, 0.05)];
    let z_rows = vec![random_simplex(rng, 2, 0.05), random_simplex(rng, 2, 0.05)];
    ComponentSource::from_chain(&px, &y_rows, &z_rows).unwrap()
}

/// Random matched-order binary product source with Hamming distortion.
pub fn random_matched_binary(seed: u64) -> ProductSource {
    let mut rng = rng::stream(seed, 0x6d61_7463);
    let comp1 = random_degraded_binary_component(&mut rng);
    let comp2 = random_degraded_binary_component(&mut rng);
    ProductSource::new(
        comp1,
        comp2,
        DistortionSpec::hamming(2),
        DistortionSpec::hamming(2),
    )
    .unwrap()
}

/// Random mismatched-order binary product source: component 1 favors the
/// Y-side decoder, component 2 favors the Z-side decoder.
pub fn random_mismatched_binary(seed: u64) -> ProductSource {
    let mut rng = rng::stream(seed, 0x6d69_736d);
    let comp1 = random_degraded_binary_component(&mut rng);
    let comp2 = random_degraded_binary_component(&mut rng).swap_side_info();
    ProductSource::new(
        comp1,
        comp2,
        DistortionSpec::hamming(2),
        DistortionSpec::hamming(2),
    )
    .unwrap()
}

/// Resolve a named built-in source.
pub fn by_name(name: &str) -> Result<ProductSource> {
    match name {
        "fig2-butterfly" => Ok(fig2_butterfly()),
        "noisy-butterfly" => Ok(noisy_butterfly(0.05)),
        "binary-matched" => Ok(binary_matched()),
        other => Err(HbrdError::Config(format!(
            "unknown built-in source '{}'; available: fig2-butterfly, noisy-butterfly, binary-matched",
            other
        ))),
    }
}
