//! Weight initialization.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// He/Kaiming normal draw adjusted for a leaky-ReLU gain:
/// `std = sqrt(2 / ((1 + slope^2) * fan_in))`.
///
/// `fan_in` is passed explicitly because the two convolution weight layouts
/// place the input channel axis differently.
pub fn he_normal(
    shape: [usize; 4],
    fan_in: usize,
    negative_slope: f64,
    rng: &mut impl Rng,
) -> Tensor {
    assert!(fan_in > 0, "fan_in must be positive");
    assert!((0.0..1.0).contains(&negative_slope), "slope must be in [0, 1)");
    let std = (2.0 / ((1.0 + negative_slope * negative_slope) * fan_in as f64)).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * std
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape by construction")
}
