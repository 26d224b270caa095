//! Uplink model: log-distance path loss, Rayleigh power fading and the
//! Shannon-type offloading rate.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::ChannelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState<T> {
    pub distance_m: T,
    /// γ = (d0/d)^η
    pub path_loss: T,
    /// Small-scale power gain, Exp(1).
    pub fading: T,
    /// ρ = sqrt(γ·s)
    pub coefficient: T,
}

impl<T: Scalar> ChannelState<T> {
    /// Builds a state from explicit gains.
    pub fn new(distance_m: T, path_loss: T, fading: T) -> Result<Self> {
        if !(distance_m > T::zero()) || !distance_m.is_finite() {
            return Err(Error::Domain(format!("distance must be > 0, got {distance_m}")));
        }
        if !(path_loss > T::zero()) || fading < T::zero() || !fading.is_finite() {
            return Err(Error::Domain(format!(
                "invalid gains: path loss {path_loss}, fading {fading}"
            )));
        }
        Ok(Self {
            distance_m,
            path_loss,
            fading,
            coefficient: (path_loss * fading).sqrt(),
        })
    }

    pub fn power_gain(&self) -> T {
        self.coefficient * self.coefficient
    }
}

/// Log-distance path loss γ = (d0/d)^η.
pub fn path_loss<T: Scalar>(d_m: T, reference_m: T, exponent: T) -> Result<T> {
    if !(d_m > T::zero()) || !d_m.is_finite() {
        return Err(Error::Domain(format!("distance must be > 0, got {d_m}")));
    }
    Ok((reference_m / d_m).powf(exponent))
}

/// Draws a channel at distance `d_m` metres.
pub fn sample_channel<T: Scalar, R: Rng + ?Sized>(
    d_m: T,
    reference_m: T,
    exponent: T,
    rng: &mut R,
) -> Result<ChannelState<T>> {
    let gamma = path_loss(d_m, reference_m, exponent)?;
    let s: f64 = Exp1.sample(rng);
    ChannelState::new(d_m, gamma, T::lit(s))
}

fn check_finite<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

/// R = B·log2(1 + π·p·|ρ|² / (d·σ²)), with d in metres.
pub fn transmission_rate<T: Scalar>(
    p_w: T,
    ch: &ChannelState<T>,
    sigma2_w: T,
    bandwidth_hz: T,
    associated: bool,
) -> Result<T> {
    rate_impl(p_w, ch, sigma2_w, bandwidth_hz, associated, true)
}

fn rate_impl<T: Scalar>(
    p_w: T,
    ch: &ChannelState<T>,
    sigma2_w: T,
    bandwidth_hz: T,
    associated: bool,
    with_distance: bool,
) -> Result<T> {
    check_finite("transmit power", p_w)?;
    check_finite("noise power", sigma2_w)?;
    check_finite("bandwidth", bandwidth_hz)?;
    check_finite("channel coefficient", ch.coefficient)?;
    if !(sigma2_w > T::zero()) || !(bandwidth_hz > T::zero()) || !(ch.distance_m > T::zero()) {
        return Err(Error::Domain(
            "noise power, bandwidth and distance must be positive".into(),
        ));
    }
    if !associated {
        return Ok(T::zero());
    }
    let mut denom = sigma2_w;
    if with_distance {
        denom = denom * ch.distance_m;
    }
    let snr = p_w.max(T::zero()) * ch.power_gain() / denom;
    Ok(bandwidth_hz * snr.ln_1p() / T::lit(std::f64::consts::LN_2))
}

/// Channel parameters bound together, as configured for a scenario.
#[derive(Debug, Clone, Copy)]
pub struct ChannelModel<T> {
    pub exponent: T,
    pub reference_m: T,
    pub literal: bool,
}

impl<T: Scalar> ChannelModel<T> {
    pub fn from_config(cfg: &ChannelConfig) -> Self {
        Self {
            exponent: T::lit(cfg.path_loss_exponent),
            reference_m: T::lit(cfg.reference_distance_m),
            literal: cfg.distance_in_snr,
        }
    }

    /// Distances below the reference distance are clamped to it.
    pub fn sample<R: Rng + ?Sized>(&self, d_m: T, rng: &mut R) -> Result<ChannelState<T>> {
        sample_channel(d_m.max(self.reference_m), self.reference_m, self.exponent, rng)
    }

    /// Channel with unit fading, for state features.
    pub fn mean_channel(&self, d_m: T) -> Result<ChannelState<T>> {
        let d = d_m.max(self.reference_m);
        ChannelState::new(d, path_loss(d, self.reference_m, self.exponent)?, T::one())
    }

    /// Literal form keeps the extra 1/d in the SNR; otherwise path loss only.
    pub fn rate(
        &self,
        p_w: T,
        ch: &ChannelState<T>,
        sigma2_w: T,
        bandwidth_hz: T,
        associated: bool,
    ) -> Result<T> {
        rate_impl(p_w, ch, sigma2_w, bandwidth_hz, associated, self.literal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_at_reference_is_one() {
        assert_eq!(path_loss(1.0_f64, 1.0, 2.7).unwrap(), 1.0);
    }

    #[test]
    fn path_loss_inverse_square() {
        assert!((path_loss(10.0_f64, 1.0, 2.0).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_distance_is_domain_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_channel(0.0_f64, 1.0, 2.7, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(sample_channel(-3.0_f64, 1.0, 2.7, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn fading_deterministic_per_seed() {
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            sample_channel(50.0_f64, 1.0, 2.7, &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn coefficient_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1.0, 7.5, 120.0, 900.0] {
            let ch = sample_channel(d, 1.0_f64, 2.7, &mut rng).unwrap();
            let g = ch.path_loss * ch.fading;
            assert!((ch.power_gain() - g).abs() <= 1e-12 * g.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn unassociated_rate_is_zero() {
        let ch = ChannelState::new(10.0_f64, 0.1, 1.0).unwrap();
        assert_eq!(transmission_rate(0.4, &ch, 2e-12, 20e6, false).unwrap(), 0.0);
    }

    #[test]
    fn unit_snr_gives_bandwidth() {
        // p|ρ|²/(dσ²) = 0.5·0.4/(10·2e-2) = 1
        let ch = ChannelState::new(10.0_f64, 0.4, 1.0).unwrap();
        let r = transmission_rate(0.5, &ch, 2e-2, 20e6, true).unwrap();
        assert!((r - 2.0e7).abs() < 1e-6);
    }

    #[test]
    fn zero_power_zero_rate() {
        let ch = ChannelState::new(10.0_f64, 0.4, 1.0).unwrap();
        assert_eq!(transmission_rate(0.0, &ch, 2e-12, 20e6, true).unwrap(), 0.0);
    }

    #[test]
    fn nonfinite_inputs_rejected() {
        let ch = ChannelState::new(10.0_f64, 0.4, 1.0).unwrap();
        assert!(transmission_rate(f64::NAN, &ch, 2e-12, 20e6, true).is_err());
        assert!(transmission_rate(0.4, &ch, f64::INFINITY, 20e6, true).is_err());
    }

    #[test]
    fn path_loss_only_variant_drops_distance() {
        let model = ChannelModel::<f64> {
            exponent: 2.0,
            reference_m: 1.0,
            literal: false,
        };
        let ch = ChannelState::new(10.0, 0.4, 1.0).unwrap();
        let r = model.rate(0.05, &ch, 2e-2, 20e6, true).unwrap();
        assert!((r - 2.0e7).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn rate_monotone(
            p in 0.0f64..1.0, dp in 0.0f64..1.0,
            d in 1.0f64..2000.0, dd in 0.0f64..500.0,
            s in 0.0f64..5.0, ds in 0.0f64..5.0,
            sigma in 1e-13f64..1e-10, dsigma in 0.0f64..1e-10,
        ) {
            let b = 20e6;
            let gamma = path_loss(d, 1.0, 2.7).unwrap();
            let base = ChannelState::new(d, gamma, s).unwrap();
            let r0 = transmission_rate(p, &base, sigma, b, true).unwrap();
            prop_assert!(r0 >= 0.0);
            // power
            prop_assert!(transmission_rate(p + dp, &base, sigma, b, true).unwrap() >= r0);
            // |ρ|²
            let stronger = ChannelState::new(d, gamma, s + ds).unwrap();
            prop_assert!(transmission_rate(p, &stronger, sigma, b, true).unwrap() >= r0);
            // distance, with the path loss it implies
            let far = ChannelState::new(d + dd, path_loss(d + dd, 1.0, 2.7).unwrap(), s).unwrap();
            prop_assert!(transmission_rate(p, &far, sigma, b, true).unwrap() <= r0);
            // noise
            prop_assert!(transmission_rate(p, &base, sigma + dsigma, b, true).unwrap() <= r0);
            // linear in bandwidth
            let r2 = transmission_rate(p, &base, sigma, 2.0 * b, true).unwrap();
            prop_assert!((r2 - 2.0 * r0).abs() <= 1e-9 * r0.max(1.0));
        }
    }
}
