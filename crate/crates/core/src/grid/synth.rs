//! Seeded synthetic hourly traces: diurnal PV, autocorrelated wind and a
//! double-peak residential load.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ExogenousTrace, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub start: NaiveDateTime,
    /// Clear-sky PV peak, kW.
    pub pv_peak: f64,
    /// PV produces strictly inside (sunrise, sunset), hours.
    pub sunrise: f64,
    pub sunset: f64,
    /// Wind speed AR(1): mean (m/s), persistence, innovation std.
    pub wind_mean: f64,
    pub wind_phi: f64,
    pub wind_sigma: f64,
    pub wt_rated: f64,
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    pub load_base: f64,
    pub morning_peak: f64,
    pub evening_peak: f64,
    /// Relative std of hourly load noise.
    pub load_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            start: NaiveDate::from_ymd_opt(2016, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            pv_peak: 80.0,
            sunrise: 6.0,
            sunset: 20.0,
            wind_mean: 6.5,
            wind_phi: 0.85,
            wind_sigma: 1.0,
            wt_rated: 60.0,
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            load_base: 45.0,
            morning_peak: 30.0,
            evening_peak: 65.0,
            load_noise: 0.05,
        }
    }
}

impl SynthParams {
    fn wind_power(&self, u: f64) -> f64 {
        if u < self.cut_in || u >= self.cut_out {
            0.0
        } else if u >= self.rated_speed {
            self.wt_rated
        } else {
            let f = (u - self.cut_in) / (self.rated_speed - self.cut_in);
            self.wt_rated * f * f * f
        }
    }

    fn clear_sky(&self, hour: f64) -> f64 {
        if hour <= self.sunrise || hour >= self.sunset {
            return 0.0;
        }
        let x = (hour - self.sunrise) / (self.sunset - self.sunrise);
        (std::f64::consts::PI * x).sin().powf(1.5)
    }

    fn load_shape(&self, hour: f64) -> f64 {
        let bump = |c: f64, w: f64| (-(hour - c) * (hour - c) / (2.0 * w * w)).exp();
        self.load_base + self.morning_peak * bump(8.0, 1.5) + self.evening_peak * bump(19.0, 2.0)
    }
}

/// `days` whole days of hourly data, reproducible from `seed`.
pub fn generate(days: usize, seed: u64, params: &SynthParams) -> ExogenousTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut records = Vec::with_capacity(days * 24);
    let mut speed = params.wind_mean;
    for d in 0..days {
        let cloud = rng.gen_range(0.35..1.0);
        let load_level = rng.gen_range(0.85..1.15);
        for h in 0..24 {
            let hour = h as f64;
            let timestamp = params.start + Duration::hours((d * 24 + h) as i64);
            let sky = params.clear_sky(hour);
            let pv = if sky > 0.0 {
                let jitter = 1.0 + 0.1 * std_normal.sample(&mut rng);
                (params.pv_peak * cloud * sky * jitter).clamp(0.0, params.pv_peak)
            } else {
                0.0
            };
            speed = params.wind_mean
                + params.wind_phi * (speed - params.wind_mean)
                + params.wind_sigma * std_normal.sample(&mut rng);
            speed = speed.max(0.0);
            let wt = params.wind_power(speed);
            let noise = 1.0 + params.load_noise * std_normal.sample(&mut rng);
            let load = (params.load_shape(hour) * load_level * noise).max(0.0);
            records.push(TraceRecord {
                timestamp,
                pv,
                wt,
                load,
            });
        }
    }
    ExogenousTrace { records, dt: 1.0 }
}
