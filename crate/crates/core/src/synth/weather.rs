use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::{SynthConfig, SynthError};
use crate::features::{HourGrid, WeatherSeries};

/// One sampled rain episode, in hours from the start of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainEpisode {
    pub start: f64,
    pub hours: f64,
    /// Rain rate in mm/h while the episode lasts.
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthWeather {
    pub series: WeatherSeries,
    pub episodes: Vec<RainEpisode>,
}

fn exp_sample<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    Exp::new(1.0 / mean).expect("positive mean").sample(rng)
}

/// Episodes arrive as a Poisson process. Each hour's `hd` is the rained-on
/// share of the hour in minutes and `hr` the rain falling in it, so hours
/// outside every episode are dry.
pub fn generate_weather(config: &SynthConfig) -> Result<SynthWeather, SynthError> {
    config.validate()?;
    let mut rng = config.rng(2);
    let hours = config.hours();
    let mean = config.rain_episode_rate * config.days as f64;
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize
    } else {
        0
    };
    let mut episodes: Vec<RainEpisode> = (0..count)
        .map(|_| RainEpisode {
            start: rng.random_range(0.0..hours as f64),
            hours: exp_sample(&mut rng, config.rain_mean_hours).max(0.1),
            intensity: exp_sample(&mut rng, config.rain_mean_intensity).max(0.05),
        })
        .collect();
    episodes.sort_by(|a, b| a.start.total_cmp(&b.start));

    let mut hr = vec![0.0; hours];
    let mut covered: Vec<Vec<(f64, f64)>> = vec![Vec::new(); hours];
    for e in &episodes {
        let end = (e.start + e.hours).min(hours as f64);
        let first = e.start.floor() as usize;
        for (h, slot) in hr.iter_mut().enumerate().take(end.ceil() as usize).skip(first) {
            let a = e.start.max(h as f64);
            let b = end.min(h as f64 + 1.0);
            if b > a {
                *slot += e.intensity * (b - a);
                covered[h].push((a, b));
            }
        }
    }
    let hd: Vec<f64> = covered
        .into_iter()
        .map(|mut spans| {
            spans.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut total = 0.0;
            let mut cur: Option<(f64, f64)> = None;
            for (a, b) in spans {
                match cur {
                    Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
                    Some((ca, cb)) => {
                        total += cb - ca;
                        cur = Some((a, b));
                    }
                    None => cur = Some((a, b)),
                }
            }
            if let Some((ca, cb)) = cur {
                total += cb - ca;
            }
            (60.0 * total).min(60.0)
        })
        .collect();
    let grid = HourGrid::days(config.start_date, config.days);
    Ok(SynthWeather {
        series: WeatherSeries::new(grid, hr, hd)?,
        episodes,
    })
}
