//! Seeded boundary distributions.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    /// `N(a, I)`. A single-element `a` is broadcast to every coordinate.
    ShiftedGaussian { a: Vec<f64> },
    /// Equal-weight mixture of isotropic Gaussians.
    GaussianMixture { centers: Vec<Vec<f64>>, sigma: f64 },
    /// Uniform over the "black" cells of a `cells x cells` board on
    /// `[-scale, scale]^2`. 2-D only.
    Checkerboard { cells: usize, scale: f64 },
    /// Two interleaved half circles with Gaussian jitter. 2-D only.
    TwoMoons { noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    #[serde(flatten)]
    pub kind: SamplerKind,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Sampler {
    pub fn new(kind: SamplerKind, d: usize, seed: u64) -> Result<Self> {
        let s = Self { kind, d, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn shifted_gaussian(a: Vec<f64>, d: usize, seed: u64) -> Result<Self> {
        Self::new(SamplerKind::ShiftedGaussian { a }, d, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("sampler dimension must be positive"));
        }
        match &self.kind {
            SamplerKind::ShiftedGaussian { a } => {
                if a.len() != 1 && a.len() != self.d {
                    return Err(Error::invalid(format!(
                        "shift has {} entries for d = {}",
                        a.len(),
                        self.d
                    )));
                }
            }
            SamplerKind::GaussianMixture { centers, sigma } => {
                if centers.is_empty() || centers.iter().any(|c| c.len() != self.d) {
                    return Err(Error::invalid("mixture centers must be nonempty and match d"));
                }
                if !(*sigma >= 0.0) {
                    return Err(Error::invalid("mixture sigma must be nonnegative"));
                }
            }
            SamplerKind::Checkerboard { cells, scale } => {
                if self.d != 2 {
                    return Err(Error::invalid("checkerboard is 2-D only"));
                }
                if *cells == 0 || !(*scale > 0.0) {
                    return Err(Error::invalid("checkerboard needs cells >= 1 and scale > 0"));
                }
            }
            SamplerKind::TwoMoons { noise } => {
                if self.d != 2 {
                    return Err(Error::invalid("two moons is 2-D only"));
                }
                if !(*noise >= 0.0) {
                    return Err(Error::invalid("two moons noise must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Full shift vector of a shifted Gaussian.
    pub fn gaussian_shift(&self) -> Option<Vec<f64>> {
        match &self.kind {
            SamplerKind::ShiftedGaussian { a } if a.len() == 1 => Some(vec![a[0]; self.d]),
            SamplerKind::ShiftedGaussian { a } => Some(a.clone()),
            _ => None,
        }
    }

    /// Stream `id` of this sampler.
    pub fn stream(&self, id: u64) -> DataStream<'_> {
        DataStream {
            sampler: self,
            rng: rng::stream(self.seed, id),
        }
    }

    /// `n` i.i.d. draws as an `n x d` batch.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f32>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("draw needs n >= 1"));
        }
        let d = self.d;
        let mut out = Array2::<f32>::zeros((n, d));
        match &self.kind {
            SamplerKind::ShiftedGaussian { .. } => {
                let a = self.gaussian_shift().unwrap();
                for mut row in out.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = (a[j] + z) as f32;
                    }
                }
            }
            SamplerKind::GaussianMixture { centers, sigma } => {
                for mut row in out.rows_mut() {
                    let c = &centers[rng.random_range(0..centers.len())];
                    for (j, v) in row.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = (c[j] + sigma * z) as f32;
                    }
                }
            }
            SamplerKind::Checkerboard { cells, scale } => {
                let cells = *cells;
                let width = 2.0 * scale / cells as f64;
                let black: Vec<(usize, usize)> = (0..cells)
                    .flat_map(|i| (0..cells).map(move |j| (i, j)))
                    .filter(|(i, j)| (i + j) % 2 == 0)
                    .collect();
                for mut row in out.rows_mut() {
                    let (i, j) = black[rng.random_range(0..black.len())];
                    let u: f64 = rng.random();
                    let w: f64 = rng.random();
                    row[0] = (-scale + (i as f64 + u) * width) as f32;
                    row[1] = (-scale + (j as f64 + w) * width) as f32;
                }
            }
            SamplerKind::TwoMoons { noise } => {
                for mut row in out.rows_mut() {
                    let t: f64 = rng.random::<f64>() * std::f64::consts::PI;
                    let (x, y) = if rng.random::<bool>() {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    let zx: f64 = StandardNormal.sample(rng);
                    let zy: f64 = StandardNormal.sample(rng);
                    row[0] = (x - 0.5 + noise * zx) as f32;
                    row[1] = (y - 0.25 + noise * zy) as f32;
                }
            }
        }
        Ok(out)
    }
}

/// True when `(x, y)` lies in a black cell of the board.
pub fn checkerboard_contains(x: f64, y: f64, cells: usize, scale: f64) -> bool {
    if x < -scale || x > scale || y < -scale || y > scale {
        return false;
    }
    let width = 2.0 * scale / cells as f64;
    let i = (((x + scale) / width).floor() as usize).min(cells - 1);
    let j = (((y + scale) / width).floor() as usize).min(cells - 1);
    (i + j).is_multiple_of(2)
}

/// A sampler bound to one RNG stream.
pub struct DataStream<'a> {
    sampler: &'a Sampler,
    rng: StreamRng,
}

impl DataStream<'_> {
    pub fn draw(&mut self, n: usize) -> Result<Array2<f32>> {
        self.sampler.draw(n, &mut self.rng)
    }

    pub fn dim(&self) -> usize {
        self.sampler.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;

    fn mean(x: &Array2<f32>) -> Vec<f64> {
        x.map(|&v| v as f64).mean_axis(Axis(0)).unwrap().to_vec()
    }

    #[test]
    fn shifted_gaussian_mean() {
        let s = Sampler::shifted_gaussian(vec![1.0, 1.0], 2, 7).unwrap();
        let x = s.stream(0).draw(100_000).unwrap();
        for m in mean(&x) {
            assert!((m - 1.0).abs() < 0.02, "mean {m}");
        }
    }

    #[test]
    fn one_center_mixture_matches_shifted_gaussian() {
        let mix = Sampler::new(
            SamplerKind::GaussianMixture {
                centers: vec![vec![1.0, -2.0]],
                sigma: 1.0,
            },
            2,
            1,
        )
        .unwrap();
        let g = Sampler::shifted_gaussian(vec![1.0, -2.0], 2, 2).unwrap();
        let a = mix.stream(0).draw(100_000).unwrap();
        let b = g.stream(0).draw(100_000).unwrap();
        for (ma, mb) in mean(&a).iter().zip(mean(&b)) {
            assert!((ma - mb).abs() < 0.02);
        }
        let va = a.map(|&v| v as f64).var_axis(Axis(0), 1.0);
        let vb = b.map(|&v| v as f64).var_axis(Axis(0), 1.0);
        for (x, y) in va.iter().zip(vb.iter()) {
            assert!((x - y).abs() < 0.02);
        }
    }

    #[test]
    fn checkerboard_support() {
        let s = Sampler::new(SamplerKind::Checkerboard { cells: 4, scale: 2.0 }, 2, 3).unwrap();
        let x = s.stream(0).draw(20_000).unwrap();
        for row in x.rows() {
            assert!(checkerboard_contains(row[0] as f64, row[1] as f64, 4, 2.0));
        }
    }

    #[test]
    fn unsupported_dimension() {
        assert!(Sampler::new(SamplerKind::Checkerboard { cells: 4, scale: 2.0 }, 3, 0).is_err());
        assert!(Sampler::new(SamplerKind::TwoMoons { noise: 0.1 }, 1, 0).is_err());
        assert!(Sampler::shifted_gaussian(vec![1.0, 2.0], 3, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed_and_stream() {
        let s = Sampler::new(SamplerKind::TwoMoons { noise: 0.05 }, 2, 11).unwrap();
        assert_eq!(s.stream(4).draw(64).unwrap(), s.stream(4).draw(64).unwrap());
        assert_ne!(s.stream(4).draw(64).unwrap(), s.stream(5).draw(64).unwrap());
    }

    #[test]
    fn streams_are_uncorrelated() {
        let s = Sampler::shifted_gaussian(vec![0.0], 1, 5).unwrap();
        let a = s.stream(0).draw(100_000).unwrap();
        let b = s.stream(1).draw(100_000).unwrap();
        let n = a.nrows() as f64;
        let (ma, mb) = (mean(&a)[0], mean(&b)[0]);
        let mut cov = 0.0;
        let (mut va, mut vb) = (0.0, 0.0);
        for i in 0..a.nrows() {
            let x = a[[i, 0]] as f64 - ma;
            let y = b[[i, 0]] as f64 - mb;
            cov += x * y;
            va += x * x;
            vb += y * y;
        }
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.02, "corr {corr} over {n} draws");
    }

    #[test]
    fn scalar_shift_broadcasts() {
        let s = Sampler::shifted_gaussian(vec![1.0], 3, 0).unwrap();
        assert_eq!(s.gaussian_shift().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn config_round_trip() {
        let s = Sampler::new(SamplerKind::Checkerboard { cells: 4, scale: 2.0 }, 2, 9).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"checkerboard\""));
        let back: Sampler = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
