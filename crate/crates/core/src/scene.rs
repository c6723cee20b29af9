//! Random planar networks and noisy pairwise range measurements.
//!
//! A measurement between nodes `i` and `j` is the true distance plus a
//! Gaussian LOS error and, with probability `p_nlos`, a nonnegative uniform
//! NLOS bias. One draw is made per unordered pair and mirrored.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_AREA_SIDE: f64 = 5.0;
pub const DEFAULT_NLOS_MAX: f64 = 10.0;

/// Node positions with the first `n_anchors` rows as anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    positions: Array2<f64>,
    n_anchors: usize,
    area_side: f64,
}

impl Scene {
    pub fn new(positions: Array2<f64>, n_anchors: usize, area_side: f64) -> Result<Self> {
        let n = positions.nrows();
        if positions.ncols() != 2 {
            return Err(Error::config(format!(
                "positions must have 2 columns, got {}",
                positions.ncols()
            )));
        }
        validate_counts(n, n_anchors, area_side)?;
        if let Some(bad) = positions
            .iter()
            .find(|&&c| !(0.0..=area_side).contains(&c))
        {
            return Err(Error::config(format!(
                "coordinate {bad} outside [0, {area_side}]"
            )));
        }
        Ok(Scene {
            positions,
            n_anchors,
            area_side,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.nrows()
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn n_agents(&self) -> usize {
        self.n_nodes() - self.n_anchors
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn positions(&self) -> ArrayView2<'_, f64> {
        self.positions.view()
    }

    pub fn position(&self, i: usize) -> ArrayView1<'_, f64> {
        self.positions.row(i)
    }

    pub fn anchor_positions(&self) -> ArrayView2<'_, f64> {
        self.positions.slice_axis(Axis(0), (..self.n_anchors).into())
    }

    pub fn agent_positions(&self) -> ArrayView2<'_, f64> {
        self.positions.slice_axis(Axis(0), (self.n_anchors..).into())
    }

    /// Copy of the scene with every agent coordinate overwritten by `fill`.
    /// Training must be insensitive to this.
    pub fn redact_agents(&self, fill: f64) -> Result<Scene> {
        let mut positions = self.positions.clone();
        positions
            .slice_axis_mut(Axis(0), (self.n_anchors..).into())
            .fill(fill);
        Scene::new(positions, self.n_anchors, self.area_side)
    }
}

fn validate_counts(n: usize, n_anchors: usize, area_side: f64) -> Result<()> {
    if n_anchors < 1 || n_anchors >= n {
        return Err(Error::config(format!(
            "need 1 <= n_anchors < n, got n_anchors={n_anchors}, n={n}"
        )));
    }
    if !(area_side > 0.0 && area_side.is_finite()) {
        return Err(Error::config(format!("area side must be positive, got {area_side}")));
    }
    Ok(())
}

/// LOS/NLOS mixture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma_sq: f64,
    pub p_nlos: f64,
    #[serde(default = "default_nlos_max")]
    pub nlos_max: f64,
}

fn default_nlos_max() -> f64 {
    DEFAULT_NLOS_MAX
}

impl NoiseParams {
    pub fn new(sigma_sq: f64, p_nlos: f64) -> Result<Self> {
        Self::with_nlos_max(sigma_sq, p_nlos, DEFAULT_NLOS_MAX)
    }

    pub fn with_nlos_max(sigma_sq: f64, p_nlos: f64, nlos_max: f64) -> Result<Self> {
        let params = NoiseParams {
            sigma_sq,
            p_nlos,
            nlos_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn noiseless() -> Self {
        NoiseParams {
            sigma_sq: 0.0,
            p_nlos: 0.0,
            nlos_max: DEFAULT_NLOS_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sq >= 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::config(format!("sigma_sq must be >= 0, got {}", self.sigma_sq)));
        }
        if !(0.0..=1.0).contains(&self.p_nlos) {
            return Err(Error::config(format!("p_nlos must lie in [0, 1], got {}", self.p_nlos)));
        }
        if !(self.nlos_max >= 0.0 && self.nlos_max.is_finite()) {
            return Err(Error::config(format!("nlos_max must be >= 0, got {}", self.nlos_max)));
        }
        Ok(())
    }

    fn sampler(&self) -> Result<NoiseSampler> {
        self.validate()?;
        Ok(NoiseSampler {
            los: Normal::new(0.0, self.sigma_sq.sqrt())
                .map_err(|e| Error::config(e.to_string()))?,
            occurs: Bernoulli::new(self.p_nlos).map_err(|e| Error::config(e.to_string()))?,
            bias: Uniform::new_inclusive(0.0, self.nlos_max)
                .map_err(|e| Error::config(e.to_string()))?,
        })
    }
}

/// One realisation of the pairwise error `n = n_los + b * n_nlos`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub los: f64,
    pub nlos_active: bool,
    pub nlos_bias: f64,
}

impl NoiseDraw {
    pub fn total(&self) -> f64 {
        if self.nlos_active {
            self.los + self.nlos_bias
        } else {
            self.los
        }
    }
}

struct NoiseSampler {
    los: Normal<f64>,
    occurs: Bernoulli,
    bias: Uniform<f64>,
}

impl NoiseSampler {
    // All three components are drawn every time so the stream position does
    // not depend on the Bernoulli outcome.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseDraw {
        let los = self.los.sample(rng);
        let nlos_active = self.occurs.sample(rng);
        let nlos_bias = self.bias.sample(rng);
        NoiseDraw {
            los,
            nlos_active,
            nlos_bias,
        }
    }
}

/// Draw a single pairwise error.
pub fn draw_noise<R: Rng + ?Sized>(noise: &NoiseParams, rng: &mut R) -> Result<NoiseDraw> {
    Ok(noise.sampler()?.draw(rng))
}

/// Symmetric, zero-diagonal matrix of range measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        Error::check_shape("distance matrix", (r, r), (r, c))?;
        for i in 0..r {
            if values[[i, i]] != 0.0 {
                return Err(Error::config(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..r {
                if values[[i, j]] != values[[j, i]] {
                    return Err(Error::config(format!("asymmetric entry at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// Largest off-diagonal entry (0 for a single node).
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.n();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.values[[i, j]]);
            }
        }
        best
    }
}

pub fn generate_scene<R: Rng + ?Sized>(
    n: usize,
    n_anchors: usize,
    area_side: f64,
    rng: &mut R,
) -> Result<Scene> {
    validate_counts(n, n_anchors, area_side)?;
    let coord = Uniform::new_inclusive(0.0, area_side).map_err(|e| Error::config(e.to_string()))?;
    let positions = Array2::from_shape_simple_fn((n, 2), || coord.sample(rng));
    Scene::new(positions, n_anchors, area_side)
}

pub fn true_distances(scene: &Scene) -> DistanceMatrix {
    let n = scene.n_nodes();
    let p = scene.positions();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (p[[i, 0]] - p[[j, 0]]).hypot(p[[i, 1]] - p[[j, 1]]);
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    DistanceMatrix { values }
}

pub fn measure_distances<R: Rng + ?Sized>(
    scene: &Scene,
    noise: &NoiseParams,
    rng: &mut R,
) -> Result<DistanceMatrix> {
    let sampler = noise.sampler()?;
    let truth = true_distances(scene);
    let n = scene.n_nodes();
    let mut values = truth.values;
    for i in 0..n {
        for j in (i + 1)..n {
            let draw = sampler.draw(rng);
            let x = (values[[i, j]] + draw.total()).max(0.0);
            values[[i, j]] = x;
            values[[j, i]] = x;
        }
    }
    Ok(DistanceMatrix { values })
}

/// JSON form of a scene together with its measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub area_side: f64,
    pub n_anchors: usize,
    pub positions: Vec<[f64; 2]>,
    pub distances: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub noise: NoiseParams,
}

impl SceneDocument {
    pub fn new(
        scene: &Scene,
        distances: &DistanceMatrix,
        noise: NoiseParams,
        seed: Option<u64>,
    ) -> Self {
        SceneDocument {
            area_side: scene.area_side,
            n_anchors: scene.n_anchors,
            positions: scene
                .positions
                .rows()
                .into_iter()
                .map(|r| [r[0], r[1]])
                .collect(),
            distances: distances
                .values
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            seed,
            noise,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuild and validate the in-memory scene and distance matrix.
    pub fn into_parts(self) -> Result<(Scene, DistanceMatrix)> {
        let n = self.positions.len();
        let flat: Vec<f64> = self.positions.iter().flatten().copied().collect();
        let positions = Array2::from_shape_vec((n, 2), flat)
            .map_err(|e| Error::config(e.to_string()))?;
        let scene = Scene::new(positions, self.n_anchors, self.area_side)?;
        if self.distances.len() != n || self.distances.iter().any(|r| r.len() != n) {
            return Err(Error::config(format!(
                "distance matrix must be {n}x{n} to match positions"
            )));
        }
        let flat: Vec<f64> = self.distances.into_iter().flatten().collect();
        let values =
            Array2::from_shape_vec((n, n), flat).map_err(|e| Error::config(e.to_string()))?;
        self.noise.validate()?;
        Ok((scene, DistanceMatrix::new(values)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn generates_requested_split() {
        let scene = generate_scene(500, 50, 5.0, &mut seeded(1)).unwrap();
        assert_eq!(scene.n_nodes(), 500);
        assert_eq!(scene.n_anchors(), 50);
        assert_eq!(scene.n_agents(), 450);
        assert!(scene.positions().iter().all(|&c| (0.0..=5.0).contains(&c)));

        let tiny = generate_scene(2, 1, 5.0, &mut seeded(1)).unwrap();
        assert_eq!((tiny.n_anchors(), tiny.n_agents()), (1, 1));
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(generate_scene(5, 0, 5.0, &mut seeded(0)).is_err());
        assert!(generate_scene(5, 5, 5.0, &mut seeded(0)).is_err());
        assert!(generate_scene(5, 2, 0.0, &mut seeded(0)).is_err());
        assert!(generate_scene(1, 1, 5.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate_scene(50, 5, 5.0, &mut seeded(9)).unwrap();
        let b = generate_scene(50, 5, 5.0, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn three_four_five() {
        let scene = Scene::new(array![[0.0, 0.0], [3.0, 4.0]], 1, 5.0).unwrap();
        let d = true_distances(&scene);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn true_distances_match_scalar_loop() {
        let scene = generate_scene(40, 4, 5.0, &mut seeded(3)).unwrap();
        let d = true_distances(&scene);
        for i in 0..40 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..40 {
                let dx = scene.position(i)[0] - scene.position(j)[0];
                let dy = scene.position(i)[1] - scene.position(j)[1];
                let expected = (dx * dx + dy * dy).sqrt();
                assert!((d.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let scene = generate_scene(30, 3, 5.0, &mut seeded(4)).unwrap();
        let measured = measure_distances(&scene, &NoiseParams::noiseless(), &mut seeded(5)).unwrap();
        assert_eq!(measured, true_distances(&scene));
    }

    #[test]
    fn pure_nlos_never_shortens() {
        let scene = generate_scene(30, 3, 5.0, &mut seeded(4)).unwrap();
        let noise = NoiseParams::new(0.0, 1.0).unwrap();
        let measured = measure_distances(&scene, &noise, &mut seeded(5)).unwrap();
        let truth = true_distances(&scene);
        for i in 0..30 {
            for j in 0..30 {
                if i != j {
                    assert!(measured.get(i, j) >= truth.get(i, j));
                }
            }
        }
    }

    #[test]
    fn measurements_symmetric_nonnegative_zero_diagonal() {
        let scene = generate_scene(60, 6, 5.0, &mut seeded(8)).unwrap();
        let noise = NoiseParams::new(4.0, 0.2).unwrap();
        let measured = measure_distances(&scene, &noise, &mut seeded(2)).unwrap();
        let v = measured.values();
        for i in 0..60 {
            assert_eq!(v[[i, i]], 0.0);
            for j in 0..60 {
                assert_eq!(v[[i, j]], v[[j, i]]);
                assert!(v[[i, j]] >= 0.0);
            }
        }
        // large sigma guarantees some clamping happened
        assert!(v.iter().enumerate().any(|(k, &x)| x == 0.0 && k / 60 != k % 60));
    }

    #[test]
    fn nlos_activation_rate() {
        let noise = NoiseParams::new(0.25, 0.3).unwrap();
        let mut rng = seeded(11);
        let draws = 100_000;
        let active = (0..draws)
            .filter(|_| draw_noise(&noise, &mut rng).unwrap().nlos_active)
            .count();
        let rate = active as f64 / draws as f64;
        assert!((rate - 0.3).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn los_error_moments() {
        let sigma_sq = 0.25;
        let noise = NoiseParams::new(sigma_sq, 0.0).unwrap();
        let mut rng = seeded(12);
        let n = 200_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| draw_noise(&noise, &mut rng).unwrap().total())
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * sigma_sq.sqrt() / (n as f64).sqrt(), "mean {mean}");
        assert!((var - sigma_sq).abs() < 0.05 * sigma_sq, "var {var}");
    }

    #[test]
    fn invalid_noise_rejected() {
        assert!(NoiseParams::new(-0.1, 0.0).is_err());
        assert!(NoiseParams::new(0.1, 1.5).is_err());
        assert!(NoiseParams::with_nlos_max(0.1, 0.5, -1.0).is_err());
    }

    #[test]
    fn document_round_trip_is_lossless() {
        let scene = generate_scene(25, 5, 5.0, &mut seeded(21)).unwrap();
        let noise = NoiseParams::new(0.1, 0.1).unwrap();
        let measured = measure_distances(&scene, &noise, &mut seeded(22)).unwrap();
        let doc = SceneDocument::new(&scene, &measured, noise, Some(21));
        let text = doc.to_json().unwrap();
        let back = SceneDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        let (scene2, measured2) = back.into_parts().unwrap();
        assert_eq!(scene2, scene);
        assert_eq!(measured2, measured);
    }

    #[test]
    fn redaction_keeps_anchors() {
        let scene = generate_scene(10, 3, 5.0, &mut seeded(1)).unwrap();
        let redacted = scene.redact_agents(0.0).unwrap();
        assert_eq!(redacted.anchor_positions(), scene.anchor_positions());
        assert!(redacted.agent_positions().iter().all(|&c| c == 0.0));
    }
}
