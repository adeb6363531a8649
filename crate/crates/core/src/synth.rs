//! Synthetic lifelong streams.
//!
//! Every domain draws its own identities from a shared latent Gaussian and
//! maps them to input space with a domain-specific rotation and translation,
//! so an encoder fitted to one domain meets unfamiliar geometry in the next.
//! Each camera adds a fixed offset (its "style") and every sample adds
//! isotropic noise. Identities of a seen domain are split into training
//! identities and held-out test identities; the held-out samples form the
//! query and gallery sets. Unseen domains only have held-out identities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{DatasetDomain, Domain, Sample};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub num_domains: usize,
    pub unseen_domains: usize,
    pub ids_per_domain: usize,
    /// Held out of training for the query/gallery split.
    pub test_ids_per_domain: usize,
    pub samples_per_id: usize,
    pub cameras_per_domain: usize,
    pub d_in: usize,
    /// Latent coordinates that carry identity.
    pub identity_dims: usize,
    /// Standard deviation of identity centres.
    pub identity_spread: f64,
    /// Norm of each camera offset.
    pub camera_shift: f64,
    /// Givens angle (radians) applied to every coordinate pair.
    pub domain_rotation: f64,
    /// Norm of the per-domain translation.
    pub domain_translation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            num_domains: 3,
            unseen_domains: 2,
            ids_per_domain: 30,
            test_ids_per_domain: 10,
            samples_per_id: 12,
            cameras_per_domain: 3,
            d_in: 32,
            identity_dims: 8,
            identity_spread: 1.0,
            camera_shift: 1.0,
            domain_rotation: core::f64::consts::FRAC_PI_2,
            domain_translation: 1.0,
            noise: 0.3,
            seed: 0,
        }
    }
}

/// Seen domains followed by unseen ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub seen: Vec<DatasetDomain>,
    pub unseen: Vec<DatasetDomain>,
}

impl SyntheticStream {
    pub fn train_domains(&self) -> Vec<Domain> {
        self.seen.iter().map(DatasetDomain::train_domain).collect()
    }
}

/// Rotation by `angle` in the planes of a random pairing of coordinates.
struct DomainTransform {
    pairs: Vec<(usize, usize, f64)>,
    translation: Vec<f64>,
}

impl DomainTransform {
    fn draw(spec: &StreamSpec, rng: &mut Rng) -> Self {
        let mut coords: Vec<usize> = (0..spec.d_in).collect();
        rng.shuffle(&mut coords);
        let pairs = coords
            .chunks_exact(2)
            .map(|c| {
                let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
                (c[0], c[1], sign * spec.domain_rotation)
            })
            .collect();
        let mut translation: Vec<f64> = (0..spec.d_in).map(|_| rng.normal()).collect();
        scale_to(&mut translation, spec.domain_translation);
        Self { pairs, translation }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut x = z.to_vec();
        for &(a, b, angle) in &self.pairs {
            let (s, c) = (libm::sin(angle), libm::cos(angle));
            let (xa, xb) = (x[a], x[b]);
            x[a] = c * xa - s * xb;
            x[b] = s * xa + c * xb;
        }
        for (xi, t) in x.iter_mut().zip(&self.translation) {
            *xi += t;
        }
        x
    }
}

fn scale_to(v: &mut [f64], target: f64) {
    let n = crate::linalg::norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= target / n);
    }
}

fn generate_domain(spec: &StreamSpec, index: usize, seen: bool) -> DatasetDomain {
    let mut rng = Rng::new(spec.seed).fork(index as u64 + 1);
    let transform = DomainTransform::draw(spec, &mut rng);
    let cameras = spec.cameras_per_domain.max(1);
    let camera_offsets: Vec<Vec<f64>> = (0..cameras)
        .map(|_| {
            let mut o: Vec<f64> = (0..spec.d_in).map(|_| rng.normal()).collect();
            scale_to(&mut o, spec.camera_shift);
            o
        })
        .collect();

    let num_ids = if seen {
        spec.ids_per_domain
    } else {
        spec.test_ids_per_domain
    };
    let first_test = if seen {
        spec.ids_per_domain.saturating_sub(spec.test_ids_per_domain)
    } else {
        0
    };
    let id_dims = spec.identity_dims.min(spec.d_in);
    let mut samples = Vec::with_capacity(num_ids * spec.samples_per_id);
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    for id in 0..num_ids {
        let mut centre = vec![0.0; spec.d_in];
        for c in centre.iter_mut().take(id_dims) {
            *c = spec.identity_spread * rng.normal();
        }
        let gt = (index * spec.ids_per_domain.max(spec.test_ids_per_domain) + id) as u32;
        let mut cams_seen = vec![false; cameras];
        for k in 0..spec.samples_per_id {
            let cam = k % cameras;
            let z: Vec<f64> = (0..spec.d_in)
                .map(|j| centre[j] + camera_offsets[cam][j] + spec.noise * rng.normal())
                .collect();
            let x = transform.apply(&z);
            let at = samples.len();
            samples.push(Sample::new(
                x.iter().map(|&v| v as f32).collect(),
                index,
                cam,
                Some(gt),
            ));
            if id >= first_test {
                if cams_seen[cam] {
                    gallery.push(at);
                } else {
                    cams_seen[cam] = true;
                    query.push(at);
                }
            }
        }
    }
    let name = if seen {
        format!("seen{index}")
    } else {
        format!("unseen{}", index - spec.num_domains)
    };
    DatasetDomain {
        domain: Domain {
            name,
            samples,
            num_cameras: cameras,
        },
        query,
        gallery,
    }
}

pub fn generate_stream(spec: &StreamSpec) -> SyntheticStream {
    let seen = (0..spec.num_domains)
        .map(|d| generate_domain(spec, d, true))
        .collect();
    let unseen = (0..spec.unseen_domains)
        .map(|u| generate_domain(spec, spec.num_domains + u, false))
        .collect();
    SyntheticStream { seen, unseen }
}
