//! Space-filling designs on the unit cube.

use rand::seq::SliceRandom;
use rand::Rng;

/// `n` points in `[0, 1)^dims`; in every dimension each stratum
/// `[k/n, (k+1)/n)` holds exactly one point.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        strata.shuffle(rng);
        for (point, &k) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.gen();
            // keep strictly below the upper stratum edge
            point[d] = ((k as f64 + u) / n as f64).min((k + 1) as f64 / n as f64 - f64::EPSILON);
        }
    }
    points
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base as u64) as f64;
        i /= base as u64;
        f /= b;
    }
    r
}

/// Halton sequence with a random Cranley-Patterson shift. Dimensions beyond
/// the sixteenth fall back to uniform draws.
pub fn shifted_halton<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen()).collect();
    (0..n)
        .map(|i| {
            (0..dims)
                .map(|d| match PRIMES.get(d) {
                    Some(&p) => (radical_inverse(i as u64 + 1, p) + shift[d]).fract(),
                    None => rng.gen(),
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_lies_in_unit_cube() {
        let pts = latin_hypercube(1, 9, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(pts.len(), 1);
        assert!(pts[0].iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn every_stratum_is_hit_once() {
        let pts = latin_hypercube(10, 9, &mut ChaCha8Rng::seed_from_u64(2));
        for d in 0..9 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * 10.0).floor() as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn designs_are_seeded() {
        let a = latin_hypercube(10, 9, &mut ChaCha8Rng::seed_from_u64(3));
        let b = latin_hypercube(10, 9, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let h1 = shifted_halton(64, 9, &mut ChaCha8Rng::seed_from_u64(4));
        let h2 = shifted_halton(64, 9, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(h1, h2);
    }

    #[test]
    fn radical_inverse_base_two() {
        let got: Vec<f64> = (1..=4).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(got, vec![0.5, 0.25, 0.75, 0.125]);
    }
}
