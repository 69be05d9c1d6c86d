use rand::seq::SliceRandom;
use rand::Rng;

/// Shuffles every column of a row-major `n x d` batch independently.
///
/// Each column of the result is a uniformly random permutation of the same
/// column of the input, which turns samples of the joint latent distribution
/// into samples of the product of its marginals.
pub fn permute_dims<T: Copy, R: Rng + ?Sized>(z: &[T], n: usize, d: usize, rng: &mut R) -> Vec<T> {
    assert_eq!(z.len(), n * d, "latent batch size");
    let mut out = z.to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(rng);
        for (i, &src) in order.iter().enumerate() {
            out[i * d + j] = z[src * d + j];
        }
    }
    out
}
