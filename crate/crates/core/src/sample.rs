//! Seeded random words and ≈-related store pairs.

use rand::Rng;

use crate::syntax::{Store, Tier, Var};
use crate::typing::VarTypeEnv;
use crate::word::{Alphabet, Word};

#[derive(Clone, Debug)]
pub struct StoreSampler {
    pub sigma: Alphabet,
    pub max_len: usize,
    /// Probability of drawing `tt` or `ff` instead of a word over Σ.
    pub truth_prob: f64,
}

impl StoreSampler {
    pub fn new(sigma: Alphabet, max_len: usize) -> Self {
        StoreSampler {
            sigma,
            max_len,
            truth_prob: 0.25,
        }
    }

    pub fn word(&self, rng: &mut impl Rng) -> Word {
        if rng.gen_bool(self.truth_prob) {
            return Word::from_bool(rng.gen_bool(0.5));
        }
        let letters: Vec<u8> = self.sigma.user_letters().collect();
        let len = rng.gen_range(0..=self.max_len);
        Word::from_letters(
            (0..len)
                .map(|_| letters[rng.gen_range(0..letters.len())])
                .collect::<Vec<u8>>(),
        )
    }

    pub fn store(&self, rng: &mut impl Rng, vars: &[Var]) -> Store {
        vars.iter().map(|x| (x.clone(), self.word(rng))).collect()
    }

    /// Two stores equal on the tier-1 variables of `gamma`, with tier-0
    /// variables drawn independently (redrawn a few times to make them
    /// differ when possible).
    pub fn pair(&self, rng: &mut impl Rng, gamma: &VarTypeEnv) -> (Store, Store) {
        let mut a = Store::new();
        let mut b = Store::new();
        for (x, &t) in gamma {
            let u = self.word(rng);
            let v = match t {
                Tier::One => u.clone(),
                Tier::Zero => {
                    let mut v = self.word(rng);
                    for _ in 0..8 {
                        if v != u {
                            break;
                        }
                        v = self.word(rng);
                    }
                    v
                }
            };
            a.set(x.clone(), u);
            b.set(x.clone(), v);
        }
        (a, b)
    }
}

/// `σ↾1`
pub fn tier1_projection(s: &Store, gamma: &VarTypeEnv) -> Store {
    s.restrict(gamma.iter().filter(|(_, &t)| t == Tier::One).map(|(x, _)| x))
}

/// `σ ≈ σ'`: equality on tier-1 variables.
pub fn store_equiv(a: &Store, b: &Store, gamma: &VarTypeEnv) -> bool {
    gamma
        .iter()
        .filter(|(_, &t)| t == Tier::One)
        .all(|(x, _)| a.get(x.as_str()) == b.get(x.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairs_are_equivalent() {
        let gamma: VarTypeEnv = [(Var::from("x"), Tier::One), (Var::from("y"), Tier::Zero)].into();
        let s = StoreSampler::new(Alphabet::default(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut differ = 0;
        for _ in 0..200 {
            let (a, b) = s.pair(&mut rng, &gamma);
            assert!(store_equiv(&a, &b, &gamma));
            assert_eq!(tier1_projection(&a, &gamma), tier1_projection(&b, &gamma));
            differ += usize::from(a.get("y") != b.get("y"));
        }
        assert!(differ > 150);
    }

    #[test]
    fn equiv_ignores_tier0() {
        let gamma: VarTypeEnv = [(Var::from("x"), Tier::One), (Var::from("y"), Tier::Zero)].into();
        let a = Store::new().with("x", "1").with("y", "0");
        let b = Store::new().with("x", "1");
        assert!(store_equiv(&a, &b, &gamma));
        assert!(!store_equiv(&a, &Store::new(), &gamma));
    }
}
