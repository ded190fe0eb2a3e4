//! Seeded synthetic problem sets for exercising the pipeline without data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Dataset, DatasetError, Problem};
use crate::reformulate::{build_all, ReformulateError};

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{problem_id}: {source}")]
    Reformulate {
        problem_id: String,
        #[source]
        source: ReformulateError,
    },
}

/// `n` problems with numeric golds: mostly multi-digit integers, every fifth
/// a fraction.
pub fn synthetic_problems(n: usize, seed: u64) -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gold = if i % 5 == 4 {
                let den = rng.gen_range(3..10u32);
                let mut num = rng.gen_range(11..100u32);
                while num % den == 0 || gcd(num, den) != 1 {
                    num += 1;
                }
                format!("\\frac{{{num}}}{{{den}}}")
            } else {
                rng.gen_range(10..10_000u32).to_string()
            };
            Problem {
                id: format!("syn-{i:04}"),
                question: format!("Synthetic problem {i}: compute the quantity whose value is hidden by seed {seed}."),
                gold_answer: gold,
                source: Some("synthetic".into()),
                pass_rate_prior: None,
            }
        })
        .collect()
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Synthetic problems with all four variants attached; optionally every
/// problem flagged hard.
pub fn synthetic_dataset(n: usize, seed: u64, all_hard: bool) -> Result<Dataset, SyntheticError> {
    let problems = synthetic_problems(n, seed);
    let mut dataset = Dataset::from_problems(problems.clone())?;
    attach_built_variants(&mut dataset, seed)?;
    if all_hard {
        for p in &problems {
            dataset.set_hard(&p.id, true)?;
        }
    }
    Ok(dataset)
}

/// Build and attach deterministic variants for every problem in `dataset`.
pub fn attach_built_variants(dataset: &mut Dataset, seed: u64) -> Result<(), SyntheticError> {
    let problems = dataset.problems().to_vec();
    for p in &problems {
        let variants = build_all(p, seed).map_err(|source| SyntheticError::Reformulate {
            problem_id: p.id.clone(),
            source,
        })?;
        for v in variants {
            dataset.attach_variant(v)?;
        }
    }
    Ok(())
}
