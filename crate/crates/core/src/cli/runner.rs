//! Expands a manifest into sweep cells and runs each cell's check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::manifest::{Check, JobSpec, Manifest, SweepPoint};
use crate::agents::{m_based_policy, noisy_policy, BetTable};
use crate::environments::{EvaluationDistribution, FinitePomdp, History};
use crate::error::{LabError, Result};
use crate::estimators::select_basis_histories;
use crate::goals::probability_table;
use crate::verifier::{
    verify_cor1, verify_cor1_adversarial, verify_cor2, verify_cor3, verify_cor4, verify_cor5, verify_prop1,
    verify_thm1, verify_thm4, verify_thm5, verify_thm6, verify_thm7, verify_thm7_table, BoundReport,
};

/// Reports of one sweep point of one job.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub job: usize,
    pub cell: usize,
    pub check: Check,
    pub seed: u64,
    pub point: SweepPoint,
    pub reports: Vec<BoundReport>,
}

fn pomdp_and_eval(job: &JobSpec, seed: u64) -> Result<(FinitePomdp, EvaluationDistribution)> {
    let pomdp = environment(job, seed)?.into_pomdp()?;
    let spec = job
        .evaluation
        .as_ref()
        .ok_or_else(|| LabError::Config(format!("{:?} needs an evaluation", job.check)))?;
    let eval = spec.build(&pomdp)?;
    Ok((pomdp, eval))
}

fn environment(job: &JobSpec, seed: u64) -> Result<crate::environments::Environment> {
    job.environment
        .as_ref()
        .ok_or_else(|| LabError::Config(format!("{:?} needs an environment", job.check)))?
        .build(seed)
}

fn uses_policy_noise(check: Check) -> bool {
    matches!(check, Check::Thm1 | Check::Cor1 | Check::Thm4 | Check::Thm5 | Check::Thm6 | Check::Thm7)
}

/// Runs one check at one sweep point.
pub fn run_cell(job: &JobSpec, point: &SweepPoint, seed: u64, cell: usize) -> Result<Vec<BoundReport>> {
    let policy = job.policy.build(point.epsilon)?;
    let mut reports = match job.check {
        Check::Thm1 => {
            let mdp = environment(job, seed)?.into_mdp()?;
            vec![verify_thm1(&mdp, &policy, point.n, point.gamma)?]
        }
        Check::Cor1 => {
            let mdp = environment(job, seed)?.into_mdp()?;
            if job.params.adversarial {
                vec![verify_cor1_adversarial(&mdp, &policy, point.n, point.gamma, point.eps_cmp)?]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(cell as u64));
                vec![verify_cor1(&mdp, &policy, point.n, point.gamma, point.eps_cmp, &mut rng)?]
            }
        }
        Check::Cor2 => vec![verify_cor2()?],
        Check::Prop1 => {
            let p = job.params.p.unwrap_or(0.7);
            let q = job.params.q.unwrap_or(0.6);
            vec![verify_prop1(p, q, job.params.depth.unwrap_or(3))?]
        }
        Check::Thm4 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            verify_thm4(&pomdp, &policy, &eval, point.gamma)?
        }
        Check::Thm5 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            vec![verify_thm5(&pomdp, &policy, &eval, point.k)?]
        }
        Check::Thm6 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            let tests = eval.test_list();
            let basis: Vec<History> = match &job.params.basis {
                Some(list) => list
                    .iter()
                    .map(|h| History::new(h.observations.clone(), h.actions.clone()))
                    .collect::<Result<_>>()?,
                None => {
                    let candidates: Vec<History> = eval.histories.iter().map(|h| h.0.clone()).collect();
                    select_basis_histories(&pomdp, &tests, &candidates)?
                        .into_iter()
                        .map(|i| candidates[i].clone())
                        .collect()
                }
            };
            verify_thm6(&pomdp, &tests, &basis, &policy, point.k)?
        }
        Check::Thm7 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            let memory = memory_for(job, &eval, seed)?;
            if point.epsilon == 0.0 {
                vec![verify_thm7(&pomdp, &memory, job.resolver, &eval, point.gamma)?]
            } else {
                let histories: Vec<History> = eval.histories.iter().map(|h| h.0.clone()).collect();
                let probs = probability_table(&pomdp, &histories, &eval.test_list())?;
                let table = BetTable::fair(&eval, &probs);
                let base = m_based_policy(memory.clone(), job.resolver, &table)?;
                let noisy = noisy_policy(point.epsilon, base)?;
                vec![verify_thm7_table(&eval, &probs, &memory, &noisy, point.gamma)?]
            }
        }
        Check::Cor3 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            let memory = memory_for(job, &eval, seed)?;
            let blocks = job
                .evaluation
                .as_ref()
                .and_then(|e| e.blocks.clone())
                .ok_or_else(|| LabError::Config("the per-block check needs evaluation.blocks".into()))?;
            verify_cor3(&pomdp, &memory, job.resolver, &eval, &blocks, point.gamma)?
        }
        Check::Cor4 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            let memory = memory_for(job, &eval, seed)?;
            vec![verify_cor4(&pomdp, &memory, job.resolver, &eval, point.gamma)?]
        }
        Check::Cor5 => {
            let (pomdp, eval) = pomdp_and_eval(job, seed)?;
            vec![verify_cor5(&pomdp, &eval, point.gamma, seed)?]
        }
    };
    for r in &mut reports {
        r.inputs.seed = Some(seed);
        if r.inputs.epsilon.is_none() && uses_policy_noise(job.check) {
            r.inputs.epsilon = Some(point.epsilon);
        }
    }
    Ok(reports)
}

fn memory_for(job: &JobSpec, eval: &EvaluationDistribution, seed: u64) -> Result<crate::agents::MemoryMap> {
    job.memory
        .as_ref()
        .ok_or_else(|| LabError::Config(format!("{:?} needs a memory map", job.check)))?
        .build(eval, seed)
}

/// Runs every sweep cell of every job; results come back in job then cell
/// order regardless of scheduling.
pub fn execute(manifest: &Manifest) -> Result<Vec<CellResult>> {
    let mut tasks = Vec::new();
    for (j, job) in manifest.jobs.iter().enumerate() {
        let seed = job.params.seed.unwrap_or(manifest.seed);
        let points = match job.check {
            Check::Cor2 | Check::Prop1 => job.sweep.points().into_iter().take(1).collect(),
            _ => job.sweep.points(),
        };
        for (c, point) in points.into_iter().enumerate() {
            tasks.push((j, c, seed, point));
        }
    }
    tasks
        .par_iter()
        .map(|&(j, c, seed, point)| {
            let job = &manifest.jobs[j];
            let reports = run_cell(job, &point, seed, c)
                .map_err(|e| LabError::Config(format!("job {j} ({:?}) cell {c}: {e}", job.check)))?;
            Ok(CellResult {
                job: j,
                cell: c,
                check: job.check,
                seed,
                point,
                reports,
            })
        })
        .collect()
}
