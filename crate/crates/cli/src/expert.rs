//! Scripted expert demonstrations in the point-mass environment, used to
//! seed the synthesis pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use progrl_core::harness::{HarnessTask, PointMassEnv, OBJECT_KEY};
use progrl_core::types::TrajectoryKind;
use progrl_core::{EnvState, Frame, Trajectory};

/// Proportional controller toward the current subgoal. Reach heads for the
/// object; push and pick approach first and then transport.
fn expert_action(env: &PointMassEnv, state: &EnvState) -> Vec<f64> {
    let obj = &state.object_pos[OBJECT_KEY];
    let near = progrl_core::num::distance(&state.gripper_pos, obj) <= env.contact_radius * 0.8;
    let target: Vec<f64> = match env.task {
        HarnessTask::Reach => obj.clone(),
        HarnessTask::Push | HarnessTask::Pick => {
            if near {
                // Transport: steer the object (and the attached gripper)
                // toward the goal marker.
                (0..env.dim)
                    .map(|i| state.gripper_pos[i] + (state.goal_pos[i] - obj[i]))
                    .collect()
            } else {
                obj.clone()
            }
        }
    };
    let mut action: Vec<f64> = (0..env.dim)
        .map(|i| ((target[i] - state.gripper_pos[i]) / env.action_scale).clamp(-1.0, 1.0))
        .collect();
    let close = matches!(env.task, HarnessTask::Pick) && near;
    action.push(if close { -1.0 } else { 1.0 });
    action
}

/// One scripted demonstration: states, actions, and derived frames.
pub fn expert_trajectory(env: &PointMassEnv, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(&mut rng);
    let mut states = vec![state.clone()];
    let mut actions = Vec::with_capacity(env.horizon);
    for _ in 0..env.horizon {
        let action = expert_action(env, &state);
        let (next, _, _) = env.step_full(&state, &action);
        actions.push(action);
        states.push(next.clone());
        state = next;
    }
    let frames = states
        .iter()
        .map(|s| Frame::new(s.features(), None))
        .collect();
    Trajectory {
        goal: env.goal(),
        kind: TrajectoryKind::Expert,
        frames,
        states: Some(states),
        actions: Some(actions),
    }
}

/// A batch of demonstrations with per-trajectory derived seeds.
pub fn expert_batch(env: &PointMassEnv, count: usize, seed: u64) -> Vec<Trajectory> {
    (0..count)
        .map(|i| expert_trajectory(env, seed.wrapping_add(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reach_expert_succeeds() {
        let env = PointMassEnv::new(HarnessTask::Reach, 2);
        for seed in 0..20 {
            let traj = expert_trajectory(&env, seed);
            let last = traj.states.as_ref().unwrap().last().unwrap();
            assert!(env.success(last), "seed {seed} did not reach the object");
        }
    }

    #[test]
    fn pick_expert_mostly_succeeds() {
        let env = PointMassEnv::new(HarnessTask::Pick, 2);
        let ok = (0..20)
            .filter(|&seed| {
                let traj = expert_trajectory(&env, seed);
                traj.states
                    .as_ref()
                    .unwrap()
                    .iter()
                    .any(|s| env.success(s))
            })
            .count();
        assert!(ok >= 15, "only {ok}/20 pick demonstrations succeeded");
    }
}
