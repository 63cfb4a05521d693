//! Minibatch objective over the three networks.
//!
//! One pass evaluates the backbone loss (policy surrogate, value error,
//! entropy bonus) together with the advisor and ask terms, so each network
//! runs a single forward and backward per minibatch.

use ndarray::Array2;

use super::buffer::RolloutBuffer;
use super::Nets;
use crate::ask::MetaAction;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, log_softmax_rows, Grads};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyObjective {
    /// `−log p · A`.
    Vanilla,
    /// `−min(ρA, clip(ρ, 1−c, 1+c)A)` with ρ the joint probability ratio.
    Clipped { clip: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub objective: PolicyObjective,
    pub vf_coef: f64,
    pub ent_coef: f64,
    /// Scales the whole backbone loss; 0 turns it off.
    pub org_coef: f64,
    pub adv_coef: f64,
    /// Weight of each labelled step in the advisor term, `1/|D|` for a full-set mean.
    pub adv_member_weight: f64,
    pub ask_coef: f64,
    /// Weight of each unstable step in the ask term.
    pub ask_member_weight: f64,
}

impl LossSpec {
    pub fn backbone(objective: PolicyObjective, vf_coef: f64, ent_coef: f64) -> Self {
        Self {
            objective,
            vf_coef,
            ent_coef,
            org_coef: 1.0,
            adv_coef: 0.0,
            adv_member_weight: 0.0,
            ask_coef: 0.0,
            ask_member_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub advisor: f64,
    pub ask: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub actor: Grads,
    pub critic: Grads,
    pub requester: Grads,
}

impl NetGrads {
    pub fn zeros(nets: &Nets) -> Self {
        Self {
            actor: Grads::zeros_like(&nets.actor),
            critic: Grads::zeros_like(&nets.critic),
            requester: Grads::zeros_like(&nets.requester),
        }
    }

    pub fn add_scaled(&mut self, other: &NetGrads, factor: f64) {
        self.actor.add_scaled(&other.actor, factor);
        self.critic.add_scaled(&other.critic, factor);
        self.requester.add_scaled(&other.requester, factor);
    }

    /// Clips the global norm taken jointly over all three networks.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        clip_grad_norm(&mut [&mut self.actor, &mut self.critic, &mut self.requester], max_norm)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.actor.to_flat();
        v.extend(self.critic.values());
        v.extend(self.requester.values());
        v
    }
}

/// Loss and gradients over the steps `indices` of `buffer`.
///
/// `advantages` is indexed like the buffer (already normalized if wanted).
/// Critic targets are `buffer.returns`; advisor labels come from
/// `buffer.labels`, unstable flags from `buffer.unstable`.
pub fn evaluate(
    nets: &Nets,
    buffer: &RolloutBuffer,
    indices: &[usize],
    advantages: &[f64],
    spec: &LossSpec,
) -> Result<(LossStats, NetGrads)> {
    if indices.is_empty() {
        return Err(Error::Contract("empty minibatch".into()));
    }
    let x = buffer.gather(indices);
    let actor_trace = nets.actor.forward_batch(x.view())?;
    let critic_trace = nets.critic.forward_batch(x.view())?;
    let req = buffer.uses_requester;
    let req_trace = if req {
        Some(nets.requester.forward_batch(x.view())?)
    } else {
        None
    };
    let logp = log_softmax_rows(actor_trace.output().view());
    let meta_logp = req_trace.as_ref().map(|t| log_softmax_rows(t.output().view()));

    let b = indices.len();
    let n = b as f64;
    let na = nets.num_actions();
    let mut d_actor = Array2::zeros((b, na));
    let mut d_critic = Array2::zeros((b, 1));
    let mut d_req = Array2::zeros((b, MetaAction::COUNT));
    let mut stats = LossStats::default();
    let org = spec.org_coef;

    for (j, &i) in indices.iter().enumerate() {
        let exec = buffer.meta[i] == MetaAction::Exec;
        let y = buffer.meta[i].index();
        let a = buffer.actions[i];
        let lp = logp.row(j);
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();

        // policy term through the joint log-probability
        let mut new_lp = 0.0;
        if let Some(m) = &meta_logp {
            new_lp += m[[j, y]];
        }
        if exec {
            new_lp += lp[a];
        }
        let adv = advantages[i];
        let g = match spec.objective {
            PolicyObjective::Vanilla => {
                stats.policy -= new_lp * adv / n;
                -adv / n
            }
            PolicyObjective::Clipped { clip } => {
                let log_ratio = new_lp - buffer.old_logp(i);
                let ratio = log_ratio.exp();
                let unclipped = ratio * adv;
                let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
                stats.policy -= unclipped.min(clipped) / n;
                stats.approx_kl += ((ratio - 1.0) - log_ratio) / n;
                if (ratio - 1.0).abs() > clip {
                    stats.clip_fraction += 1.0 / n;
                }
                if unclipped <= clipped {
                    -unclipped / n
                } else {
                    0.0
                }
            }
        } * org;
        if g != 0.0 {
            if let Some(m) = &meta_logp {
                for k in 0..MetaAction::COUNT {
                    d_req[[j, k]] += g * ((k == y) as u8 as f64 - m[[j, k]].exp());
                }
            }
            if exec {
                for k in 0..na {
                    d_actor[[j, k]] += g * ((k == a) as u8 as f64 - p[k]);
                }
            }
        }

        // value term
        let v = critic_trace.output()[[j, 0]];
        let diff = v - buffer.returns[i];
        stats.value += diff * diff / n;
        d_critic[[j, 0]] += org * spec.vf_coef * 2.0 * diff / n;

        // entropy bonus
        let h: f64 = -p.iter().zip(lp.iter()).map(|(pk, lk)| pk * lk).sum::<f64>();
        stats.entropy += h / n;
        if spec.ent_coef != 0.0 {
            for k in 0..na {
                d_actor[[j, k]] += org * spec.ent_coef * p[k] * (lp[k] + h) / n;
            }
        }

        // advisor term: imitate the label, and stop asking here
        if let Some(label) = buffer.labels[i] {
            let w = spec.adv_member_weight;
            stats.advisor += w * -lp[label];
            let wa = w * spec.adv_coef;
            for k in 0..na {
                d_actor[[j, k]] += wa * (p[k] - (k == label) as u8 as f64);
            }
            if let Some(m) = &meta_logp {
                let exec_i = MetaAction::Exec.index();
                stats.advisor += w * -m[[j, exec_i]];
                for k in 0..MetaAction::COUNT {
                    d_req[[j, k]] += wa * (m[[j, k]].exp() - (k == exec_i) as u8 as f64);
                }
            }
        }

        // ask term on unstable states
        if buffer.unstable[i] {
            if let Some(m) = &meta_logp {
                let w = spec.ask_member_weight;
                let ask_i = MetaAction::Ask.index();
                stats.ask += w * -m[[j, ask_i]];
                let wa = w * spec.ask_coef;
                for k in 0..MetaAction::COUNT {
                    d_req[[j, k]] += wa * (m[[j, k]].exp() - (k == ask_i) as u8 as f64);
                }
            }
        }
    }

    stats.total = org * (stats.policy + spec.vf_coef * stats.value - spec.ent_coef * stats.entropy)
        + spec.adv_coef * stats.advisor
        + spec.ask_coef * stats.ask;
    if !stats.total.is_finite() {
        return Err(Error::Numeric(format!("loss diverged: {stats:?}")));
    }
    let grads = NetGrads {
        actor: nets.actor.backward(&actor_trace, &d_actor),
        critic: nets.critic.backward(&critic_trace, &d_critic),
        requester: match &req_trace {
            Some(t) => nets.requester.backward(t, &d_req),
            None => Grads::zeros_like(&nets.requester),
        },
    };
    Ok((stats, grads))
}

/// Full-batch vanilla policy-gradient loss on the buffer's own advantages.
pub fn a2c_loss(nets: &Nets, buffer: &RolloutBuffer, vf_coef: f64, ent_coef: f64) -> Result<(LossStats, NetGrads)> {
    let all: Vec<usize> = (0..buffer.len()).collect();
    evaluate(
        nets,
        buffer,
        &all,
        &buffer.advantages,
        &LossSpec::backbone(PolicyObjective::Vanilla, vf_coef, ent_coef),
    )
}

/// Clipped-surrogate loss on one minibatch.
pub fn ppo_loss(
    nets: &Nets,
    buffer: &RolloutBuffer,
    indices: &[usize],
    advantages: &[f64],
    clip: f64,
    vf_coef: f64,
    ent_coef: f64,
) -> Result<(LossStats, NetGrads)> {
    evaluate(
        nets,
        buffer,
        indices,
        advantages,
        &LossSpec::backbone(PolicyObjective::Clipped { clip }, vf_coef, ent_coef),
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::agent::Transition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_nets(seed: u64) -> Nets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets = Nets::new(3, 3, &[5, 4], &mut rng).unwrap();
        // larger output layers so the heads are far from uniform
        for net in [&mut nets.actor, &mut nets.requester] {
            let last = net.layers_mut().last_mut().unwrap();
            last.weight.mapv_inplace(|w| w * 80.0);
        }
        nets
    }

    /// Five steps mixing ask and exec, labels and unstable flags.
    pub(crate) fn toy_buffer(nets: &Nets, seed: u64, uses_requester: bool) -> RolloutBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = RolloutBuffer::new(3, uses_requester);
        let metas = [MetaAction::Exec, MetaAction::Ask, MetaAction::Exec, MetaAction::Ask, MetaAction::Exec];
        for (t, &meta) in metas.iter().enumerate() {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let action = rng.random_range(0..3);
            let pi = nets.policy(&obs).unwrap();
            let g = nets.meta_policy(&obs).unwrap();
            b.push(Transition {
                label: (meta == MetaAction::Ask).then_some(action),
                logp_meta: g.prob(meta.index()).ln() + rng.random_range(-0.4..0.4),
                logp_action: pi.prob(action).ln() + rng.random_range(-0.4..0.4),
                observation: obs,
                meta,
                action,
                reward: rng.random_range(-1.0..1.0),
                terminated: t == 2,
                truncated: false,
                value: rng.random_range(-1.0..1.0),
                next_value: rng.random_range(-1.0..1.0),
            })
            .unwrap();
        }
        b.finish(0.9, 0.8).unwrap();
        b.unstable = vec![true, false, true, true, false];
        b
    }

    /// Central differences of `f` with respect to every parameter of every net.
    pub(crate) fn numeric_grads(nets: &Nets, f: impl Fn(&Nets) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut out = Vec::new();
        for which in 0..3 {
            let base = match which {
                0 => nets.actor.flat_params(),
                1 => nets.critic.flat_params(),
                _ => nets.requester.flat_params(),
            };
            for k in 0..base.len() {
                let eval = |delta: f64| {
                    let mut p = base.clone();
                    p[k] += delta;
                    let mut n = nets.clone();
                    match which {
                        0 => n.actor.set_flat_params(&p).unwrap(),
                        1 => n.critic.set_flat_params(&p).unwrap(),
                        _ => n.requester.set_flat_params(&p).unwrap(),
                    }
                    f(&n)
                };
                out.push((eval(h) - eval(-h)) / (2.0 * h));
            }
        }
        out
    }

    pub(crate) fn assert_grads_close(analytic: &[f64], numeric: &[f64]) {
        assert_eq!(analytic.len(), numeric.len());
        let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(scale > 1e-6, "gradient vanished, test is vacuous");
        for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let err = (a - n).abs();
            assert!(
                err <= 1e-4 * a.abs().max(n.abs()) || err < 1e-8,
                "param {k}: analytic {a} numeric {n}"
            );
        }
    }

    fn full_spec(objective: PolicyObjective) -> LossSpec {
        LossSpec {
            objective,
            vf_coef: 0.5,
            ent_coef: 0.01,
            org_coef: 1.0,
            adv_coef: 1.0,
            adv_member_weight: 0.5,
            ask_coef: 0.5,
            ask_member_weight: 1.0 / 3.0,
        }
    }

    #[test]
    fn vanilla_objective_matches_finite_differences() {
        let nets = toy_nets(1);
        let buf = toy_buffer(&nets, 2, true);
        let all: Vec<usize> = (0..5).collect();
        let spec = full_spec(PolicyObjective::Vanilla);
        let (_, g) = evaluate(&nets, &buf, &all, &buf.advantages, &spec).unwrap();
        let num = numeric_grads(&nets, |n| evaluate(n, &buf, &all, &buf.advantages, &spec).unwrap().0.total);
        assert_grads_close(&g.to_flat(), &num);
    }

    #[test]
    fn clipped_objective_matches_finite_differences() {
        let nets = toy_nets(3);
        let buf = toy_buffer(&nets, 4, true);
        let idx = [4, 0, 1, 3];
        let adv = crate::agent::normalize(&buf.advantages);
        let spec = full_spec(PolicyObjective::Clipped { clip: 0.2 });
        let (stats, g) = evaluate(&nets, &buf, &idx, &adv, &spec).unwrap();
        assert!(stats.clip_fraction > 0.0 && stats.clip_fraction < 1.0, "both branches exercised");
        let num = numeric_grads(&nets, |n| evaluate(n, &buf, &idx, &adv, &spec).unwrap().0.total);
        assert_grads_close(&g.to_flat(), &num);
    }

    #[test]
    fn backbone_only_without_requester_matches_finite_differences() {
        let nets = toy_nets(5);
        let buf = toy_buffer(&nets, 6, false);
        let (_, g) = a2c_loss(&nets, &buf, 0.5, 0.0).unwrap();
        assert!(g.requester.values().all(|v| v == 0.0));
        let num = numeric_grads(&nets, |n| a2c_loss(n, &buf, 0.5, 0.0).unwrap().0.total);
        assert_grads_close(&g.to_flat(), &num);
    }

    #[test]
    fn zero_advantages_give_zero_policy_term() {
        let nets = toy_nets(7);
        let mut buf = toy_buffer(&nets, 8, true);
        buf.advantages = vec![0.0; 5];
        let (s, _) = a2c_loss(&nets, &buf, 0.5, 0.0).unwrap();
        assert_eq!(s.policy, 0.0);
    }

    #[test]
    fn exact_critic_gives_zero_value_term() {
        let nets = toy_nets(9);
        let mut buf = toy_buffer(&nets, 10, true);
        buf.returns = (0..5).map(|i| nets.value(buf.observation(i)).unwrap()).collect();
        let (s, g) = a2c_loss(&nets, &buf, 0.5, 0.0).unwrap();
        assert!(s.value < 1e-30);
        assert!(g.critic.values().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn unchanged_policy_has_unit_ratio() {
        let nets = toy_nets(11);
        let mut buf = toy_buffer(&nets, 12, true);
        for i in 0..5 {
            let obs = buf.observation(i).to_vec();
            buf.logp_meta[i] = nets.meta_policy(&obs).unwrap().prob(buf.meta[i].index()).ln();
            buf.logp_action[i] = nets.policy(&obs).unwrap().prob(buf.actions[i]).ln();
        }
        let adv = crate::agent::normalize(&buf.advantages);
        let all: Vec<usize> = (0..5).collect();
        let (s, _) = ppo_loss(&nets, &buf, &all, &adv, 0.2, 0.5, 0.0).unwrap();
        let mean_adv = adv.iter().sum::<f64>() / 5.0;
        assert!((s.policy + mean_adv).abs() < 1e-12);
        assert!(s.policy.abs() < 1e-9);
        assert!(s.approx_kl.abs() < 1e-15);
        assert_eq!(s.clip_fraction, 0.0);
    }

    #[test]
    fn ratio_two_is_clipped_to_one_point_two() {
        let nets = toy_nets(13);
        let mut buf = toy_buffer(&nets, 14, true);
        let obs = buf.observation(0).to_vec();
        let new_lp = nets.meta_policy(&obs).unwrap().prob(buf.meta[0].index()).ln()
            + nets.policy(&obs).unwrap().prob(buf.actions[0]).ln();
        buf.logp_meta[0] = new_lp - 2f64.ln();
        buf.logp_action[0] = 0.0;
        let adv = [1.0, 0.0, 0.0, 0.0, 0.0];
        let (s, g) = ppo_loss(&nets, &buf, &[0], &adv, 0.2, 0.0, 0.0).unwrap();
        assert!((s.policy + 1.2).abs() < 1e-12);
        assert!(g.actor.values().all(|v| v == 0.0), "clipped branch carries no gradient");
    }

    #[test]
    fn asked_steps_give_the_actor_no_policy_gradient() {
        let nets = toy_nets(15);
        let buf = toy_buffer(&nets, 16, true);
        let (_, g) = evaluate(
            &nets,
            &buf,
            &[1, 3],
            &buf.advantages,
            &LossSpec::backbone(PolicyObjective::Vanilla, 0.0, 0.0),
        )
        .unwrap();
        assert!(g.actor.values().all(|v| v == 0.0));
        assert!(g.requester.values().any(|v| v != 0.0));
    }

    #[test]
    fn joint_clipping_uses_the_global_norm() {
        let nets = toy_nets(17);
        let buf = toy_buffer(&nets, 18, true);
        let (_, mut g) = a2c_loss(&nets, &buf, 0.5, 0.0).unwrap();
        let before = g.to_flat();
        let norm: f64 = before.iter().map(|v| v * v).sum::<f64>().sqrt();
        let reported = g.clip(0.01);
        assert!((reported - norm).abs() < 1e-12);
        let after_norm: f64 = g.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((after_norm - 0.01).abs() < 1e-12);
        for (a, b) in g.to_flat().iter().zip(&before) {
            assert!((a - b * 0.01 / norm).abs() < 1e-15);
        }
    }
}
