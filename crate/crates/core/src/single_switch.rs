//! Single-producer optimal switching on the lattice.
//!
//! One producer controls its own on/off mode while the other sits in a
//! fixed mode for the whole horizon. The value functions of the two
//! modes satisfy the coupled recursion
//!
//! ```text
//!   V_on(t)  = max( psi dt + E^{r(on)}[V_on(t+1)],  -K_off + E^{r(off)}[V_off(t+1)] )
//!   V_off(t) = max(          E^{r(off)}[V_off(t+1)], -K_on + psi dt + E^{r(on)}[V_on(t+1)] )
//! ```
//!
//! where r(m) is the market regime formed by own mode m and the frozen
//! opponent mode, so the allowance drift still reflects who is running.
//! Ties prefer staying. The frozen opponent's own expected payoff along
//! the controlling producer's policy is tracked alongside (they collect
//! their spread whenever their fixed mode is on and never pay switch
//! costs). A switch-budget cascade caps the number of remaining
//! switches: level 0 never switches and level n may spend one switch to
//! drop to level n-1, so levels increase with n and reach the
//! unconstrained solution once n exceeds the stage count.

use rayon::prelude::*;

use crate::error::Error;
use crate::market::{spread, ProducerParams, Regime};
use crate::mca::Lattice;

/// Values, policy, and the frozen opponent's payoff for one producer
/// optimizing against each fixed opponent mode.
#[derive(Clone, Debug)]
pub struct SinglePlayerSolution {
    /// Optimizing producer, 1 or 2.
    pub player: u8,
    pub stages: usize,
    pub nodes: usize,
    /// value[opp][t][mode][node], t in 0..=stages; terminal layer zero.
    pub value: [Vec<[Vec<f64>; 2]>; 2],
    /// switch[opp][t][mode][node], t in 0..stages; true flips the mode.
    pub switch: [Vec<[Vec<bool>; 2]>; 2],
    /// Frozen opponent's expected payoff under the recorded policy.
    pub passive: [Vec<[Vec<f64>; 2]>; 2],
}

impl SinglePlayerSolution {
    pub fn value_at(&self, opp: u8, t: usize, mode: u8, node: usize) -> f64 {
        self.value[opp as usize][t][mode as usize][node]
    }

    pub fn passive_at(&self, opp: u8, t: usize, mode: u8, node: usize) -> f64 {
        self.passive[opp as usize][t][mode as usize][node]
    }
}

/// Market regime formed by the controlling player's mode and the frozen
/// opponent's mode.
fn regime_for(player: u8, own: u8, opp: u8) -> Regime {
    if player == 1 {
        Regime::new(own, opp)
    } else {
        Regime::new(opp, own)
    }
}

struct SingleContext<'a> {
    lat: &'a Lattice,
    player: u8,
    psi_active: Vec<f64>,
    psi_frozen: Vec<f64>,
    k_on: f64,
    k_off: f64,
    dt: f64,
}

impl<'a> SingleContext<'a> {
    fn new(
        lat: &'a Lattice,
        player: u8,
        pp1: &ProducerParams,
        pp2: &ProducerParams,
        cap: f64,
    ) -> Result<Self, Error> {
        if player != 1 && player != 2 {
            return Err(Error::config(format!("player must be 1 or 2, got {player}")));
        }
        let (active, frozen) = if player == 1 { (pp1, pp2) } else { (pp2, pp1) };
        let nodes = lat.node_count();
        let mut psi_active = vec![0.0; nodes];
        let mut psi_frozen = vec![0.0; nodes];
        for node in 0..nodes {
            let (ip, ix) = lat.coords(node);
            let (p, x) = (lat.logp[ip].exp(), lat.logx[ix].exp());
            psi_active[node] = spread(active, p, x, cap);
            psi_frozen[node] = spread(frozen, p, x, cap);
        }
        Ok(SingleContext {
            lat,
            player,
            psi_active,
            psi_frozen,
            k_on: active.switch_cost(0, 1),
            k_off: active.switch_cost(1, 0),
            dt: lat.mp.dt,
        })
    }

    fn switch_cost(&self, mode: u8) -> f64 {
        if mode == 0 {
            self.k_on
        } else {
            self.k_off
        }
    }
}

/// One backward stage for a fixed opponent mode. `next`/`next_passive`
/// hold the stage-t+1 layers per own mode; `fallback` is the layer the
/// switch target draws from (the same solution when unconstrained, the
/// previous cascade level when a budget applies; `None` forbids
/// switching entirely).
#[allow(clippy::type_complexity)]
fn backward_stage(
    ctx: &SingleContext,
    opp: u8,
    next: &[Vec<f64>; 2],
    next_passive: &[Vec<f64>; 2],
    fallback: Option<(&[Vec<f64>; 2], &[Vec<f64>; 2])>,
) -> ([Vec<f64>; 2], [Vec<bool>; 2], [Vec<f64>; 2]) {
    let lat = ctx.lat;
    let nodes = lat.node_count();
    let mut exp_stay: [Vec<f64>; 2] = [vec![0.0; nodes], vec![0.0; nodes]];
    let mut exp_stay_passive: [Vec<f64>; 2] = [vec![0.0; nodes], vec![0.0; nodes]];
    for mode in 0..2u8 {
        let r = regime_for(ctx.player, mode, opp).index();
        lat.expect_into(r, &next[mode as usize], &mut exp_stay[mode as usize]);
        lat.expect_into(r, &next_passive[mode as usize], &mut exp_stay_passive[mode as usize]);
    }
    // Expectations of the switch target layer under the post-switch
    // regime; identical to the stay layers when unconstrained.
    let (exp_to, exp_to_passive) = match fallback {
        None => (None, None),
        Some((fv, fp)) => {
            let mut ev: [Vec<f64>; 2] = [vec![0.0; nodes], vec![0.0; nodes]];
            let mut ep: [Vec<f64>; 2] = [vec![0.0; nodes], vec![0.0; nodes]];
            for mode in 0..2u8 {
                let r = regime_for(ctx.player, mode, opp).index();
                lat.expect_into(r, &fv[mode as usize], &mut ev[mode as usize]);
                lat.expect_into(r, &fp[mode as usize], &mut ep[mode as usize]);
            }
            (Some(ev), Some(ep))
        }
    };
    let mut value: [Vec<f64>; 2] = [vec![0.0; nodes], vec![0.0; nodes]];
    let mut switch: [Vec<bool>; 2] = [vec![false; nodes], vec![false; nodes]];
    let mut passive: [Vec<f64>; 2] = [vec![0.0; nodes], vec![0.0; nodes]];
    for mode in 0..2u8 {
        let m = mode as usize;
        let other = 1 - m;
        let flow_stay: f64 = f64::from(mode) * ctx.dt;
        let flow_switch: f64 = f64::from(1 - mode) * ctx.dt;
        let frozen_on = f64::from(opp) * ctx.dt;
        let (v_m, (s_m, p_m)) = (
            &mut value[m],
            match (&mut switch[..], &mut passive[..]) {
                ([s0, s1], [p0, p1]) => {
                    if m == 0 {
                        (s0, p0)
                    } else {
                        (s1, p1)
                    }
                }
                _ => unreachable!(),
            },
        );
        v_m.par_iter_mut()
            .zip(s_m.par_iter_mut())
            .zip(p_m.par_iter_mut())
            .enumerate()
            .for_each(|(node, ((v, s), pv))| {
                let stay = ctx.psi_active[node] * flow_stay + exp_stay[m][node];
                let moved = match &exp_to {
                    None => f64::NEG_INFINITY,
                    Some(ev) => {
                        -ctx.switch_cost(mode)
                            + ctx.psi_active[node] * flow_switch
                            + ev[other][node]
                    }
                };
                // Ties keep the current mode.
                if moved > stay {
                    *v = moved;
                    *s = true;
                    let ep = exp_to_passive.as_ref().expect("switch target present");
                    *pv = ctx.psi_frozen[node] * frozen_on + ep[other][node];
                } else {
                    *v = stay;
                    *s = false;
                    *pv = ctx.psi_frozen[node] * frozen_on + exp_stay_passive[m][node];
                }
            });
    }
    (value, switch, passive)
}

/// Solves the frozen-opponent switching problem for `player` on the
/// lattice, for both fixed opponent modes.
pub fn solve_single(
    lat: &Lattice,
    player: u8,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
) -> Result<SinglePlayerSolution, Error> {
    let ctx = SingleContext::new(lat, player, pp1, pp2, cap)?;
    let stages = lat.mp.periods;
    let nodes = lat.node_count();
    let zero_layer = || -> [Vec<f64>; 2] { [vec![0.0; nodes], vec![0.0; nodes]] };
    let mut value: [Vec<[Vec<f64>; 2]>; 2] = [Vec::new(), Vec::new()];
    let mut switch: [Vec<[Vec<bool>; 2]>; 2] = [Vec::new(), Vec::new()];
    let mut passive: [Vec<[Vec<f64>; 2]>; 2] = [Vec::new(), Vec::new()];
    for opp in 0..2u8 {
        let o = opp as usize;
        let mut vs = vec![zero_layer(); stages + 1];
        let mut ps = vec![zero_layer(); stages + 1];
        let mut sw = vec![[vec![false; nodes], vec![false; nodes]]; stages];
        for t in (0..stages).rev() {
            let (v, s, p) = backward_stage(
                &ctx,
                opp,
                &vs[t + 1],
                &ps[t + 1],
                Some((&vs[t + 1], &ps[t + 1])),
            );
            vs[t] = v;
            sw[t] = s;
            ps[t] = p;
        }
        value[o] = vs;
        switch[o] = sw;
        passive[o] = ps;
    }
    Ok(SinglePlayerSolution { player, stages, nodes, value, switch, passive })
}

/// Switch-budget cascade: entry n of the result may make at most n more
/// switches. Level 0 never switches; level n's switch branch continues
/// in level n-1.
pub fn solve_single_capped(
    lat: &Lattice,
    player: u8,
    pp1: &ProducerParams,
    pp2: &ProducerParams,
    cap: f64,
    max_switches: usize,
) -> Result<Vec<SinglePlayerSolution>, Error> {
    let ctx = SingleContext::new(lat, player, pp1, pp2, cap)?;
    let stages = lat.mp.periods;
    let nodes = lat.node_count();
    let zero_layer = || -> [Vec<f64>; 2] { [vec![0.0; nodes], vec![0.0; nodes]] };
    let mut levels: Vec<SinglePlayerSolution> = Vec::with_capacity(max_switches + 1);
    for budget in 0..=max_switches {
        let mut value: [Vec<[Vec<f64>; 2]>; 2] = [Vec::new(), Vec::new()];
        let mut switch: [Vec<[Vec<bool>; 2]>; 2] = [Vec::new(), Vec::new()];
        let mut passive: [Vec<[Vec<f64>; 2]>; 2] = [Vec::new(), Vec::new()];
        for opp in 0..2u8 {
            let o = opp as usize;
            let mut vs = vec![zero_layer(); stages + 1];
            let mut ps = vec![zero_layer(); stages + 1];
            let mut sw = vec![[vec![false; nodes], vec![false; nodes]]; stages];
            for t in (0..stages).rev() {
                let fallback = if budget == 0 {
                    None
                } else {
                    Some((&levels[budget - 1].value[o][t + 1], &levels[budget - 1].passive[o][t + 1]))
                };
                let (v, s, p) = backward_stage(&ctx, opp, &vs[t + 1], &ps[t + 1], fallback);
                vs[t] = v;
                sw[t] = s;
                ps[t] = p;
            }
            value[o] = vs;
            switch[o] = sw;
            passive[o] = ps;
        }
        levels.push(SinglePlayerSolution { player, stages, nodes, value, switch, passive });
    }
    Ok(levels)
}
