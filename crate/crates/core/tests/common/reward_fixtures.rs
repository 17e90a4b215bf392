use gridresponder::env::*;
use gridresponder::grid::*;

pub fn unit_weights() -> RewardWeights {
    RewardWeights { w_cap: 1.0, w_reg: 1.0, w_dis: 1.0, w_soc: 1.0, w_power: 1.0, ..RewardWeights::default() }
}

pub fn state_of(net: &PowerNetwork, vm: Vec<f64>) -> GridState {
    let env = VoltVarEnv::new(net.clone(), Scenario::Normal, EnvConfig::default()).unwrap();
    let mut s = env.state().clone();
    s.voltages = vm;
    s.capacitors = net.capacitors.iter().map(|c| c.on as u8).collect();
    s.taps = net.transformers.iter().map(|t| t.tap).collect();
    s.soc = vec![0.5; net.batteries.len()];
    s.battery_power = vec![0.0; net.batteries.len()];
    s
}

pub fn solution(vm: Vec<f64>, loss: f64, total: f64) -> PowerFlowSolution {
    let n = vm.len();
    PowerFlowSolution {
        vm,
        va: vec![0.0; n],
        branch_current: vec![],
        branch_p_mw: vec![],
        branch_s_mva: vec![],
        bus_p_mw: vec![0.0; n],
        bus_q_mvar: vec![0.0; n],
        p_loss_mw: loss,
        p_total_mw: total,
        converged: true,
        iterations: 1,
        max_mismatch: 0.0,
        q_limited: vec![],
    }
}
