//! Electrical network model and steady-state power flow.

mod devices;
mod network;
mod powerflow;

pub use devices::{
    apply_device_settings, battery_step, device_keys, ControlAction, DeviceCommand, DeviceKey, CONTROL_PERIOD_H,
};
pub use network::{
    load_case, Battery, BatteryMode, Branch, Bus, BusType, Capacitor, CaseId, CaseSource, Generator, Load,
    PowerNetwork, TapChanger,
};
pub use powerflow::{
    admittance, energized_buses, power_balance_residual, solve_power_flow, solve_power_flow_with, BusModel, PowerFlowOptions,
    PowerFlowSolution,
};
