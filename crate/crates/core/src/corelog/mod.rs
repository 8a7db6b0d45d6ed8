//! Domain types, energy accounting and log preprocessing.
//!
//! Energy follows the usual split: the total energy of a transfer is the base
//! energy the device draws anyway (screen on, idle radio) plus the dynamic
//! energy the transfer adds on top. Dynamic energy is the time integral of
//! the measured power minus base power.

mod energy;
mod log;
mod params;
mod preprocess;

pub use energy::{
    dynamic_energy, dynamic_energy_of, total_energy, EnergyBreakdown, EnergyError, PowerSample,
    PowerTrace,
};
pub use log::{
    parse_jsonl, to_jsonl, DeviceInfo, JsonlBatch, NetInterface, TransferLog, TransferStatus,
    BYTES_PER_100MB,
};
pub use params::{
    Axis, ParamError, ParamSetting, BS_LEVELS, CC_LEVELS, LATTICE_SIZE, P_LEVELS,
};
pub use preprocess::{preprocess_logs, quantile, IQR_K, MIN_IQR_GROUP};

#[cfg(test)]
pub(crate) use log::fixtures;
