//! Activity energy costs and per-node battery ledgers.
//!
//! Ledgers keep every quantity in integer picojoules so that
//! `initial = remaining + sum(consumed)` holds exactly after any sequence of
//! charges. Costs are computed in joules and rounded once on entry.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const PJ_PER_J: f64 = 1e12;

/// Hardware power figures for the tracking platform. Powers in W, times in s, energies in J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub p_gps: f64,
    pub t_gps_lock: f64,
    pub p_mcu: f64,
    pub p_radio: f64,
    pub packet_bits: f64,
    pub channel_bit_rate: f64,
    /// Packet airtime as tabulated (rounded from `packet_bits / channel_bit_rate`).
    pub t_rt: f64,
    /// Use the unrounded `packet_bits / channel_bit_rate` instead of `t_rt`.
    pub exact_t_rt: bool,
    pub i_nm: f64,
    pub i_sm: f64,
    pub sensor_voltage: f64,
    pub p_nm: f64,
    pub p_sm: f64,
    pub dc_accmag: f64,
    pub p_sb: f64,
    /// Fixed allowance for processing and standby over a full track.
    pub e_misc: f64,
    /// Derive the allowance from `track_s * p_sb` instead of `e_misc`.
    pub misc_from_standby: bool,
    pub battery_j: f64,
    /// Track length the misc allowance is defined over.
    pub track_s: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p_gps: 0.074,
            t_gps_lock: 5.0,
            p_mcu: 0.0132,
            p_radio: 0.099,
            packet_bits: 80.0,
            channel_bit_rate: 256_000.0,
            t_rt: 0.31e-3,
            exact_t_rt: false,
            i_nm: 110e-6,
            i_sm: 1e-6,
            sensor_voltage: 2.5,
            p_nm: 275e-6,
            p_sm: 2.5e-6,
            dc_accmag: 0.25,
            p_sb: 1.25e-6,
            e_misc: 54.0,
            misc_from_standby: false,
            battery_j: 3996.0,
            track_s: 43_200.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("energy.p_gps", self.p_gps),
            ("energy.t_gps_lock", self.t_gps_lock),
            ("energy.p_mcu", self.p_mcu),
            ("energy.p_radio", self.p_radio),
            ("energy.packet_bits", self.packet_bits),
            ("energy.channel_bit_rate", self.channel_bit_rate),
            ("energy.t_rt", self.t_rt),
            ("energy.i_nm", self.i_nm),
            ("energy.i_sm", self.i_sm),
            ("energy.sensor_voltage", self.sensor_voltage),
            ("energy.p_nm", self.p_nm),
            ("energy.p_sm", self.p_sm),
            ("energy.dc_accmag", self.dc_accmag),
            ("energy.p_sb", self.p_sb),
            ("energy.e_misc", self.e_misc),
            ("energy.battery_j", self.battery_j),
            ("energy.track_s", self.track_s),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        if self.dc_accmag > 1.0 {
            return Err(Error::config("energy.dc_accmag", "must be <= 1"));
        }
        let exact = self.packet_bits / self.channel_bit_rate;
        if (self.t_rt - exact).abs() > 0.01 * exact {
            return Err(Error::config(
                "energy.t_rt",
                format!(
                    "{} s disagrees with packet_bits / channel_bit_rate = {exact} s",
                    self.t_rt
                ),
            ));
        }
        for (field, p, i) in [
            ("energy.p_nm", self.p_nm, self.i_nm),
            ("energy.p_sm", self.p_sm, self.i_sm),
        ] {
            let implied = i * self.sensor_voltage;
            if (p - implied).abs() > 0.01 * implied {
                return Err(Error::config(
                    field,
                    format!("{p} W disagrees with current * voltage = {implied} W"),
                ));
            }
        }
        Ok(())
    }

    pub fn packet_airtime(&self) -> f64 {
        if self.exact_t_rt {
            self.packet_bits / self.channel_bit_rate
        } else {
            self.t_rt
        }
    }

    fn misc_total(&self) -> f64 {
        if self.misc_from_standby {
            self.track_s * self.p_sb
        } else {
            self.e_misc
        }
    }
}

/// Energy of one hot-start GPS lock: receiver plus MCU for the lock time.
pub fn gps_fix_cost(params: &EnergyParams) -> f64 {
    params.t_gps_lock * (params.p_gps + params.p_mcu)
}

/// Energy of sending or receiving one packet (the two are equal).
pub fn radio_msg_cost(params: &EnergyParams) -> f64 {
    params.packet_airtime() * (params.p_mcu + params.p_radio)
}

/// Accelerometer + magnetometer energy per second of duty-cycled operation.
pub fn accmag_cost_per_second(params: &EnergyParams) -> f64 {
    params.dc_accmag * params.p_nm + (1.0 - params.dc_accmag) * params.p_sm
}

/// Misc allowance prorated over `seconds_alive` of the configured track.
pub fn misc_cost(params: &EnergyParams, seconds_alive: f64) -> f64 {
    params.misc_total() * seconds_alive / params.track_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Gps,
    Tx,
    Rx,
    AccMag,
    Misc,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Gps,
        Category::Tx,
        Category::Rx,
        Category::AccMag,
        Category::Misc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Gps => "gps",
            Category::Tx => "tx",
            Category::Rx => "rx",
            Category::AccMag => "accmag",
            Category::Misc => "misc",
        }
    }
}

fn to_pj(joules: f64) -> u64 {
    debug_assert!(joules >= 0.0 && joules.is_finite(), "bad charge {joules}");
    (joules.max(0.0) * PJ_PER_J).round() as u64
}

fn to_j(pj: u64) -> f64 {
    pj as f64 / PJ_PER_J
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyLedger {
    initial_pj: u64,
    remaining_pj: u64,
    consumed_pj: [u64; 5],
    dropped_charges: u64,
    shortfall_pj: u64,
}

impl EnergyLedger {
    pub fn new(battery_j: f64) -> Self {
        let pj = to_pj(battery_j);
        Self {
            initial_pj: pj,
            remaining_pj: pj,
            consumed_pj: [0; 5],
            dropped_charges: 0,
            shortfall_pj: 0,
        }
    }

    pub fn initial(&self) -> f64 {
        to_j(self.initial_pj)
    }

    pub fn remaining(&self) -> f64 {
        to_j(self.remaining_pj)
    }

    pub fn alive(&self) -> bool {
        self.remaining_pj > 0
    }

    pub fn consumed(&self, category: Category) -> f64 {
        to_j(self.consumed_pj[category as usize])
    }

    pub fn total_consumed(&self) -> f64 {
        to_j(self.consumed_pj.iter().sum())
    }

    /// Charges attempted after the battery was already empty.
    pub fn dropped_charges(&self) -> u64 {
        self.dropped_charges
    }

    /// Energy requested but not available, including dropped charges.
    pub fn shortfall(&self) -> f64 {
        to_j(self.shortfall_pj)
    }

    /// Draws up to `amount_j` and returns what was actually drawn.
    pub fn charge(&mut self, category: Category, amount_j: f64) -> f64 {
        let want = to_pj(amount_j);
        if !self.alive() {
            self.dropped_charges += 1;
            self.shortfall_pj += want;
            return 0.0;
        }
        let drawn = want.min(self.remaining_pj);
        self.remaining_pj -= drawn;
        self.consumed_pj[category as usize] += drawn;
        self.shortfall_pj += want - drawn;
        to_j(drawn)
    }

    /// True when the whole of `amount_j` can be drawn.
    pub fn can_afford(&self, amount_j: f64) -> bool {
        self.alive() && to_pj(amount_j) <= self.remaining_pj
    }

    pub fn misc_charge(&mut self, seconds_alive: f64, params: &EnergyParams) -> f64 {
        self.charge(Category::Misc, misc_cost(params, seconds_alive))
    }

    /// Exact check of `initial = remaining + sum(consumed)`.
    pub fn is_conserved(&self) -> bool {
        self.initial_pj == self.remaining_pj + self.consumed_pj.iter().sum::<u64>()
    }
}
