//! Measured data of the Hefei deployment: access fibers of the five nodes
//! and the per-link statistics of all thirteen directed links.

use alloc::format;

use crate::decoy::{MeasuredStats, PulseBudget};
use crate::phys::{IntensitySettings, LinkParams};

pub const METRO_CLOCK_HZ: f64 = 4e6;
pub const FEIXI_CLOCK_HZ: f64 = 320e6;
pub const DUTY_CYCLE: f64 = 0.8;
pub const RUN_SECONDS: f64 = 400.0;
pub const DETECTOR_EFFICIENCY: f64 = 0.1;
/// Default dark-count probability for the long-haul detectors.
pub const LONG_HAUL_DARK_COUNT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessFiber {
    pub node: &'static str,
    pub distance_km: f64,
    pub loss_db: f64,
}

/// Fiber from each node to the switch site. USTC reaches it through a
/// 10 km loop so that it behaves like a remote node.
pub const ACCESS_FIBERS: [AccessFiber; 5] = [
    AccessFiber {
        node: "USTC",
        distance_km: 10.047,
        loss_db: 2.82,
    },
    AccessFiber {
        node: "Wanan",
        distance_km: 8.447,
        loss_db: 2.65,
    },
    AccessFiber {
        node: "Meilan",
        distance_km: 9.904,
        loss_db: 2.86,
    },
    AccessFiber {
        node: "Wanxi",
        distance_km: 8.417,
        loss_db: 2.75,
    },
    AccessFiber {
        node: "Feixi",
        distance_km: 60.0,
        loss_db: 17.0,
    },
];

pub const METRO_NODES: [&str; 4] = ["USTC", "Wanan", "Meilan", "Wanxi"];

pub fn access_fiber(node: &str) -> Option<&'static AccessFiber> {
    ACCESS_FIBERS.iter().find(|f| f.node == node)
}

/// Fiber distance and loss between two nodes: the sum of both access fibers
/// for switched metro paths, Feixi's own line for the Feixi-USTC link.
pub fn path_fiber(from: &str, to: &str) -> Option<(f64, f64)> {
    let (a, b) = (access_fiber(from)?, access_fiber(to)?);
    if from == "Feixi" || to == "Feixi" {
        let far = if from == "Feixi" { a } else { b };
        let near = if from == "Feixi" { to } else { from };
        return (near == "USTC").then_some((far.distance_km, far.loss_db));
    }
    Some((a.distance_km + b.distance_km, a.loss_db + b.loss_db))
}

/// One directed link's measurements (sender first). Rates in bit/s, error
/// rates as fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredLink {
    pub from: &'static str,
    pub to: &'static str,
    pub sifted_bps: f64,
    pub final_bps: f64,
    pub e_mu: f64,
    pub e_nu: f64,
    pub q_mu: f64,
    pub q_nu: f64,
    pub y0: f64,
    pub clock_hz: f64,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    from: &'static str,
    to: &'static str,
    sifted_kbps: f64,
    final_kbps: f64,
    e_mu_pct: f64,
    e_nu_pct: f64,
    q_mu: f64,
    q_nu: f64,
    y0: f64,
    clock_hz: f64,
) -> MeasuredLink {
    MeasuredLink {
        from,
        to,
        sifted_bps: sifted_kbps * 1e3,
        final_bps: final_kbps * 1e3,
        e_mu: e_mu_pct / 100.0,
        e_nu: e_nu_pct / 100.0,
        q_mu,
        q_nu,
        y0,
        clock_hz,
    }
}

const M: f64 = METRO_CLOCK_HZ;

pub const MEASURED_LINKS: [MeasuredLink; 13] = [
    row("Meilan", "USTC", 11.0, 1.45, 1.58, 4.00, 8.21e-3, 2.71e-3, 2.03e-4, M),
    row("USTC", "Meilan", 9.74, 1.20, 1.47, 4.10, 5.81e-3, 1.90e-3, 1.38e-4, M),
    row("USTC", "Wanxi", 10.0, 1.95, 1.51, 4.99, 7.25e-3, 2.32e-3, 2.04e-4, M),
    row("Wanxi", "USTC", 8.02, 1.45, 1.53, 4.99, 5.83e-3, 1.91e-3, 1.70e-4, M),
    row("Wanxi", "Wanan", 8.00, 1.30, 1.35, 4.41, 7.15e-3, 2.20e-3, 1.78e-4, M),
    row("Wanan", "USTC", 8.33, 1.40, 1.67, 5.40, 5.80e-3, 1.90e-3, 1.75e-4, M),
    row("Meilan", "Wanxi", 8.54, 1.43, 1.70, 4.43, 6.79e-3, 2.30e-3, 1.86e-4, M),
    row("Meilan", "Wanan", 9.39, 2.54, 1.28, 3.48, 6.86e-3, 2.29e-3, 1.19e-4, M),
    row("USTC", "Wanan", 8.17, 1.82, 1.43, 2.79, 7.33e-3, 2.48e-3, 1.33e-4, M),
    row("Wanxi", "Meilan", 7.97, 1.75, 1.68, 4.28, 6.23e-3, 2.21e-3, 1.58e-4, M),
    row("Wanan", "Meilan", 7.33, 1.40, 1.60, 5.16, 6.43e-3, 2.16e-3, 1.77e-4, M),
    row("Wanan", "Wanxi", 8.39, 1.21, 1.56, 4.97, 5.68e-3, 1.91e-3, 1.74e-4, M),
    row(
        "Feixi",
        "USTC",
        18.0,
        4.50,
        1.13,
        1.71,
        1.64e-4,
        6.60e-5,
        1.13e-6,
        FEIXI_CLOCK_HZ,
    ),
];

impl MeasuredLink {
    pub fn name(&self) -> alloc::string::String {
        format!("{}-{}", self.from, self.to)
    }

    /// Statistics with pulse counts of a default-length run at this clock.
    pub fn stats(&self, settings: &IntensitySettings) -> MeasuredStats {
        let budget = self.budget(settings);
        MeasuredStats {
            mu: settings.mu,
            nu: settings.nu,
            q_mu: self.q_mu,
            e_mu: self.e_mu,
            q_nu: self.q_nu,
            e_nu: self.e_nu,
            y0: self.y0,
            n_mu: budget.n_mu,
            n_nu: budget.n_nu,
            n_0: budget.n_0,
        }
    }

    pub fn budget(&self, settings: &IntensitySettings) -> PulseBudget {
        PulseBudget::from_run(RUN_SECONDS, self.clock_hz, DUTY_CYCLE, settings.occupancy)
    }

    /// Uncalibrated link parameters: geometry from the access fibers,
    /// detector defaults, no insertion loss.
    pub fn base_params(&self) -> LinkParams {
        let (distance_km, fiber_loss_db) = path_fiber(self.from, self.to).expect("fixture nodes are known");
        let long_haul = self.from == "Feixi" || self.to == "Feixi";
        LinkParams {
            name: self.name(),
            distance_km,
            fiber_loss_db,
            insertion_loss_db: 0.0,
            detector_efficiency: DETECTOR_EFFICIENCY,
            dark_count_prob: if long_haul { LONG_HAUL_DARK_COUNT } else { 0.0 },
            misalignment: 0.0,
            clock_hz: self.clock_hz,
            duty_cycle: DUTY_CYCLE,
        }
    }
}

pub fn measured_link(from: &str, to: &str) -> Option<&'static MeasuredLink> {
    MEASURED_LINKS.iter().find(|l| l.from == from && l.to == to)
}
