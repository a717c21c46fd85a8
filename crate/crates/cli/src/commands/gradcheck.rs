//! `iadn gradcheck`: verify the gradients of the full training loss for a
//! variant against central finite differences at 64-bit precision.

use iadn_core::netgraph::{NetworkConfig, Variant};
use iadn_core::numerics::GradCheckOptions;
use iadn_core::training::check_loss_gradients;

use crate::config::default_variant;
use crate::{CmdError, CmdResult};

/// Largest acceptable relative error between analytic and numeric
/// derivatives.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(clap::Args)]
pub struct Args {
    /// Variant selector: TDNN or IATDNN, optionally +MSS-F, +MSS,
    /// +IAMSS-F, or +IAMSS.
    #[arg(long, default_value_t = default_variant())]
    pub variant: Variant,
    /// Seed for the network init and probe-coordinate sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = GradCheckOptions::default().eps)]
    pub eps: f64,
    /// Coordinate budget per tensor.
    #[arg(long, default_value_t = GradCheckOptions::default().max_coords_per_tensor)]
    pub coords: usize,
}

pub fn run(args: &Args) -> CmdResult {
    if !(args.eps > 0.0 && args.eps.is_finite()) {
        return Err(CmdError::Usage(format!("--eps must be a positive number, got {}", args.eps)));
    }
    if args.coords == 0 {
        return Err(CmdError::Usage("--coords must be at least 1".into()));
    }

    // Verification runs on the compact topology: the layer kernels are the
    // same as at desk scale, and the finite-difference sweep stays fast.
    let config = NetworkConfig::compact(args.variant);
    let opts = GradCheckOptions {
        eps: args.eps,
        max_coords_per_tensor: args.coords,
        seed: args.seed,
        ..Default::default()
    };
    let report = check_loss_gradients(&config, args.seed, &opts)?;
    println!(
        "variant {}: max relative error {:.3e} over {} coordinates ({} below the measurable floor)",
        args.variant, report.max_rel_error, report.coords_checked, report.coords_unmeasurable
    );
    if report.max_rel_error < GRAD_TOLERANCE {
        Ok(())
    } else {
        let detail = match (report.worst_coord, report.worst_pair) {
            (Some((input, coord)), Some((analytic, numeric))) => format!(
                " (input {input} coordinate {coord}: analytic {analytic:.6e}, numeric {numeric:.6e})"
            ),
            _ => String::new(),
        };
        Err(CmdError::Runtime(format!(
            "gradient check failed: max relative error {:.3e} is not below {GRAD_TOLERANCE:e}{detail}",
            report.max_rel_error
        )))
    }
}
