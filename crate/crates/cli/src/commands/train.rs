//! `iadn train`: train a detector, writing a run directory with the
//! resolved config snapshot, a per-iteration loss log, and checkpoints.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use iadn_core::dataio::load_dataset;
use iadn_core::netgraph::{build_network, save_checkpoint, NetworkConfig, Variant};
use iadn_core::training::{train_with_observer, TrainConfig};
use iadn_core::Error;

use crate::config::{resolve, Overrides};
use crate::{CmdError, CmdResult};

#[derive(clap::Args)]
pub struct Args {
    /// Training dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for the config snapshot, loss log, and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Config file with optional [network] and [train] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Variant selector: TDNN or IATDNN, optionally +MSS-F, +MSS,
    /// +IAMSS-F, or +IAMSS.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Training iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for weight init and minibatch sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Additionally save `checkpoint-NNNNNN.iadn` every N iterations
    /// (0 keeps only the final checkpoint).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

/// The resolved configuration as written to `config.toml`.
#[derive(Serialize)]
struct Snapshot<'a> {
    network: &'a NetworkConfig,
    train: &'a TrainConfig,
}

pub fn run(args: &Args) -> CmdResult {
    if let Some(lr) = args.lr {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(CmdError::Usage(format!("--lr must be a positive number, got {lr}")));
        }
    }
    if args.iterations == Some(0) {
        return Err(CmdError::Usage("--iterations must be at least 1".into()));
    }

    let overrides = Overrides {
        variant: args.variant,
        iterations: args.iterations,
        learning_rate: args.lr,
        seed: args.seed,
    };
    let (net_cfg, train_cfg) = resolve(args.config.as_deref(), &overrides)?;

    let dataset = load_dataset(&args.data)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", args.out.display())))?;

    let snapshot = toml::to_string_pretty(&Snapshot { network: &net_cfg, train: &train_cfg })
        .map_err(|e| CmdError::Runtime(format!("serializing config snapshot: {e}")))?;
    let snapshot_path = args.out.join("config.toml");
    fs::write(&snapshot_path, snapshot)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", snapshot_path.display())))?;

    let log_path = args.out.join("loss_log.csv");
    let mut log = BufWriter::new(
        File::create(&log_path).map_err(|e| CmdError::Runtime(format!("{}: {e}", log_path.display())))?,
    );
    writeln!(log, "iter,L_I,L_D,L_S,total")
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", log_path.display())))?;

    let net = build_network(&net_cfg, train_cfg.seed)?;
    println!(
        "training {} for {} iterations on {} frames (seed {})",
        net_cfg.variant, train_cfg.iterations, dataset.len(), train_cfg.seed
    );

    let started = Instant::now();
    let progress_every = (train_cfg.iterations / 10).max(100);
    let (net, losses) = train_with_observer(&dataset, net, &train_cfg, |ev| {
        let done = ev.iteration + 1;
        writeln!(
            log,
            "{},{},{},{},{}",
            done, ev.loss.l_i, ev.loss.l_d, ev.loss.l_s, ev.loss.total
        )
        .map_err(|e| Error::io(&log_path, e))?;
        if args.checkpoint_every > 0 && done % args.checkpoint_every == 0 {
            save_checkpoint(args.out.join(format!("checkpoint-{done:06}.iadn")), ev.net)?;
        }
        if done % progress_every == 0 || done == train_cfg.iterations {
            println!("iter {done:>6}: loss {:.4}", ev.loss.total);
        }
        Ok(())
    })?;
    log.flush().map_err(|e| CmdError::Runtime(format!("{}: {e}", log_path.display())))?;

    let checkpoint_path = args.out.join("checkpoint.iadn");
    save_checkpoint(&checkpoint_path, &net)?;
    let final_loss = losses.last().map_or(f64::NAN, |l| l.total);
    println!(
        "done in {:.1}s; final loss {final_loss:.4}; checkpoint at {}",
        started.elapsed().as_secs_f64(),
        checkpoint_path.display()
    );
    Ok(())
}
