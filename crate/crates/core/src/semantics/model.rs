use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{FidelityTable, TaskKind};
use crate::error::{Error, Result};
use crate::mlp::{Activation, AdamConfig, Mlp};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backing", rename_all = "snake_case")]
pub enum FidelityBacking {
    Table { table: FidelityTable },
    Mlp { net: Mlp },
}

/// Fidelity `ξ(k, γ)` with budgets checked against the grid and SINRs
/// clamped to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityModel {
    kind: TaskKind,
    k_bounds: Vec<(f64, f64)>,
    sinr_bounds_db: Vec<(f64, f64)>,
    /// Budget grids, kept so solvers can enumerate admissible actions.
    k_grids: Vec<Vec<f64>>,
    backing: FidelityBacking,
}

impl FidelityModel {
    pub fn from_table(table: FidelityTable) -> Result<Self> {
        let n = table.kind().members();
        let k_grids: Vec<Vec<f64>> = (0..n).map(|i| table.k_grid(i).to_vec()).collect();
        let bounds = |g: &[f64]| (g[0], g[g.len() - 1]);
        Ok(FidelityModel {
            kind: table.kind(),
            k_bounds: k_grids.iter().map(|g| bounds(g)).collect(),
            sinr_bounds_db: (0..n).map(|i| bounds(table.sinr_grid_db(i))).collect(),
            k_grids,
            backing: FidelityBacking::Table { table },
        })
    }

    fn with_net(&self, net: Mlp) -> Self {
        FidelityModel {
            kind: self.kind,
            k_bounds: self.k_bounds.clone(),
            sinr_bounds_db: self.sinr_bounds_db.clone(),
            k_grids: self.k_grids.clone(),
            backing: FidelityBacking::Mlp { net },
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn backing(&self) -> &FidelityBacking {
        &self.backing
    }

    pub fn k_grid(&self, member: usize) -> &[f64] {
        &self.k_grids[member]
    }

    pub fn sinr_bounds_db(&self, member: usize) -> (f64, f64) {
        self.sinr_bounds_db[member]
    }

    /// Scaled MLP input: budgets over their grid maximum, SINRs mapped
    /// linearly from the grid range onto `[0, 1]`.
    fn features(&self, k: &[f64], sinr_db: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(2 * k.len());
        f.extend(k.iter().zip(&self.k_bounds).map(|(k, b)| k / b.1));
        f.extend(
            sinr_db
                .iter()
                .zip(&self.sinr_bounds_db)
                .map(|(g, b)| (g.clamp(b.0, b.1) - b.0) / (b.1 - b.0)),
        );
        f
    }

    pub fn fidelity(&self, k: &[f64], sinr_db: &[f64]) -> Result<f64> {
        let n = self.kind.members();
        if k.len() != n {
            return Err(Error::Dimension { expected: n, got: k.len() });
        }
        if sinr_db.len() != n {
            return Err(Error::Dimension { expected: n, got: sinr_db.len() });
        }
        for (&kv, &(lo, hi)) in k.iter().zip(&self.k_bounds) {
            let tol = 1e-9 * hi;
            if !(kv >= lo - tol && kv <= hi + tol) {
                return Err(Error::BudgetOutOfRange { k: kv, min: lo, max: hi });
            }
        }
        let v = match &self.backing {
            FidelityBacking::Table { table } => {
                let mut point = [0.0; 4];
                point[..n].copy_from_slice(k);
                for (i, (g, b)) in sinr_db.iter().zip(&self.sinr_bounds_db).enumerate() {
                    point[n + i] = g.clamp(b.0, b.1);
                }
                table.interpolate(&point[..2 * n])
            }
            FidelityBacking::Mlp { net } => net.predict(&self.features(k, sinr_db))?[0],
        };
        Ok(v.clamp(0.0, 1.0))
    }

    pub fn single(&self, k: f64, sinr_db: f64) -> Result<f64> {
        self.fidelity(&[k], &[sinr_db])
    }

    pub fn bimodal(&self, k_t: f64, k_i: f64, sinr_t_db: f64, sinr_i_db: f64) -> Result<f64> {
        self.fidelity(&[k_t, k_i], &[sinr_t_db, sinr_i_db])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Fitting fails if the final table MSE is above this.
    pub target_mse: f64,
    /// Training stops early once the table MSE reaches this.
    pub stop_mse: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::for_kind(TaskKind::SingleText)
    }
}

impl FitConfig {
    pub fn for_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::SingleText => FitConfig {
                hidden: vec![16],
                learning_rate: 1e-3,
                max_epochs: 5000,
                batch_size: 16,
                target_mse: 1e-3,
                stop_mse: 1e-4,
                seed: 0,
            },
            TaskKind::BimodalVqa => FitConfig {
                hidden: vec![32, 32],
                learning_rate: 1e-3,
                max_epochs: 300,
                batch_size: 32,
                target_mse: 1e-3,
                stop_mse: 1e-4,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: TaskKind,
    pub epochs: usize,
    pub mse: f64,
    /// Full-table MSE after each epoch.
    pub curve: Vec<f64>,
}

impl FitReport {
    pub fn write_csv<W: Write>(reports: &[FitReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "epoch", "mse"])?;
        for r in reports {
            let task = match r.kind {
                TaskKind::SingleText => "single_text",
                TaskKind::BimodalVqa => "bimodal_vqa",
            };
            for (e, m) in r.curve.iter().enumerate() {
                w.write_record([task.to_string(), (e + 1).to_string(), m.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits a sigmoid MLP to every grid point of `table`.
pub fn fit_fidelity(table: &FidelityTable, config: &FitConfig) -> Result<(FidelityModel, FitReport)> {
    let base = FidelityModel::from_table(table.clone())?;
    let n = table.kind().members();
    let points = table.grid_points();
    let rows = points.len();
    let dim = 2 * n;
    let mut x = Array2::zeros((rows, dim));
    let mut y = Array2::zeros((rows, 1));
    for (r, (coords, v)) in points.iter().enumerate() {
        let f = base.features(&coords[..n], &coords[n..]);
        for (c, fv) in f.into_iter().enumerate() {
            x[[r, c]] = fv;
        }
        y[[r, 0]] = *v;
    }

    let mut sizes = vec![dim];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::new(
        &sizes,
        Activation::Sigmoid,
        Activation::Sigmoid,
        AdamConfig::with_lr(config.learning_rate),
        &mut rng,
    );

    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut curve = Vec::new();
    let full_mse = |net: &Mlp| {
        let out = net.forward(x.view());
        (&out - &y).iter().map(|d| d * d).sum::<f64>() / rows as f64
    };
    let mut mse = full_mse(&net);
    for _ in 0..config.max_epochs {
        if mse <= config.stop_mse.min(config.target_mse) {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            net.train_step(xb.view(), yb.view())?;
        }
        mse = full_mse(&net);
        curve.push(mse);
    }
    let report = FitReport {
        kind: table.kind(),
        epochs: curve.len(),
        mse,
        curve,
    };
    if mse > config.target_mse {
        return Err(Error::FitNotConverged {
            mse,
            target: config.target_mse,
            epochs: report.epochs,
        });
    }
    Ok((base.with_net(net), report))
}
