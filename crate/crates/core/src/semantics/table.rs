use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::IMAGE_PATCHES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleText,
    BimodalVqa,
}

impl TaskKind {
    pub fn members(self) -> usize {
        match self {
            TaskKind::SingleText => 1,
            TaskKind::BimodalVqa => 2,
        }
    }
}

/// Fidelity on a complete Cartesian grid of symbol budgets and SINRs.
///
/// Axes are ordered `k_t, [k_i,] gamma_t, [gamma_i]`; values are stored
/// row-major in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityTable {
    kind: TaskKind,
    k_axes: Vec<Vec<f64>>,
    sinr_axes_db: Vec<Vec<f64>>,
    values: Vec<f64>,
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Table(format!("axis {name} is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Table(format!("axis {name} is not strictly ascending")));
    }
    Ok(())
}

impl FidelityTable {
    pub fn new(
        kind: TaskKind,
        k_axes: Vec<Vec<f64>>,
        sinr_axes_db: Vec<Vec<f64>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = kind.members();
        if k_axes.len() != n || sinr_axes_db.len() != n {
            return Err(Error::Table(format!("{kind:?} needs {n} budget and {n} SINR axes")));
        }
        for (i, a) in k_axes.iter().enumerate() {
            check_axis(&format!("k[{i}]"), a)?;
            if a[0] <= 0.0 {
                return Err(Error::Table("symbol budgets must be positive".into()));
            }
        }
        for (i, a) in sinr_axes_db.iter().enumerate() {
            check_axis(&format!("gamma[{i}]"), a)?;
        }
        let expected: usize = k_axes.iter().chain(&sinr_axes_db).map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::Table(format!("expected {expected} values, got {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Table(format!("fidelity {v} outside [0,1]")));
        }
        Ok(FidelityTable {
            kind,
            k_axes,
            sinr_axes_db,
            values,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    /// Budget grid of member `i` (0 = text, 1 = image).
    pub fn k_grid(&self, i: usize) -> &[f64] {
        &self.k_axes[i]
    }

    pub fn sinr_grid_db(&self, i: usize) -> &[f64] {
        &self.sinr_axes_db[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn axes(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.k_axes.iter().chain(&self.sinr_axes_db)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes().map(Vec::len).collect()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        self.axes().zip(idx).fold(0, |acc, (a, &i)| acc * a.len() + i)
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// Every grid point as `(coordinates, value)` in storage order.
    pub fn grid_points(&self) -> Vec<(Vec<f64>, f64)> {
        let axes: Vec<&Vec<f64>> = self.axes().collect();
        let dims = self.dims();
        (0..self.values.len())
            .map(|flat| {
                let mut rem = flat;
                let mut coords = vec![0.0; dims.len()];
                for d in (0..dims.len()).rev() {
                    coords[d] = axes[d][rem % dims[d]];
                    rem /= dims[d];
                }
                (coords, self.values[flat])
            })
            .collect()
    }

    /// Multilinear interpolation; coordinates are clamped to the grid.
    pub fn interpolate(&self, point: &[f64]) -> f64 {
        const MAX_DIMS: usize = 4;
        let d = self.k_axes.len() + self.sinr_axes_db.len();
        debug_assert!(d <= MAX_DIMS && point.len() == d);
        let mut lower = [0usize; MAX_DIMS];
        let mut frac = [0.0f64; MAX_DIMS];
        let mut len = [1usize; MAX_DIMS];
        for (dim, (a, &x)) in self.axes().zip(point).enumerate() {
            len[dim] = a.len();
            if a.len() == 1 {
                continue;
            }
            let x = x.clamp(a[0], a[a.len() - 1]);
            let seg = a.partition_point(|&g| g <= x).clamp(1, a.len() - 1) - 1;
            lower[dim] = seg;
            frac[dim] = (x - a[seg]) / (a[seg + 1] - a[seg]);
        }
        let mut acc = 0.0;
        'corners: for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = corner >> k & 1 == 1;
                let f = if up { frac[k] } else { 1.0 - frac[k] };
                if f == 0.0 {
                    continue 'corners;
                }
                w *= f;
                flat = flat * len[k] + lower[k] + up as usize;
            }
            acc += w * self.values[flat];
        }
        acc
    }

    fn header(kind: TaskKind) -> &'static [&'static str] {
        match kind {
            TaskKind::SingleText => &["k_t", "gamma_t_db", "fidelity"],
            TaskKind::BimodalVqa => &["k_t", "k_i", "gamma_t_db", "gamma_i_db", "fidelity"],
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.kind))?;
        for (coords, v) in self.grid_points() {
            let mut rec: Vec<String> = coords.iter().map(f64::to_string).collect();
            rec.push(v.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let kind = [TaskKind::SingleText, TaskKind::BimodalVqa]
            .into_iter()
            .find(|&k| Self::header(k).iter().eq(header.iter()))
            .ok_or_else(|| Error::Table(format!("unrecognised header {header:?}")))?;
        let d = header.len() - 1;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let row = parsed.map_err(|e| Error::Table(format!("line {}: {e}", rows.len() + 2)))?;
            if row.len() != d + 1 {
                return Err(Error::Table(format!("line {}: wrong field count", rows.len() + 2)));
            }
            rows.push(row);
        }
        let mut axes: Vec<Vec<f64>> = (0..d)
            .map(|c| {
                let mut a: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                a.sort_by(f64::total_cmp);
                a.dedup();
                a
            })
            .collect();
        let dims: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = dims.iter().product();
        if rows.len() != total {
            return Err(Error::Table(format!("incomplete grid: {} rows for {total} points", rows.len())));
        }
        let mut values = vec![f64::NAN; total];
        for row in &rows {
            let mut flat = 0;
            for c in 0..d {
                let i = axes[c].binary_search_by(|g| g.total_cmp(&row[c])).expect("axis built from rows");
                flat = flat * dims[c] + i;
            }
            if !values[flat].is_nan() {
                return Err(Error::Table("duplicate grid point".into()));
            }
            values[flat] = row[d];
        }
        let m = kind.members();
        let sinr = axes.split_off(m);
        Self::new(kind, axes, sinr, values)
    }
}

/// Per-modality fixture shape:
/// `sat(k) = 1 - c exp(-d k/unit)`, midpoint `b(k) = b_inf + b_span exp(-e k/unit)`,
/// and `ξ = sat(k) / (1 + exp(-a (γ_dB - b(k))))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityShape {
    pub saturation_gap: f64,
    pub saturation_rate: f64,
    pub slope_per_db: f64,
    pub midpoint_floor_db: f64,
    pub midpoint_span_db: f64,
    pub midpoint_decay: f64,
    pub unit: f64,
}

impl ModalityShape {
    pub fn saturation(&self, k: f64) -> f64 {
        1.0 - self.saturation_gap * (-self.saturation_rate * k / self.unit).exp()
    }

    pub fn midpoint_db(&self, k: f64) -> f64 {
        self.midpoint_floor_db + self.midpoint_span_db * (-self.midpoint_decay * k / self.unit).exp()
    }

    pub fn logistic(&self, k: f64, sinr_db: f64) -> f64 {
        1.0 / (1.0 + (-self.slope_per_db * (sinr_db - self.midpoint_db(k))).exp())
    }

    pub fn fidelity(&self, k: f64, sinr_db: f64) -> f64 {
        self.saturation(k) * self.logistic(k, sinr_db)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub text: ModalityShape,
    pub vqa_text: ModalityShape,
    pub vqa_image: ModalityShape,
    pub text_k: Vec<f64>,
    pub vqa_k_text: Vec<f64>,
    pub vqa_k_image: Vec<f64>,
    pub sinr_db: Vec<f64>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            text: ModalityShape {
                saturation_gap: 0.25,
                saturation_rate: 0.5,
                slope_per_db: 0.5,
                midpoint_floor_db: 0.0,
                midpoint_span_db: 8.0,
                midpoint_decay: 0.15,
                unit: 1.0,
            },
            vqa_text: ModalityShape {
                saturation_gap: 0.5,
                saturation_rate: 0.5,
                slope_per_db: 0.5,
                midpoint_floor_db: 0.0,
                midpoint_span_db: 8.0,
                midpoint_decay: 0.2,
                unit: 1.0,
            },
            vqa_image: ModalityShape {
                saturation_gap: 0.5,
                saturation_rate: 0.4,
                slope_per_db: 0.5,
                midpoint_floor_db: 0.0,
                midpoint_span_db: 8.0,
                midpoint_decay: 0.15,
                unit: IMAGE_PATCHES,
            },
            text_k: (1..=20).map(f64::from).collect(),
            vqa_k_text: vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            vqa_k_image: [1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0].iter().map(|n| n * IMAGE_PATCHES).collect(),
            sinr_db: (-10..=20).map(f64::from).collect(),
        }
    }
}

/// Synthetic fidelity table, monotone in every budget and SINR.
pub fn synth_table(kind: TaskKind, params: &SynthParams) -> Result<FidelityTable> {
    let table = match kind {
        TaskKind::SingleText => {
            let s = &params.text;
            let mut values = Vec::with_capacity(params.text_k.len() * params.sinr_db.len());
            for &k in &params.text_k {
                for &g in &params.sinr_db {
                    values.push(s.fidelity(k, g));
                }
            }
            FidelityTable::new(kind, vec![params.text_k.clone()], vec![params.sinr_db.clone()], values)
        }
        TaskKind::BimodalVqa => {
            let (t, i) = (&params.vqa_text, &params.vqa_image);
            let mut values = Vec::new();
            for &kt in &params.vqa_k_text {
                for &ki in &params.vqa_k_image {
                    let sat = t.saturation(kt) * i.saturation(ki);
                    for &gt in &params.sinr_db {
                        for &gi in &params.sinr_db {
                            values.push(sat * t.logistic(kt, gt).min(i.logistic(ki, gi)));
                        }
                    }
                }
            }
            FidelityTable::new(
                kind,
                vec![params.vqa_k_text.clone(), params.vqa_k_image.clone()],
                vec![params.sinr_db.clone(), params.sinr_db.clone()],
                values,
            )
        }
    };
    table.map_err(|e| match e {
        Error::Table(msg) => Error::Config(format!("synthetic fidelity parameters: {msg}")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_bimodal() -> FidelityTable {
        let p = SynthParams {
            vqa_k_text: vec![1.0, 4.0],
            vqa_k_image: vec![197.0, 394.0, 788.0],
            sinr_db: vec![-10.0, 0.0, 10.0, 20.0],
            ..Default::default()
        };
        synth_table(TaskKind::BimodalVqa, &p).unwrap()
    }

    #[test]
    fn saturates_at_high_sinr() {
        let p = SynthParams::default();
        for &k in &p.text_k {
            let s = &p.text;
            assert!((s.fidelity(k, 60.0) - s.saturation(k)).abs() < 1e-6);
        }
    }

    #[test]
    fn monotone_in_every_axis() {
        let p = SynthParams::default();
        let single = synth_table(TaskKind::SingleText, &p).unwrap();
        let (nk, ng) = (p.text_k.len(), p.sinr_db.len());
        for a in 0..nk {
            for g in 0..ng {
                let v = single.value_at(&[a, g]);
                if a + 1 < nk {
                    assert!(single.value_at(&[a + 1, g]) >= v);
                }
                if g + 1 < ng {
                    assert!(single.value_at(&[a, g + 1]) >= v);
                }
            }
        }
        let bi = synth_table(TaskKind::BimodalVqa, &p).unwrap();
        let dims = bi.dims();
        for (flat, (_, v)) in bi.grid_points().into_iter().enumerate() {
            let mut rem = flat;
            let mut idx = vec![0; 4];
            for d in (0..4).rev() {
                idx[d] = rem % dims[d];
                rem /= dims[d];
            }
            for d in 0..4 {
                if idx[d] + 1 < dims[d] {
                    let mut up = idx.clone();
                    up[d] += 1;
                    assert!(bi.value_at(&up) >= v);
                }
            }
        }
    }

    #[test]
    fn doubling_k_never_hurts() {
        let p = SynthParams::default();
        for k in [1.0, 2.0, 3.0, 5.0, 10.0] {
            for g in [-10.0, 0.0, 7.5, 20.0] {
                assert!(p.text.fidelity(2.0 * k, g) >= p.text.fidelity(k, g));
            }
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let p = SynthParams::default();
        assert_eq!(
            synth_table(TaskKind::BimodalVqa, &p).unwrap(),
            synth_table(TaskKind::BimodalVqa, &p).unwrap()
        );
    }

    #[test]
    fn out_of_range_params_rejected() {
        let mut p = SynthParams::default();
        p.text.saturation_gap = -1.0;
        assert!(synth_table(TaskKind::SingleText, &p).is_err());
    }

    #[test]
    fn interpolation_hits_nodes_exactly() {
        let t = small_bimodal();
        for (coords, v) in t.grid_points() {
            assert_eq!(t.interpolate(&coords), v);
        }
    }

    #[test]
    fn interpolation_midpoint_is_mean() {
        let t = synth_table(TaskKind::SingleText, &SynthParams::default()).unwrap();
        let (a, b) = (t.value_at(&[4, 12]), t.value_at(&[4, 13]));
        let g = t.sinr_grid_db(0);
        let mid = t.interpolate(&[5.0, (g[12] + g[13]) / 2.0]);
        assert_eq!(mid, (a + b) / 2.0);
    }

    #[test]
    fn interpolation_clamps_out_of_grid() {
        let t = synth_table(TaskKind::SingleText, &SynthParams::default()).unwrap();
        assert_eq!(t.interpolate(&[3.0, 55.0]), t.interpolate(&[3.0, 20.0]));
        assert_eq!(t.interpolate(&[3.0, -40.0]), t.interpolate(&[3.0, -10.0]));
    }

    #[test]
    fn interpolation_matches_bilinear_formula() {
        let t = synth_table(TaskKind::SingleText, &SynthParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.random_range(1.0..20.0f64);
            let g = rng.random_range(-10.0..20.0f64);
            let (i, j) = ((k.floor() as usize - 1).min(18), ((g + 10.0).floor() as usize).min(29));
            let (u, v) = (k - (i + 1) as f64, g + 10.0 - j as f64);
            let expect = (1.0 - u) * (1.0 - v) * t.value_at(&[i, j])
                + u * (1.0 - v) * t.value_at(&[i + 1, j])
                + (1.0 - u) * v * t.value_at(&[i, j + 1])
                + u * v * t.value_at(&[i + 1, j + 1]);
            assert!((t.interpolate(&[k, g]) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        for t in [synth_table(TaskKind::SingleText, &SynthParams::default()).unwrap(), small_bimodal()] {
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = FidelityTable::read_csv(buf.as_slice()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn csv_header_and_completeness_checked() {
        let bad_header = "k,gamma,fid\n1,0,0.5\n";
        assert!(FidelityTable::read_csv(bad_header.as_bytes()).is_err());
        let incomplete = "k_t,gamma_t_db,fidelity\n1,0,0.5\n1,1,0.6\n2,0,0.7\n";
        assert!(FidelityTable::read_csv(incomplete.as_bytes()).is_err());
        let out_of_range = "k_t,gamma_t_db,fidelity\n1,0,1.5\n";
        assert!(FidelityTable::read_csv(out_of_range.as_bytes()).is_err());
        let shuffled = "k_t,gamma_t_db,fidelity\n2,1,0.9\n1,0,0.1\n2,0,0.5\n1,1,0.3\n";
        let t = FidelityTable::read_csv(shuffled.as_bytes()).unwrap();
        assert_eq!(t.values(), &[0.1, 0.3, 0.5, 0.9]);
    }
}
