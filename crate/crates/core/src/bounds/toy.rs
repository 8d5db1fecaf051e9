use super::{BoundError, PROB_CLAMP};

/// Joint distribution of two finite variables, rows indexed by `y`,
/// columns by `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyJoint {
    table: Vec<Vec<f64>>,
}

fn check_distribution(row: &[f64], what: &str) -> Result<(), BoundError> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(BoundError::InvalidTable(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(BoundError::InvalidTable(format!("{what} sums to {s}")));
    }
    Ok(())
}

impl ToyJoint {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self, BoundError> {
        let cols = table.first().map_or(0, Vec::len);
        if table.is_empty() || cols == 0 || table.iter().any(|r| r.len() != cols) {
            return Err(BoundError::InvalidTable(
                "joint table must be a nonempty rectangle".into(),
            ));
        }
        let flat: Vec<f64> = table.iter().flatten().copied().collect();
        check_distribution(&flat, "joint table")?;
        Ok(Self { table })
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn y_card(&self) -> usize {
        self.table.len()
    }

    pub fn z_card(&self) -> usize {
        self.table[0].len()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_z(&self) -> Vec<f64> {
        (0..self.z_card())
            .map(|j| self.table.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// `P(y | z)` as rows indexed by `z`. Columns with zero mass get uniform rows.
    pub fn conditional_y_given_z(&self) -> Vec<Vec<f64>> {
        let pz = self.marginal_z();
        (0..self.z_card())
            .map(|j| {
                if pz[j] > 0.0 {
                    self.table.iter().map(|r| r[j] / pz[j]).collect()
                } else {
                    vec![1.0 / self.y_card() as f64; self.y_card()]
                }
            })
            .collect()
    }
}

/// Exact mutual information by enumeration.
pub fn mi_bruteforce(joint: &ToyJoint) -> f64 {
    let (py, pz) = (joint.marginal_y(), joint.marginal_z());
    let mut total = 0.0;
    for (i, row) in joint.table().iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                total += p * (p / (py[i] * pz[j])).ln();
            }
        }
    }
    total
}

/// Exact value of `E_P[g] - E_{P(Y)P(Z)}[exp(g - 1)]` with
/// `g = 1 + ln(Q1(y|z) / Q2(y))`; `q1` rows are indexed by `z`.
pub fn nwj_bound_eval(joint: &ToyJoint, q1: &[Vec<f64>], q2: &[f64]) -> Result<f64, BoundError> {
    let (ny, nz) = (joint.y_card(), joint.z_card());
    if q1.len() != nz || q1.iter().any(|r| r.len() != ny) || q2.len() != ny {
        return Err(BoundError::InvalidTable(
            "variational tables do not match the joint".into(),
        ));
    }
    for (j, row) in q1.iter().enumerate() {
        check_distribution(row, &format!("q1 row {j}"))?;
    }
    check_distribution(q2, "q2")?;
    let (py, pz) = (joint.marginal_y(), joint.marginal_z());
    let clamp = |p: f64| p.max(PROB_CLAMP);
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..ny {
        for j in 0..nz {
            let ratio = clamp(q1[j][i]) / clamp(q2[i]);
            let p = joint.table()[i][j];
            if p > 0.0 {
                first += p * (1.0 + ratio.ln());
            }
            second += py[i] * pz[j] * ratio;
        }
    }
    Ok(first - second)
}
