//! JSON documents for problems, measurements and reports, plus the sweep CSV.

use serde::{Deserialize, Serialize};

use crate::bb84::Bb84SweepRow;
use crate::certificate::{CertificateResiduals, OptimalityCertificate};
use crate::error::{Result, UsdError};
use crate::linalg::{ComplexMatrix, HermitianMatrix, C64};
use crate::problem::{DensityMatrix, Povm, UsdProblem, ValidationReport};
use crate::solvers::{Branch, SolutionReport};

/// A square complex matrix as two real arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let n = m.dim();
        let part = |f: fn(&C64) -> f64| {
            (0..n)
                .map(|i| (0..n).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: part(|z| z.re),
            im: part(|z| z.im),
        }
    }

    /// Checks the shape against `dim` and naming errors after `field`.
    pub fn to_matrix(&self, field: &str, dim: usize) -> Result<ComplexMatrix> {
        for (part, rows) in [("re", &self.re), ("im", &self.im)] {
            if rows.len() != dim {
                return Err(UsdError::Format(format!(
                    "{field}.{part}: expected {dim} rows, found {}",
                    rows.len()
                )));
            }
            if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
                return Err(UsdError::Format(format!(
                    "{field}.{part}[{i}]: expected {dim} entries, found {}",
                    row.len()
                )));
            }
        }
        Ok(ComplexMatrix::from_fn(dim, |i, j| {
            C64::new(self.re[i][j], self.im[i][j])
        }))
    }

    pub fn to_hermitian(&self, field: &str, dim: usize) -> Result<HermitianMatrix> {
        HermitianMatrix::new(self.to_matrix(field, dim)?)
            .map_err(|e| UsdError::Format(format!("{field}: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub dim: usize,
    pub eta0: f64,
    pub eta1: f64,
    pub rho0: MatrixDoc,
    pub rho1: MatrixDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<MatrixDoc>,
}

impl ProblemDoc {
    pub fn from_problem(p: &UsdProblem) -> Self {
        Self {
            dim: p.dim(),
            eta0: p.eta0,
            eta1: p.eta1,
            rho0: MatrixDoc::from_matrix(p.rho0()),
            rho1: MatrixDoc::from_matrix(p.rho1()),
            u: p.gu_involution.as_ref().map(|u| MatrixDoc::from_matrix(u)),
        }
    }

    /// Builds the problem without validating it; `renormalize` divides each
    /// state by its trace first.
    pub fn to_problem(&self, renormalize: bool) -> Result<UsdProblem> {
        if self.dim == 0 {
            return Err(UsdError::Format("dim: must be positive".into()));
        }
        let state = |field: &str, m: &MatrixDoc| -> Result<DensityMatrix> {
            let h = m.to_hermitian(field, self.dim)?;
            if renormalize {
                let tr = h.real_trace();
                if tr.is_nan() || tr <= 0.0 {
                    return Err(UsdError::Format(format!(
                        "{field}: trace {tr:e} cannot be renormalized"
                    )));
                }
                Ok(DensityMatrix::unvalidated(h.scale(1.0 / tr), None))
            } else {
                Ok(DensityMatrix::unvalidated(h, None))
            }
        };
        let mut p = UsdProblem::new(
            state("rho0", &self.rho0)?,
            state("rho1", &self.rho1)?,
            self.eta0,
            self.eta1,
        );
        if let Some(u) = &self.u {
            p = p.with_involution(u.to_hermitian("u", self.dim)?);
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmDoc {
    pub e0: MatrixDoc,
    pub e1: MatrixDoc,
    pub eq: MatrixDoc,
}

impl PovmDoc {
    pub fn from_povm(m: &Povm) -> Self {
        Self {
            e0: MatrixDoc::from_matrix(&m.e0),
            e1: MatrixDoc::from_matrix(&m.e1),
            eq: MatrixDoc::from_matrix(&m.eq),
        }
    }

    pub fn to_povm(&self, dim: usize) -> Result<Povm> {
        Ok(Povm::new(
            self.e0.to_hermitian("povm.e0", dim)?,
            self.e1.to_hermitian("povm.e1", dim)?,
            self.eq.to_hermitian("povm.eq", dim)?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub z: MatrixDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_trace: Option<f64>,
}

impl CertificateDoc {
    pub fn from_certificate(c: &OptimalityCertificate) -> Self {
        Self {
            z: MatrixDoc::from_matrix(&c.z),
            success_trace: Some(c.success_trace),
        }
    }

    pub fn to_certificate(&self, dim: usize) -> Result<OptimalityCertificate> {
        Ok(OptimalityCertificate::new(
            self.z.to_hermitian("certificate.z", dim)?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// Output of `solve`; also accepted as input by `certify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReportDoc {
    pub problem: ProblemDoc,
    pub q_opt: f64,
    pub q0: f64,
    pub q1: f64,
    pub branch: Branch,
    pub povm: PovmDoc,
    pub certificate: Option<CertificateDoc>,
    pub diagnostics: Vec<NamedValue>,
}

impl SolveReportDoc {
    pub fn new(p: &UsdProblem, r: &SolutionReport) -> Self {
        Self {
            problem: ProblemDoc::from_problem(p),
            q_opt: r.q_opt,
            q0: r.q0,
            q1: r.q1,
            branch: r.branch,
            povm: PovmDoc::from_povm(&r.povm),
            certificate: r.certificate.as_ref().map(CertificateDoc::from_certificate),
            diagnostics: r
                .diagnostics
                .iter()
                .map(|(name, value)| NamedValue {
                    name: name.clone(),
                    value: *value,
                })
                .collect(),
        }
    }
}

/// What `certify` reads: a problem, a measurement and optionally a `Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyInputDoc {
    pub problem: ProblemDoc,
    pub povm: PovmDoc,
    #[serde(default)]
    pub certificate: Option<CertificateDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifyReportDoc {
    pub passed: bool,
    /// `true` when `Z` was fitted because the input carried none.
    pub fitted: bool,
    pub success_trace: Option<f64>,
    pub residuals: Option<CertificateResiduals>,
    pub checks: ValidationReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReportDoc {
    pub best_q: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub seed: u64,
    pub lower_bound: f64,
    pub povm: PovmDoc,
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| UsdError::Format(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

/// `%.12g`: twelve significant digits, trailing zeros trimmed, exponent
/// notation outside `[1e-5, 1e12)`.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const SWEEP_HEADER: &str = "mu,q_basis,q_bit,branch_bit,min_eig";

pub fn sweep_csv(rows: &[Bb84SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_sig12(r.mu),
            format_sig12(r.q_basis),
            format_sig12(r.q_bit),
            r.branch_bit,
            format_sig12(r.min_eig)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_matches_printf_g() {
        assert_eq!(format_sig12(0.05), "0.05");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(-0.5), "-0.5");
        assert_eq!(format_sig12(std::f64::consts::PI), "3.14159265359");
        assert_eq!(format_sig12(0.000123456789012345), "0.000123456789012");
        assert_eq!(format_sig12(1.5e-7), "1.5e-07");
        assert_eq!(format_sig12(-2.25e-12), "-2.25e-12");
        assert_eq!(format_sig12(123456789012345.0), "1.23456789012e+14");
    }

    #[test]
    fn matrix_shape_errors_name_the_field() {
        let doc = MatrixDoc {
            re: vec![vec![1.0, 0.0], vec![0.0]],
            im: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        let err = doc.to_matrix("rho0", 2).unwrap_err().to_string();
        assert!(err.contains("rho0.re[1]"), "{err}");
    }

    #[test]
    fn problem_round_trip() {
        let text = r#"{"dim":2,"eta0":0.5,"eta1":0.5,
            "rho0":{"re":[[1,0],[0,0]],"im":[[0,0],[0,0]]},
            "rho1":{"re":[[0,0],[0,1]],"im":[[0,0],[0,0]]}}"#;
        let doc: ProblemDoc = parse_json(text).unwrap();
        let p = doc.to_problem(false).unwrap();
        assert_eq!(ProblemDoc::from_problem(&p), doc);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_json::<ProblemDoc>("{\"dim\": 2,\n \"eta0\": }")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
