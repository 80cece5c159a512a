use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use super::confidence_interval;
use crate::error::{Error, Result};
use crate::io::json_number;
use crate::population::ObservedData;

/// Estimator tags accepted in configuration and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dim,
    Adj,
    Dc,
    AdjOracle,
    DcOracle,
    DimHajek,
    AdjHajek,
    DcHajek,
    AdjOracleHajek,
    DcOracleHajek,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Dim,
        Method::Adj,
        Method::Dc,
        Method::AdjOracle,
        Method::DcOracle,
        Method::DimHajek,
        Method::AdjHajek,
        Method::DcHajek,
        Method::AdjOracleHajek,
        Method::DcOracleHajek,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dim => "dim",
            Method::Adj => "adj",
            Method::Dc => "dc",
            Method::AdjOracle => "adj_oracle",
            Method::DcOracle => "dc_oracle",
            Method::DimHajek => "dim_hajek",
            Method::AdjHajek => "adj_hajek",
            Method::DcHajek => "dc_hajek",
            Method::AdjOracleHajek => "adj_oracle_hajek",
            Method::DcOracleHajek => "dc_oracle_hajek",
        }
    }

    /// Whether the method reads the population (both potentials).
    pub fn is_oracle(self) -> bool {
        matches!(self, Method::AdjOracle | Method::DcOracle | Method::AdjOracleHajek | Method::DcOracleHajek)
    }

    /// Whether the method needs a regression fit on observed data.
    pub fn needs_fit(self) -> bool {
        matches!(self, Method::Adj | Method::Dc | Method::AdjHajek | Method::DcHajek)
    }

    /// Whether the method uses the decorrelation quadruple.
    pub fn uses_quadruples(self) -> bool {
        matches!(self, Method::Dc | Method::DcOracle | Method::DcHajek | Method::DcOracleHajek)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// One estimator evaluated on one realization.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub point: f64,
    pub variance_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub alpha_level: f64,
    pub n: usize,
}

impl EstimateReport {
    /// Report with an interval when a variance estimate is available.
    pub fn new(method: impl Into<String>, point: f64, variance_hat: Option<f64>, n: usize, alpha: f64) -> Result<Self> {
        let (ci_low, ci_high) = match variance_hat {
            Some(v) => {
                let (lo, hi) = confidence_interval(point, v, n, alpha)?;
                (Some(lo), Some(hi))
            }
            None => (None, None),
        };
        Ok(Self { method: method.into(), point, variance_hat, ci_low, ci_high, alpha_level: alpha, n })
    }

    pub fn covers(&self, target: f64) -> Option<bool> {
        Some(self.ci_low? <= target && target <= self.ci_high?)
    }

    pub fn ci_length(&self) -> Option<f64> {
        Some(self.ci_high? - self.ci_low?)
    }

    /// Single-line JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

impl Serialize for EstimateReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let opt = |v: Option<f64>| v.map(json_number);
        let mut st = s.serialize_struct("EstimateReport", 7)?;
        st.serialize_field("method", &self.method)?;
        st.serialize_field("point", &json_number(self.point))?;
        st.serialize_field("variance_hat", &opt(self.variance_hat))?;
        st.serialize_field("ci_low", &opt(self.ci_low))?;
        st.serialize_field("ci_high", &opt(self.ci_high))?;
        st.serialize_field("alpha_level", &json_number(self.alpha_level))?;
        st.serialize_field("n", &self.n)?;
        st.end()
    }
}

/// Slot for estimators computed outside this crate (for example a debiased
/// regression-adjustment estimator with its own standard error). The
/// harness calls it once per replication with the observed data.
pub trait ExternalBaseline: Send + Sync {
    fn name(&self) -> &str;

    /// Point estimate and, optionally, a variance estimate on the `n`-scale.
    fn estimate(&self, data: &ObservedData, pi_t: f64, rep: usize) -> Result<(f64, Option<f64>)>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let r = EstimateReport::new("dc", 0.1 + 0.2, Some(1.0 / 3.0), 1000, 0.05).unwrap();
        let line = r.to_json();
        assert!(!line.contains('\n'));
        assert!(line.contains("\"point\":3.0000000000000004e-1"), "{line}");
        let back: EstimateReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn absent_variance_serializes_as_null() {
        let r = EstimateReport::new("dc_oracle", 1.5, None, 10, 0.05).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v["variance_hat"].is_null() && v["ci_low"].is_null() && v["ci_high"].is_null());
        assert_eq!(r.covers(1.5), None);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("lei_ding".parse::<Method>().is_err());
    }
}
