//! Social Accounting Matrix: account taxonomy, CSV ingestion, balance
//! checking, RAS balancing, and compliant/non-compliant disaggregation.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Suffixes appended to account names when an account is split by
/// compliance status.
pub const COMPLIANT_SUFFIX: &str = "-c";
pub const NONCOMPLIANT_SUFFIX: &str = "-n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccountKind {
    Activity,
    Commodity,
    Factor,
    Household,
    Government,
    TaxInstrument,
    SavingsInvestment,
    RestOfWorld,
}

impl AccountKind {
    pub fn parse(s: &str) -> Option<AccountKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "activity" => Some(AccountKind::Activity),
            "commodity" => Some(AccountKind::Commodity),
            "factor" => Some(AccountKind::Factor),
            "household" => Some(AccountKind::Household),
            "government" => Some(AccountKind::Government),
            "tax" | "taxinstrument" => Some(AccountKind::TaxInstrument),
            "savinv" | "savingsinvestment" => Some(AccountKind::SavingsInvestment),
            "row" | "restofworld" => Some(AccountKind::RestOfWorld),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AccountKind::Activity => "activity",
            AccountKind::Commodity => "commodity",
            AccountKind::Factor => "factor",
            AccountKind::Household => "household",
            AccountKind::Government => "government",
            AccountKind::TaxInstrument => "tax",
            AccountKind::SavingsInvestment => "savinv",
            AccountKind::RestOfWorld => "row",
        }
    }
}

impl fmt::Display for AccountKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compliance {
    Compliant,
    NonCompliant,
    NotApplicable,
}

impl Compliance {
    pub fn parse(s: &str) -> Option<Compliance> {
        match s.trim().to_ascii_lowercase().as_str() {
            "compliant" => Some(Compliance::Compliant),
            "noncompliant" | "non-compliant" => Some(Compliance::NonCompliant),
            "" | "na" | "n/a" => Some(Compliance::NotApplicable),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Compliance::Compliant => "compliant",
            Compliance::NonCompliant => "noncompliant",
            Compliance::NotApplicable => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partner {
    Eu,
    Rest,
}

impl Partner {
    pub const ALL: [Partner; 2] = [Partner::Eu, Partner::Rest];

    pub fn parse(s: &str) -> Option<Partner> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eu" => Some(Partner::Eu),
            "rest" => Some(Partner::Rest),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Partner::Eu => "eu",
            Partner::Rest => "rest",
        }
    }
}

impl fmt::Display for Partner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Typed identity of a SAM account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountId {
    pub kind: AccountKind,
    pub name: String,
    pub compliance: Compliance,
    pub partner: Option<Partner>,
}

impl AccountId {
    pub fn new(kind: AccountKind, name: impl Into<String>) -> AccountId {
        AccountId {
            kind,
            name: name.into(),
            compliance: Compliance::NotApplicable,
            partner: None,
        }
    }

    pub fn with_compliance(mut self, c: Compliance) -> AccountId {
        self.compliance = c;
        self
    }

    pub fn with_partner(mut self, p: Partner) -> AccountId {
        self.partner = Some(p);
        self
    }
}

#[derive(Debug, Error)]
pub enum SamError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate cell ({row}, {col})")]
    DuplicateCell { row: String, col: String },
    #[error("duplicate account declaration '{0}'")]
    DuplicateAccount(String),
    #[error("unknown account '{name}' at line {line}")]
    UnknownAccount { name: String, line: usize },
    #[error("RAS did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("account '{0}' has an all-zero {1} but a nonzero counterpart")]
    ZeroLine(String, &'static str),
    #[error("share {share} for account '{account}' is outside [0, 1]")]
    ShareOutOfRange { account: String, share: f64 },
    #[error("derived product '{0}' has no raw-material linkage")]
    MissingLinkage(String),
    #[error("account '{0}' not found")]
    NoSuchAccount(String),
}

/// One account's imbalance in a balance check.
#[derive(Debug, Clone, Serialize)]
pub struct AccountImbalance {
    pub account: String,
    pub row_sum: f64,
    pub col_sum: f64,
    pub imbalance: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub per_account: Vec<AccountImbalance>,
    pub max_relative_imbalance: f64,
    pub balanced: bool,
    pub tolerance: f64,
}

/// Map from account name to the share of its flows that is
/// non-compliant.
pub type NonCompliantShareTable = HashMap<String, f64>;

/// Map from a derived product account to the account whose share
/// drives its split.
pub type RawMaterialMap = HashMap<String, String>;

/// Square flow ledger over the typed account taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialAccountingMatrix {
    accounts: Vec<AccountId>,
    /// Row-major: flows[row * n + col] is income of `row` paid by `col`.
    flows: Vec<f64>,
    index: HashMap<String, usize>,
    pub base_year: i32,
}

impl SocialAccountingMatrix {
    pub fn new(accounts: Vec<AccountId>, base_year: i32) -> Result<Self, SamError> {
        let mut index = HashMap::new();
        for (i, a) in accounts.iter().enumerate() {
            if index.insert(a.name.clone(), i).is_some() {
                return Err(SamError::DuplicateAccount(a.name.clone()));
            }
        }
        let n = accounts.len();
        Ok(SocialAccountingMatrix {
            accounts,
            flows: vec![0.0; n * n],
            index,
            base_year,
        })
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn accounts(&self) -> &[AccountId] {
        &self.accounts
    }

    pub fn account(&self, i: usize) -> &AccountId {
        &self.accounts[i]
    }

    pub fn account_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require_index(&self, name: &str) -> Result<usize, SamError> {
        self.account_index(name)
            .ok_or_else(|| SamError::NoSuchAccount(name.to_string()))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.flows[row * self.accounts.len() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let n = self.accounts.len();
        self.flows[row * n + col] = value;
    }

    /// Flow by account name; zero for missing pairs.
    pub fn flow(&self, row: &str, col: &str) -> f64 {
        match (self.account_index(row), self.account_index(col)) {
            (Some(r), Some(c)) => self.get(r, c),
            _ => 0.0,
        }
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        let n = self.accounts.len();
        self.flows[row * n..(row + 1) * n].iter().sum()
    }

    pub fn col_sum(&self, col: usize) -> f64 {
        (0..self.accounts.len()).map(|r| self.get(r, col)).sum()
    }

    pub fn accounts_of_kind(&self, kind: AccountKind) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.accounts[i].kind == kind)
            .collect()
    }

    /// Reports the per-account |row − col| imbalance relative to
    /// max(1, row_sum).
    pub fn check_balance(&self, tol: f64) -> BalanceReport {
        assert!(tol > 0.0, "tolerance must be positive");
        let mut per_account = Vec::with_capacity(self.len());
        let mut max_rel = 0.0f64;
        for i in 0..self.len() {
            let rs = self.row_sum(i);
            let cs = self.col_sum(i);
            let imb = (rs - cs).abs();
            let rel = imb / rs.max(1.0);
            max_rel = max_rel.max(rel);
            per_account.push(AccountImbalance {
                account: self.accounts[i].name.clone(),
                row_sum: rs,
                col_sum: cs,
                imbalance: imb,
                relative: rel,
            });
        }
        BalanceReport {
            per_account,
            max_relative_imbalance: max_rel,
            balanced: max_rel <= tol,
            tolerance: tol,
        }
    }

    /// Biproportional (RAS) scaling toward row/col targets set to the
    /// average of the current row and column sums. Zero cells stay zero.
    pub fn ras_balance(&self, tol: f64, max_iter: usize) -> Result<Self, SamError> {
        let n = self.len();
        let mut targets = vec![0.0; n];
        for i in 0..n {
            let rs = self.row_sum(i);
            let cs = self.col_sum(i);
            if rs == 0.0 && cs != 0.0 {
                return Err(SamError::ZeroLine(self.accounts[i].name.clone(), "row"));
            }
            if cs == 0.0 && rs != 0.0 {
                return Err(SamError::ZeroLine(self.accounts[i].name.clone(), "column"));
            }
            targets[i] = 0.5 * (rs + cs);
        }
        let mut out = self.clone();
        if out.check_balance(tol).balanced {
            return Ok(out);
        }
        for _ in 0..max_iter {
            // Row scaling pass.
            for r in 0..n {
                let rs = out.row_sum(r);
                if rs > 0.0 {
                    let s = targets[r] / rs;
                    for c in 0..n {
                        let v = out.get(r, c);
                        if v != 0.0 {
                            out.set(r, c, v * s);
                        }
                    }
                }
            }
            // Column scaling pass.
            for c in 0..n {
                let cs = out.col_sum(c);
                if cs > 0.0 {
                    let s = targets[c] / cs;
                    for r in 0..n {
                        let v = out.get(r, c);
                        if v != 0.0 {
                            out.set(r, c, v * s);
                        }
                    }
                }
            }
            if out.check_balance(tol).balanced {
                return Ok(out);
            }
        }
        Err(SamError::NotConverged(max_iter))
    }

    /// Splits each account named in `shares` (after resolving indirect
    /// products through `linkage`) into a compliant and a non-compliant
    /// twin. Cells between two split accounts with equal shares are
    /// routed diagonally (compliant to compliant); cells with unequal
    /// shares use the rank-1 outer-product split, which preserves both
    /// marginals and hence balance.
    pub fn disaggregate_accounts(
        &self,
        shares: &NonCompliantShareTable,
        linkage: &RawMaterialMap,
    ) -> Result<Self, SamError> {
        // Resolve the effective share of every account to be split.
        let mut effective: HashMap<String, f64> = HashMap::new();
        for (acc, &s) in shares {
            if !(0.0..=1.0).contains(&s) {
                return Err(SamError::ShareOutOfRange {
                    account: acc.clone(),
                    share: s,
                });
            }
            effective.insert(acc.clone(), s);
        }
        for derived in linkage.keys() {
            let mut target = derived.as_str();
            let mut hops = 0;
            loop {
                match linkage.get(target) {
                    Some(next) => {
                        target = next;
                        hops += 1;
                        if hops > linkage.len() {
                            return Err(SamError::MissingLinkage(format!(
                                "cycle involving '{derived}'"
                            )));
                        }
                    }
                    None => break,
                }
            }
            let s = *effective
                .get(target)
                .ok_or_else(|| SamError::MissingLinkage(derived.clone()))?;
            effective.insert(derived.clone(), s);
        }
        for acc in effective.keys() {
            if self.account_index(acc).is_none() {
                return Err(SamError::NoSuchAccount(acc.clone()));
            }
        }

        // New account list: split accounts become twins, in place.
        let mut new_accounts = Vec::new();
        // old index -> (compliant new index, noncompliant new index or same)
        let mut map: Vec<(usize, usize)> = Vec::with_capacity(self.len());
        for a in &self.accounts {
            if let Some(_s) = effective.get(&a.name) {
                let ic = new_accounts.len();
                new_accounts.push(AccountId {
                    kind: a.kind,
                    name: format!("{}{}", a.name, COMPLIANT_SUFFIX),
                    compliance: Compliance::Compliant,
                    partner: a.partner,
                });
                let inn = new_accounts.len();
                new_accounts.push(AccountId {
                    kind: a.kind,
                    name: format!("{}{}", a.name, NONCOMPLIANT_SUFFIX),
                    compliance: Compliance::NonCompliant,
                    partner: a.partner,
                });
                map.push((ic, inn));
            } else {
                let i = new_accounts.len();
                new_accounts.push(a.clone());
                map.push((i, i));
            }
        }
        let mut out = SocialAccountingMatrix::new(new_accounts, self.base_year)?;
        for r in 0..self.len() {
            let sr = effective.get(&self.accounts[r].name).copied();
            for c in 0..self.len() {
                let v = self.get(r, c);
                if v == 0.0 {
                    continue;
                }
                let sc = effective.get(&self.accounts[c].name).copied();
                let (rc, rn) = map[r];
                let (cc, cn) = map[c];
                match (sr, sc) {
                    (None, None) => out.set(rc, cc, out.get(rc, cc) + v),
                    (Some(s), None) => {
                        out.set(rc, cc, out.get(rc, cc) + v * (1.0 - s));
                        out.set(rn, cc, out.get(rn, cc) + v * s);
                    }
                    (None, Some(s)) => {
                        out.set(rc, cc, out.get(rc, cc) + v * (1.0 - s));
                        out.set(rc, cn, out.get(rc, cn) + v * s);
                    }
                    (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {
                        out.set(rc, cc, out.get(rc, cc) + v * (1.0 - a));
                        out.set(rn, cn, out.get(rn, cn) + v * a);
                    }
                    (Some(a), Some(b)) => {
                        out.set(rc, cc, out.get(rc, cc) + v * (1.0 - a) * (1.0 - b));
                        out.set(rc, cn, out.get(rc, cn) + v * (1.0 - a) * b);
                        out.set(rn, cc, out.get(rn, cc) + v * a * (1.0 - b));
                        out.set(rn, cn, out.get(rn, cn) + v * a * b);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Parses the account-declaration block and long-format flow records.
    pub fn load(path: &Path) -> Result<Self, SamError> {
        let file = std::fs::File::open(path).map_err(|e| SamError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let reader = BufReader::new(file);
        let mut accounts: Vec<AccountId> = Vec::new();
        let mut base_year = 2019;
        let mut records: Vec<(usize, String, String, f64)> = Vec::new();
        let mut seen_header = false;
        let mut names: HashMap<String, ()> = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SamError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(decl) = trimmed.strip_prefix('#') {
                let fields: Vec<&str> = decl.split(',').map(str::trim).collect();
                if fields.first() == Some(&"account") {
                    continue; // declaration block header
                }
                if fields.first() == Some(&"base_year") {
                    base_year = fields
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| SamError::MalformedRecord {
                            line: lineno,
                            reason: "invalid base_year".into(),
                        })?;
                    continue;
                }
                if fields.len() < 2 {
                    return Err(SamError::MalformedRecord {
                        line: lineno,
                        reason: "account declaration needs name,kind[,compliance[,partner]]"
                            .into(),
                    });
                }
                let name = fields[0].to_string();
                if names.insert(name.clone(), ()).is_some() {
                    return Err(SamError::DuplicateAccount(name));
                }
                let kind =
                    AccountKind::parse(fields[1]).ok_or_else(|| SamError::MalformedRecord {
                        line: lineno,
                        reason: format!("unknown account kind '{}'", fields[1]),
                    })?;
                let compliance = Compliance::parse(fields.get(2).copied().unwrap_or(""))
                    .ok_or_else(|| SamError::MalformedRecord {
                        line: lineno,
                        reason: format!("unknown compliance '{}'", fields[2]),
                    })?;
                let partner = match fields.get(3).copied().unwrap_or("") {
                    "" => None,
                    p => Some(Partner::parse(p).ok_or_else(|| SamError::MalformedRecord {
                        line: lineno,
                        reason: format!("unknown partner '{p}'"),
                    })?),
                };
                accounts.push(AccountId {
                    kind,
                    name,
                    compliance,
                    partner,
                });
                continue;
            }
            if !seen_header {
                if trimmed != "row_account,col_account,value" {
                    return Err(SamError::MalformedRecord {
                        line: lineno,
                        reason: "expected header 'row_account,col_account,value'".into(),
                    });
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(SamError::MalformedRecord {
                    line: lineno,
                    reason: "expected 3 fields".into(),
                });
            }
            let value: f64 = fields[2].parse().map_err(|_| SamError::MalformedRecord {
                line: lineno,
                reason: format!("non-numeric value '{}'", fields[2]),
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(SamError::MalformedRecord {
                    line: lineno,
                    reason: format!("flow value {value} must be finite and non-negative"),
                });
            }
            records.push((lineno, fields[0].to_string(), fields[1].to_string(), value));
        }
        let mut sam = SocialAccountingMatrix::new(accounts, base_year)?;
        let mut filled: HashMap<(usize, usize), ()> = HashMap::new();
        for (lineno, row, col, value) in records {
            let r = sam
                .account_index(&row)
                .ok_or_else(|| SamError::UnknownAccount {
                    name: row.clone(),
                    line: lineno,
                })?;
            let c = sam
                .account_index(&col)
                .ok_or_else(|| SamError::UnknownAccount {
                    name: col.clone(),
                    line: lineno,
                })?;
            if filled.insert((r, c), ()).is_some() {
                return Err(SamError::DuplicateCell { row, col });
            }
            sam.set(r, c, value);
        }
        Ok(sam)
    }

    /// Writes declarations plus all nonzero cells in row-major order.
    pub fn save(&self, path: &Path) -> Result<(), SamError> {
        let mut out = String::new();
        out.push_str("#account,kind,compliance,partner\n");
        out.push_str(&format!("#base_year,{}\n", self.base_year));
        for a in &self.accounts {
            out.push_str(&format!(
                "#{},{},{},{}\n",
                a.name,
                a.kind.as_str(),
                a.compliance.as_str(),
                a.partner.map(|p| p.as_str()).unwrap_or("")
            ));
        }
        out.push_str("row_account,col_account,value\n");
        for r in 0..self.len() {
            for c in 0..self.len() {
                let v = self.get(r, c);
                if v != 0.0 {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        self.accounts[r].name, self.accounts[c].name, v
                    ));
                }
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| SamError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        file.write_all(out.as_bytes()).map_err(|e| SamError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy_accounts() -> Vec<AccountId> {
        vec![
            AccountId::new(AccountKind::Activity, "a1"),
            AccountId::new(AccountKind::Commodity, "c1"),
            AccountId::new(AccountKind::Household, "h1"),
        ]
    }

    fn balanced_toy() -> SocialAccountingMatrix {
        // a1 -> c1 -> h1 -> a1 circular flow of 10.
        let mut sam = SocialAccountingMatrix::new(toy_accounts(), 2019).unwrap();
        sam.set(0, 1, 10.0);
        sam.set(1, 2, 10.0);
        sam.set(2, 0, 10.0);
        sam
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_minimal_file() {
        let f = write_temp(
            "#account,kind,compliance,partner\n\
             #a1,activity,,\n#c1,commodity,,\n#h1,household,,\n\
             row_account,col_account,value\n\
             a1,c1,10\nc1,h1,10\nh1,a1,10\n",
        );
        let sam = SocialAccountingMatrix::load(f.path()).unwrap();
        assert_eq!(sam.len(), 3);
        assert_eq!(sam.flow("a1", "c1"), 10.0);
        assert_eq!(sam.flow("a1", "h1"), 0.0); // missing cell is zero
        assert!(sam.check_balance(1e-9).balanced);
    }

    #[test]
    fn load_rejects_non_numeric_value() {
        let f = write_temp(
            "#a1,activity,,\n#c1,commodity,,\n\
             row_account,col_account,value\na1,c1,abc\n",
        );
        let err = SocialAccountingMatrix::load(f.path()).unwrap_err();
        assert!(matches!(err, SamError::MalformedRecord { .. }));
    }

    #[test]
    fn load_rejects_unknown_account() {
        let f = write_temp(
            "#a1,activity,,\n\
             row_account,col_account,value\na1,c9,1\n",
        );
        let err = SocialAccountingMatrix::load(f.path()).unwrap_err();
        assert!(matches!(err, SamError::UnknownAccount { .. }));
    }

    #[test]
    fn load_rejects_duplicate_cell() {
        let f = write_temp(
            "#a1,activity,,\n#c1,commodity,,\n\
             row_account,col_account,value\na1,c1,1\na1,c1,2\n",
        );
        let err = SocialAccountingMatrix::load(f.path()).unwrap_err();
        assert!(matches!(err, SamError::DuplicateCell { .. }));
    }

    #[test]
    fn save_load_round_trip() {
        let sam = balanced_toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sam.csv");
        sam.save(&path).unwrap();
        let loaded = SocialAccountingMatrix::load(&path).unwrap();
        assert_eq!(sam, loaded);
    }

    #[test]
    fn check_balance_perfect() {
        let rep = balanced_toy().check_balance(1e-9);
        assert!(rep.balanced);
        assert_eq!(rep.max_relative_imbalance, 0.0);
    }

    #[test]
    fn check_balance_perturbed() {
        // +1.0 on a 100.0 row: imbalance 0.01 on two accounts.
        let mut sam = SocialAccountingMatrix::new(toy_accounts(), 2019).unwrap();
        sam.set(0, 1, 100.0);
        sam.set(1, 2, 100.0);
        sam.set(2, 0, 100.0);
        sam.set(0, 1, 101.0);
        let rep = sam.check_balance(1e-3);
        assert!(!rep.balanced);
        let imbalanced: Vec<_> = rep
            .per_account
            .iter()
            .filter(|a| a.relative > 1e-12)
            .collect();
        assert_eq!(imbalanced.len(), 2);
        for a in imbalanced {
            assert!((a.relative - 0.01).abs() < 1e-4, "{}", a.relative);
        }
    }

    #[test]
    fn check_balance_empty_sam() {
        let sam = SocialAccountingMatrix::new(vec![], 2019).unwrap();
        assert!(sam.check_balance(1e-9).balanced);
    }

    #[test]
    fn ras_fixed_point_on_balanced_input() {
        let sam = balanced_toy();
        let out = sam.ras_balance(1e-9, 50).unwrap();
        assert_eq!(sam, out);
    }

    #[test]
    fn ras_textbook_two_by_two() {
        // [[1,2],[3,4]]: targets are the averages of row and column
        // sums, (r1,r2)=(3.5,6.5) vs columns (3,7) averaged per account.
        let accounts = vec![
            AccountId::new(AccountKind::Activity, "x"),
            AccountId::new(AccountKind::Activity, "y"),
        ];
        let mut sam = SocialAccountingMatrix::new(accounts, 2019).unwrap();
        sam.set(0, 0, 1.0);
        sam.set(0, 1, 2.0);
        sam.set(1, 0, 3.0);
        sam.set(1, 1, 4.0);
        let out = sam.ras_balance(1e-10, 500).unwrap();
        assert!(out.check_balance(1e-10).balanced);

        // Independent RAS oracle on raw vectors.
        let mut m = [[1.0f64, 2.0], [3.0, 4.0]];
        let t = [0.5 * (3.0 + 4.0), 0.5 * (7.0 + 6.0)];
        for _ in 0..1000 {
            for r in 0..2 {
                let rs: f64 = m[r].iter().sum();
                for c in 0..2 {
                    m[r][c] *= t[r] / rs;
                }
            }
            for c in 0..2 {
                let cs = m[0][c] + m[1][c];
                for row in m.iter_mut() {
                    row[c] *= t[c] / cs;
                }
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                assert!(
                    (out.get(r, c) - m[r][c]).abs() < 1e-8,
                    "cell ({r},{c}): {} vs oracle {}",
                    out.get(r, c),
                    m[r][c]
                );
            }
        }
    }

    #[test]
    fn ras_zero_line_error() {
        let accounts = vec![
            AccountId::new(AccountKind::Activity, "x"),
            AccountId::new(AccountKind::Activity, "y"),
        ];
        let mut sam = SocialAccountingMatrix::new(accounts, 2019).unwrap();
        // Row x all zero, column x nonzero.
        sam.set(1, 0, 3.0);
        sam.set(1, 1, 4.0);
        let err = sam.ras_balance(1e-9, 10).unwrap_err();
        assert!(matches!(err, SamError::ZeroLine(_, _)));
    }

    #[test]
    fn disaggregate_share_zero_gives_empty_twin() {
        let sam = balanced_toy();
        let mut shares = NonCompliantShareTable::new();
        shares.insert("c1".into(), 0.0);
        let out = sam
            .disaggregate_accounts(&shares, &RawMaterialMap::new())
            .unwrap();
        let cn = out.account_index("c1-n").unwrap();
        assert_eq!(out.row_sum(cn), 0.0);
        assert_eq!(out.col_sum(cn), 0.0);
        let cc = out.account_index("c1-c").unwrap();
        assert_eq!(out.get(cc, out.account_index("h1").unwrap()), 10.0);
    }

    #[test]
    fn disaggregate_documented_share() {
        // flow 100 with share 0.0284 -> 2.84 / 97.16 on every cell.
        let mut sam = SocialAccountingMatrix::new(toy_accounts(), 2019).unwrap();
        sam.set(0, 1, 100.0);
        sam.set(1, 2, 100.0);
        sam.set(2, 0, 100.0);
        let mut shares = NonCompliantShareTable::new();
        shares.insert("c1".into(), 0.0284);
        let out = sam
            .disaggregate_accounts(&shares, &RawMaterialMap::new())
            .unwrap();
        assert!((out.flow("c1-n", "h1") - 2.84).abs() < 1e-12);
        assert!((out.flow("c1-c", "h1") - 97.16).abs() < 1e-12);
        assert!((out.flow("a1", "c1-n") - 2.84).abs() < 1e-12);
        assert!(out.check_balance(1e-12).balanced);
    }

    #[test]
    fn disaggregate_linked_product_uses_raw_material_share() {
        // soybean-oil linked to soybeans with share 0.25.
        let accounts = vec![
            AccountId::new(AccountKind::Commodity, "soybeans"),
            AccountId::new(AccountKind::Commodity, "soybean-oil"),
            AccountId::new(AccountKind::Household, "h"),
        ];
        let mut sam = SocialAccountingMatrix::new(accounts, 2019).unwrap();
        sam.set(0, 1, 40.0); // soybeans used by soybean-oil
        sam.set(1, 2, 40.0);
        sam.set(2, 0, 40.0);
        let mut shares = NonCompliantShareTable::new();
        shares.insert("soybeans".into(), 0.25);
        let mut linkage = RawMaterialMap::new();
        linkage.insert("soybean-oil".into(), "soybeans".into());
        let out = sam.disaggregate_accounts(&shares, &linkage).unwrap();
        // Equal shares route diagonally; each cell's pieces sum to the
        // original.
        assert!((out.flow("soybeans-n", "soybean-oil-n") - 10.0).abs() < 1e-12);
        assert!((out.flow("soybeans-c", "soybean-oil-c") - 30.0).abs() < 1e-12);
        assert!((out.flow("soybean-oil-n", "h") - 10.0).abs() < 1e-12);
        assert!(out.check_balance(1e-12).balanced);
    }

    #[test]
    fn disaggregate_rejects_bad_share() {
        let sam = balanced_toy();
        let mut shares = NonCompliantShareTable::new();
        shares.insert("c1".into(), 1.5);
        let err = sam
            .disaggregate_accounts(&shares, &RawMaterialMap::new())
            .unwrap_err();
        assert!(matches!(err, SamError::ShareOutOfRange { .. }));
    }

    #[test]
    fn disaggregate_missing_linkage_target() {
        let sam = balanced_toy();
        let mut linkage = RawMaterialMap::new();
        linkage.insert("c1".into(), "nothere".into());
        let err = sam
            .disaggregate_accounts(&NonCompliantShareTable::new(), &linkage)
            .unwrap_err();
        assert!(matches!(err, SamError::MissingLinkage(_)));
    }
}
