// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub query_id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
}

impl QAItem {
    pub fn new<S: Into<String>>(
        query_id: impl Into<String>,
        question: impl Into<String>,
        gold_answers: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            query_id: query_id.into(),
            question: question.into(),
            gold_answers: gold_answers.into_iter().map(Into::into).collect(),
        }
    }
}

// Accepts the open-domain NQ layout (`question` + `answer`) as well as the
// native one; a missing query_id falls back to the 1-based line number.
#[derive(Deserialize)]
struct RawQa {
    query_id: Option<String>,
    #[serde(alias = "id")]
    qid: Option<serde_json::Value>,
    question: Option<String>,
    #[serde(alias = "answer", alias = "answers")]
    gold_answers: Option<Vec<String>>,
}

pub fn load_qa(path: &Path) -> Result<Vec<QAItem>> {
    let file = File::open(path).map_err(|_| Error::Missing {
        what: "QA file",
        name: path.display().to_string(),
    })?;
    parse_qa(BufReader::new(file))
}

pub fn parse_qa<R: BufRead>(reader: R) -> Result<Vec<QAItem>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.ctx(|| "reading QA file".to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            line: line_no,
            reason,
        };
        let raw: RawQa = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let query_id = raw
            .query_id
            .or_else(|| {
                raw.qid.map(|v| match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                })
            })
            .unwrap_or_else(|| line_no.to_string());
        let question = raw
            .question
            .filter(|q| !q.trim().is_empty())
            .ok_or_else(|| parse_err("missing question".into()))?;
        let gold_answers = raw.gold_answers.unwrap_or_default();
        if gold_answers.is_empty() {
            return Err(parse_err("gold_answers is empty".into()));
        }
        if gold_answers.iter().any(|a| a.trim().is_empty()) {
            return Err(parse_err("gold answer alias is blank".into()));
        }
        if !seen.insert(query_id.clone()) {
            return Err(Error::Conflict {
                what: "query_id",
                key: query_id,
            });
        }
        items.push(QAItem {
            query_id,
            question,
            gold_answers,
        });
    }
    Ok(items)
}
