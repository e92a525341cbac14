//! Question templating: the built-in prompt-template table, slot
//! expansion, per-image QA generation, and per-task prompt selection.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::lexicon::{PairQuery, Pos};
use crate::text::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Noun,
    Adjective,
    Verb,
    EntireQuery,
}

impl AnswerType {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnswerType::Noun => "noun",
            AnswerType::Adjective => "adjective",
            AnswerType::Verb => "verb",
            AnswerType::EntireQuery => "entire_query",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "noun" => Some(AnswerType::Noun),
            "adjective" => Some(AnswerType::Adjective),
            "verb" => Some(AnswerType::Verb),
            "entire_query" => Some(AnswerType::EntireQuery),
            _ => None,
        }
    }
}

/// A question pattern with substitution slots DT, OBJ, WH, CMD, ADJ_TYPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QATemplate {
    pub answer_type: AnswerType,
    pub pattern: String,
    pub requires_object_slot: bool,
}

impl QATemplate {
    pub fn new(answer_type: AnswerType, pattern: &str) -> Self {
        QATemplate {
            answer_type,
            pattern: pattern.to_string(),
            requires_object_slot: pattern.contains("OBJ"),
        }
    }
}

/// The built-in table: 6 noun, 3 adjective, 17 verb, and 2 entire-query
/// patterns (28 total).
pub const BUILTIN_TEMPLATES: &[(AnswerType, &str)] = &[
    (AnswerType::Noun, "What is DT OBJ?"),
    (AnswerType::Noun, "What OBJ is this?"),
    (AnswerType::Noun, "What OBJ is that?"),
    (AnswerType::Noun, "Classify DT OBJ."),
    (AnswerType::Noun, "Specify DT OBJ."),
    (AnswerType::Noun, "Name DT OBJ."),
    (AnswerType::Adjective, "WH ADJ_TYPE is DT OBJ?"),
    (AnswerType::Adjective, "What is the ADJ_TYPE of DT OBJ?"),
    (AnswerType::Adjective, "CMD the ADJ_TYPE of DT OBJ."),
    (AnswerType::Verb, "What is DT OBJ doing?"),
    (AnswerType::Verb, "What action is DT OBJ taking?"),
    (AnswerType::Verb, "What action is DT OBJ performing?"),
    (AnswerType::Verb, "What action is DT OBJ carrying out?"),
    (AnswerType::Verb, "What action is DT OBJ doing?"),
    (AnswerType::Verb, "What activity is DT OBJ doing?"),
    (AnswerType::Verb, "CMD the action being taken by DT OBJ."),
    (AnswerType::Verb, "CMD the activity DT OBJ is doing."),
    (AnswerType::Verb, "CMD what DT OBJ is doing."),
    (AnswerType::Verb, "What is being done?"),
    (AnswerType::Verb, "WH action is being done?"),
    (AnswerType::Verb, "WH activity is being done?"),
    (AnswerType::Verb, "WH activity is this?"),
    (AnswerType::Verb, "WH action is being taken?"),
    (AnswerType::Verb, "CMD the activity being done."),
    (AnswerType::Verb, "CMD the action being done."),
    (AnswerType::Verb, "CMD the action being taken."),
    (AnswerType::EntireQuery, "What is this?"),
    (AnswerType::EntireQuery, "What is that?"),
];

/// The template table plus its slot substitution sets.
#[derive(Debug, Clone)]
pub struct TemplateTable {
    pub templates: Vec<QATemplate>,
    pub dt: Vec<String>,
    pub obj: Vec<String>,
    pub wh: Vec<String>,
    pub cmd: Vec<String>,
}

impl Default for TemplateTable {
    fn default() -> Self {
        TemplateTable {
            templates: BUILTIN_TEMPLATES
                .iter()
                .map(|(ty, p)| QATemplate::new(*ty, p))
                .collect(),
            dt: vec!["the".into(), "this".into(), "that".into()],
            obj: vec!["entity".into(), "object".into()],
            wh: vec!["What".into(), "Which".into()],
            cmd: vec![
                "Describe".into(),
                "State".into(),
                "Specify".into(),
                "Name".into(),
            ],
        }
    }
}

/// How to fill the OBJ slot: the generic substitution set, or the query's
/// noun for object-specified questions.
#[derive(Debug, Clone)]
pub enum ObjSlot<'a> {
    Generic,
    Noun(&'a str),
}

impl TemplateTable {
    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    /// Load an override table from TSV `answer_type<TAB>pattern`.
    pub fn load_tsv(path: &Path) -> Result<Self, PipelineError> {
        let content = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut table = TemplateTable::default();
        table.templates.clear();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (ty, pattern) = line.split_once('\t').ok_or_else(|| {
                PipelineError::invalid(format!("template tsv line {}: missing tab", i + 1))
            })?;
            let ty = AnswerType::parse(ty).ok_or_else(|| {
                PipelineError::invalid(format!(
                    "template tsv line {}: unknown answer type {ty:?}",
                    i + 1
                ))
            })?;
            table.templates.push(QATemplate::new(ty, pattern));
        }
        Ok(table)
    }

    /// Render the table as TSV, one `answer_type<TAB>pattern` per line.
    pub fn render_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.templates {
            out.push_str(t.answer_type.as_str());
            out.push('\t');
            out.push_str(&t.pattern);
            out.push('\n');
        }
        out
    }

    /// Expand a template over the full cross-product of its slot
    /// substitutions. `ADJ_TYPE` is replaced by `adj_type`, which must be
    /// present for adjective templates.
    pub fn expand_template(
        &self,
        tpl: &QATemplate,
        obj: &ObjSlot,
        adj_type: Option<&str>,
    ) -> Result<Vec<String>, PipelineError> {
        let mut expansions = vec![tpl.pattern.clone()];
        if tpl.pattern.contains("ADJ_TYPE") {
            let ty = adj_type.ok_or_else(|| {
                PipelineError::invalid(format!(
                    "template {:?} needs an adjective type",
                    tpl.pattern
                ))
            })?;
            for s in &mut expansions {
                *s = s.replacen("ADJ_TYPE", ty, 1);
            }
        }
        let obj_values: Vec<String> = match obj {
            ObjSlot::Generic => self.obj.clone(),
            ObjSlot::Noun(n) => vec![n.to_string()],
        };
        for (slot, values) in [
            ("WH", &self.wh),
            ("CMD", &self.cmd),
            ("DT", &self.dt),
            ("OBJ", &obj_values),
        ] {
            if !expansions[0].contains(slot) {
                continue;
            }
            if values.is_empty() {
                return Err(PipelineError::invalid(format!(
                    "empty substitution set for slot {slot}"
                )));
            }
            expansions = expansions
                .iter()
                .flat_map(|s| values.iter().map(move |v| s.replacen(slot, v, 1)))
                .collect();
        }
        Ok(expansions)
    }

    /// All question strings available for one answer type of a query.
    fn question_pool(
        &self,
        answer_type: AnswerType,
        obj: &ObjSlot,
        adj_type: Option<&str>,
    ) -> Result<Vec<String>, PipelineError> {
        let object_specified = matches!(obj, ObjSlot::Noun(_));
        let mut pool = Vec::new();
        for tpl in self.templates.iter().filter(|t| t.answer_type == answer_type) {
            // Verb/adjective templates without OBJ cannot specify the noun.
            if object_specified && !tpl.requires_object_slot {
                continue;
            }
            pool.extend(self.expand_template(tpl, obj, adj_type)?);
        }
        Ok(pool)
    }
}

/// A templated question/answer pair bound to an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub answer: String,
    pub answer_type: AnswerType,
    pub query_id: String,
    pub query_text: String,
}

/// Generate the QA examples for one query-image pair:
/// one noun-answer QA, two modifier-answer QAs for adj/verb queries
/// (generic and object-specified), and one entire-query QA. The question
/// for each is drawn uniformly from its pool, keyed by
/// (query id, image ref, slot) so regeneration is stable under reordering.
pub fn generate_qas(
    table: &TemplateTable,
    query: &PairQuery,
    image_ref: &str,
    rng_seed: u64,
) -> Result<Vec<QAExample>, PipelineError> {
    let query_id = query.id();
    let mut out = Vec::new();

    let mut emit = |slot: &str,
                    answer_type: AnswerType,
                    answer: &str,
                    pool: Vec<String>|
     -> Result<(), PipelineError> {
        if pool.is_empty() {
            return Err(PipelineError::invalid(format!(
                "no templates produce questions for {slot}"
            )));
        }
        let mut rng = keyed_rng(rng_seed, &[&query_id, image_ref, slot]);
        let question = pool.choose(&mut rng).expect("nonempty pool").clone();
        out.push(QAExample {
            id: format!("{query_id}|{image_ref}|{slot}"),
            image_ref: image_ref.to_string(),
            question,
            answer: answer.to_string(),
            answer_type,
            query_id: query_id.clone(),
            query_text: query.query_text.clone(),
        });
        Ok(())
    };

    emit(
        "noun",
        AnswerType::Noun,
        &query.noun.surface,
        table.question_pool(AnswerType::Noun, &ObjSlot::Generic, None)?,
    )?;

    if let Some(modifier) = &query.modifier {
        let (answer_type, adj_type) = match modifier.pos {
            Pos::Adjective => (AnswerType::Adjective, modifier.adj_type.as_deref()),
            Pos::Verb => (AnswerType::Verb, None),
            Pos::Noun => {
                return Err(PipelineError::invalid("modifier cannot be a noun"));
            }
        };
        emit(
            "mod_generic",
            answer_type,
            &modifier.surface,
            table.question_pool(answer_type, &ObjSlot::Generic, adj_type)?,
        )?;
        emit(
            "mod_specified",
            answer_type,
            &modifier.surface,
            table.question_pool(answer_type, &ObjSlot::Noun(&query.noun.surface), adj_type)?,
        )?;
    }

    emit(
        "entire_query",
        AnswerType::EntireQuery,
        &query.query_text,
        table.question_pool(AnswerType::EntireQuery, &ObjSlot::Generic, None)?,
    )?;

    Ok(out)
}

/// Recover the answer type of a generated question by matching it against
/// the template pools for its query.
pub fn classify_question(
    table: &TemplateTable,
    question: &str,
    query: &PairQuery,
) -> Option<AnswerType> {
    let adj_type = query
        .modifier
        .as_ref()
        .and_then(|m| m.adj_type.as_deref());
    for ty in [
        AnswerType::Noun,
        AnswerType::Adjective,
        AnswerType::Verb,
        AnswerType::EntireQuery,
    ] {
        for obj in [ObjSlot::Generic, ObjSlot::Noun(&query.noun.surface)] {
            // adjective pools need a type; skip when the query has none
            if ty == AnswerType::Adjective && adj_type.is_none() {
                continue;
            }
            let at = if ty == AnswerType::Adjective { adj_type } else { None };
            if let Ok(pool) = table.question_pool(ty, &obj, at) {
                if pool.iter().any(|q| q == question) {
                    return Some(ty);
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Classification,
    Localization(String),
    Cic,
    Captioning,
}

/// Draw a prompt from the per-task prompt pool.
pub fn task_prompt(task: &Task, rng_seed: u64) -> String {
    match task {
        Task::Localization(category) => format!("Localize {category}"),
        Task::Classification | Task::Cic => {
            let pool = ["What is this object?"];
            let mut rng = keyed_rng(rng_seed, &["task", "classification"]);
            pool.choose(&mut rng).expect("nonempty").to_string()
        }
        Task::Captioning => {
            let pool = ["Generate a caption.", "Caption this image."];
            let mut rng = keyed_rng(rng_seed, &["task", "captioning"]);
            pool.choose(&mut rng).expect("nonempty").to_string()
        }
    }
}

/// Per-query-class QA counts: bare noun queries yield 2 QAs per image,
/// modifier queries yield 4.
pub fn expected_qa_count(query: &PairQuery) -> usize {
    if query.modifier.is_some() {
        4
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Concept;

    fn bare_query(noun: &str) -> PairQuery {
        PairQuery {
            noun: Concept::noun(noun, None),
            modifier: None,
            query_text: noun.to_string(),
            corpus_count: 0,
        }
    }

    fn adj_query(adj: &str, ty: &str, noun: &str) -> PairQuery {
        PairQuery {
            noun: Concept::noun(noun, None),
            modifier: Some(Concept::adjective(adj, ty)),
            query_text: format!("{adj} {noun}"),
            corpus_count: 3,
        }
    }

    fn verb_query(noun: &str, verb: &str) -> PairQuery {
        PairQuery {
            noun: Concept::noun(noun, None),
            modifier: Some(Concept::verb(verb)),
            query_text: format!("{noun} {verb}"),
            corpus_count: 3,
        }
    }

    #[test]
    fn builtin_table_counts() {
        let table = TemplateTable::default();
        assert_eq!(table.template_count(), 28);
        let by_type = |ty| {
            table
                .templates
                .iter()
                .filter(|t| t.answer_type == ty)
                .count()
        };
        assert_eq!(by_type(AnswerType::Noun), 6);
        assert_eq!(by_type(AnswerType::Adjective), 3);
        assert_eq!(by_type(AnswerType::Verb), 17);
        assert_eq!(by_type(AnswerType::EntireQuery), 2);
    }

    #[test]
    fn expand_generic_cross_product() {
        let table = TemplateTable::default();
        let tpl = QATemplate::new(AnswerType::Noun, "What is DT OBJ?");
        let got = table
            .expand_template(&tpl, &ObjSlot::Generic, None)
            .unwrap();
        assert_eq!(got.len(), 6); // 3 DT x 2 OBJ
        assert!(got.contains(&"What is the entity?".to_string()));
        assert!(got.contains(&"What is that object?".to_string()));
    }

    #[test]
    fn expand_adjective_object_specified() {
        let table = TemplateTable::default();
        let tpl = QATemplate::new(AnswerType::Adjective, "WH ADJ_TYPE is DT OBJ?");
        let got = table
            .expand_template(&tpl, &ObjSlot::Noun("dog"), Some("color"))
            .unwrap();
        assert_eq!(got.len(), 6); // 2 WH x 3 DT
        assert!(got.contains(&"What color is this dog?".to_string()));
    }

    #[test]
    fn adjective_template_without_type_errors() {
        let table = TemplateTable::default();
        let tpl = QATemplate::new(AnswerType::Adjective, "WH ADJ_TYPE is DT OBJ?");
        assert!(table
            .expand_template(&tpl, &ObjSlot::Generic, None)
            .is_err());
    }

    #[test]
    fn empty_substitution_set_errors() {
        let mut table = TemplateTable::default();
        table.dt.clear();
        let tpl = QATemplate::new(AnswerType::Noun, "What is DT OBJ?");
        assert!(table
            .expand_template(&tpl, &ObjSlot::Generic, None)
            .is_err());
    }

    #[test]
    fn expansion_count_is_product_of_slot_sizes() {
        let table = TemplateTable::default();
        for tpl in &table.templates {
            let adj_type = Some("color");
            let got = table
                .expand_template(tpl, &ObjSlot::Generic, adj_type)
                .unwrap();
            let mut expected = 1usize;
            for (slot, n) in [
                ("DT", table.dt.len()),
                ("OBJ", table.obj.len()),
                ("WH", table.wh.len()),
                ("CMD", table.cmd.len()),
            ] {
                if tpl.pattern.contains(slot) {
                    expected *= n;
                }
            }
            assert_eq!(got.len(), expected, "pattern {:?}", tpl.pattern);
        }
    }

    #[test]
    fn qa_counts_per_query_class() {
        let table = TemplateTable::default();
        let bare = generate_qas(&table, &bare_query("dog"), "img0", 1).unwrap();
        assert_eq!(bare.len(), 2);
        assert_eq!(bare[0].answer_type, AnswerType::Noun);
        assert_eq!(bare[1].answer_type, AnswerType::EntireQuery);

        let adj = generate_qas(&table, &adj_query("brown", "color", "dog"), "img0", 1).unwrap();
        assert_eq!(adj.len(), 4);
        let verbs = generate_qas(&table, &verb_query("dog", "running"), "img0", 1).unwrap();
        assert_eq!(verbs.len(), 4);
        assert!(verbs
            .iter()
            .filter(|q| q.answer_type == AnswerType::Verb)
            .all(|q| q.answer == "running"));
    }

    #[test]
    fn adjective_answer_and_question_shape() {
        let table = TemplateTable::default();
        let query = adj_query("brown", "color", "dog");
        // try several seeds so the object-specified pool is well exercised
        for seed in 0..64 {
            let qas = generate_qas(&table, &query, "img0", seed).unwrap();
            let specified = &qas[2];
            assert_eq!(specified.answer, "brown");
            assert!(
                specified.question.contains("dog"),
                "object-specified question must name the noun: {:?}",
                specified.question
            );
            assert!(specified.question.contains("color"));
        }
    }

    #[test]
    fn generation_is_deterministic_and_keyed() {
        let table = TemplateTable::default();
        let q = verb_query("dog", "running");
        let a = generate_qas(&table, &q, "img7", 42).unwrap();
        let b = generate_qas(&table, &q, "img7", 42).unwrap();
        assert_eq!(a, b);
        let c = generate_qas(&table, &q, "img8", 42).unwrap();
        assert_ne!(a[0].id, c[0].id);
    }

    #[test]
    fn questions_roundtrip_to_answer_type() {
        let table = TemplateTable::default();
        for query in [
            bare_query("dog"),
            adj_query("brown", "color", "dog"),
            verb_query("dog", "running"),
        ] {
            for seed in 0..16 {
                for qa in generate_qas(&table, &query, "img0", seed).unwrap() {
                    // noun/entire-query pools overlap is impossible; verb
                    // and adjective pools are disjoint by construction
                    let got = classify_question(&table, &qa.question, &query);
                    assert_eq!(got, Some(qa.answer_type), "{:?}", qa.question);
                }
            }
        }
    }

    #[test]
    fn no_unexpanded_slots_in_questions() {
        let table = TemplateTable::default();
        for seed in 0..32 {
            for qa in
                generate_qas(&table, &adj_query("red", "color", "car"), "i", seed).unwrap()
            {
                for slot in ["DT", "OBJ", "WH", "CMD", "ADJ_TYPE"] {
                    assert!(!qa.question.contains(slot), "{:?}", qa.question);
                }
            }
        }
    }

    #[test]
    fn task_prompts() {
        assert_eq!(task_prompt(&Task::Classification, 0), "What is this object?");
        assert_eq!(
            task_prompt(&Task::Localization("dog".into()), 0),
            "Localize dog"
        );
        assert_eq!(task_prompt(&Task::Captioning, 5), task_prompt(&Task::Captioning, 5));
    }

    #[test]
    fn tsv_roundtrip() {
        let table = TemplateTable::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.tsv");
        std::fs::write(&path, table.render_tsv()).unwrap();
        let back = TemplateTable::load_tsv(&path).unwrap();
        assert_eq!(back.templates, table.templates);
    }
}
