//! Prompt templates and their rendering.
//!
//! Placeholders are written `{name}`. Rendering is a single pass that only
//! substitutes the names it is given, so literal braces in a template (the
//! JSON schemas) and braces inside substituted values are left alone.
//!
//! The fact-generation, coverage and relevance/salience templates are fixed
//! texts: changing a byte changes every cache key and the recorded template
//! version, so edit them only deliberately.

use sha2::{Digest, Sha256};

/// Fact extraction from one evidence chunk. Slot: `{context}`.
pub const FACT_GENERATION: &str = r#"You need to extract as many facts from the given "context" as possible. Output each fact in bullet-point format. Each of these facts should be generated directly from the "context", should be objective and factual, so avoid opinion-based sentences. Each fact should add new information and avoid redundancy. Each fact should be self-contained and make sense on its own. Choose facts that provide new insights or something unusual about the topic. Avoid general statements that apply to many things. A good fact should be specific and unique and contribute to the essential understanding of the topic.

Here is an example:

Context: Adam Jared Brody (born December 15, 1979) is an American actor. His breakout role was as Seth Cohen on the Fox television series The O.C. (2003–2007). For his performance as Noah in the Netflix romantic comedy series Nobody Wants This (2024), he earned a nomination for the Golden Globe Award for Best Actor in a Television Series (Musical/Comedy) and won the Critics' Choice Television Award for Best Actor in a Comedy Series.

Output:
Facts:
- Adam Jared Brody was born on December 15, 1979.
- Adam Brody's breakout role was as Seth Cohen on the Fox television series The O.C. (2003–2007).
- He earned a nomination for the Golden Globe Award for Best Actor in a Television Series (Musical/Comedy) for his performance as Noah in the Netflix romantic comedy series Nobody Wants This (2024).
- Brody won the Critics' Choice Television Award for Best Actor in a Comedy Series for his role in Nobody Wants This.

Context: {context}

Output:"#;

/// Length of the fixed instruction part of [`FACT_GENERATION`], i.e. the text
/// before the trailing context slot.
pub const FACT_GENERATION_INSTRUCTIONS_LEN: usize = FACT_GENERATION.len() - "\n\nContext: {context}\n\nOutput:".len();

/// Binary coverage of one reference fact by a numbered claim list.
/// Slots: `{fact}`, `{claims_block}`.
pub const FACT_COVERAGE: &str = r#"You are checking whether a given fact is COVERED by a set of claim sentences (an answer).

Important:
- The fact is assumed to be TRUE. Do not question or evaluate its truth.
- Decide whether the fact is stated or clearly implied by the claim sentences.

Definitions:
- The fact is COVERED if the claim sentences clearly state or entail the fact. That means: if a careful reader had only these claim sentences and nothing else, they would be confident that the fact is true.
- The fact is NOT_COVERED if the claim sentences do not provide enough information to guarantee the fact. It is NOT_COVERED even if the fact seems plausible based on outside knowledge.

Notes:
- You may use multiple claim sentences together to decide if the fact is covered.
- Do not use any outside knowledge beyond the claim sentences.
- Be strict: if the claim sentences are compatible with the fact but do not actually say or entail it, label it NOT_COVERED.

Fact:

{fact}

Claim sentences (numbered, 1-based indices):

{claims_block}

Your tasks:
- Decide whether the fact is COVERED or NOT_COVERED by the claim sentences above.
- If and only if the fact is COVERED, list all claim IDs (1-based indices) that directly help cover/entail the fact. If NOT_COVERED, use an empty list.

Output strictly as JSON, with no extra text:

{
  "label": "COVERED" | "NOT_COVERED",
  "evidence_claim_ids": [<int>, ...]
}"#;

/// Relevance and salience ratings for a numbered list of facts.
/// Slots: `{query}`, `{sentence_list}`.
pub const RELEVANCE_SALIENCE: &str = r#"You are scoring each statement based on its relevance and salience to the given query.

Task:
Given a query and a list of sentences about that query, assign each sentence:
- a RELEVANCE rating from 1 to 5
- a SALIENCE rating from 1 to 5

Definitions:
- Relevance (1–5): how directly this sentence helps answer the query.
  1 = completely unrelated
  2 = weakly related
  3 = somewhat related
  4 = strongly related
  5 = directly answers the query or is crucial to the answer

- Salience (1–5): how important this sentence is for answering the query among all the sentences provided.
  1 = trivial detail, almost never needed
  2 = minor detail
  3 = useful but not central
  4 = important detail that should usually be included
  5 = essential; leaving it out would seriously harm the answer

Query:
{query}

Sentences:
{sentence_list}

Output strictly as a list of JSON objects with this schema, and do not include any text before or after the JSON.

Output:
[ {
  "id": <sentence_index>,
  "sentence": "<sentence text>",
  "relevance": <int 1-5>,
  "salience": <int 1-5>
}, ... ]"#;

/// Claim decomposition of one sentence window. Slot: `{snippet}`, where the
/// target sentence is wrapped in `<SOS>` / `<EOS>`.
pub const CLAIM_EXTRACTION: &str = r#"You are decomposing part of a long-form answer into atomic claims so that each claim can be checked against external evidence.

Extract every verifiable factual claim made in the sentence marked between <SOS> and <EOS>. The surrounding text is context only: use it to resolve pronouns and references, but do not extract claims that appear only in the context.

Rules:
- Each claim must be a short, self-contained statement that makes sense on its own. Replace pronouns with the entity they refer to.
- Split compound statements into separate atomic claims.
- Preserve factual specificity such as dates, quantities, and named entities.
- Only include claims that can be verified against reliable external knowledge. Skip opinions, advice, instructions, hypotheticals, personal experiences, greetings, and other content that is not a verifiable fact.
- Do not repeat the same claim.

Text:
{snippet}

Output the claims as a bullet list in this format:
Claims:
- <claim>
- <claim>

If the marked sentence contains no verifiable claim, output exactly:
No verifiable claim."#;

/// Three-way verification of one claim against retrieved evidence.
/// Slots: `{claim}`, `{evidence_block}`.
pub const CLAIM_VERIFICATION: &str = r#"You are checking whether a claim is SUPPORTED, CONTRADICTED, or NOT_SUPPORTED by a set of evidence documents.

Definitions:
- The claim is SUPPORTED if the evidence documents clearly state or entail the claim.
- The claim is CONTRADICTED if the evidence documents clearly state something that makes the claim false.
- The claim is NOT_SUPPORTED if the evidence documents neither entail nor contradict the claim. It is NOT_SUPPORTED even if the claim seems plausible based on outside knowledge.

Notes:
- You may combine information from several evidence documents.
- Do not use any outside knowledge beyond the evidence documents.
- Be strict: if the evidence is compatible with the claim but does not actually say or entail it, label it NOT_SUPPORTED.

Claim:

{claim}

Evidence documents (in retrieval order):

{evidence_block}

Output strictly as JSON, with no extra text:

{
  "label": "SUPPORTED" | "CONTRADICTED" | "NOT_SUPPORTED",
  "rationale": "<one sentence>"
}"#;

/// Appended to an extraction prompt when the first reply had no bullet list.
pub const BULLET_REASK: &str = "\n\nOutput only the bullet list.";

/// Appended to a judge prompt when the first reply was not valid JSON.
pub const JSON_REASK: &str =
    "\n\nYour previous reply could not be parsed. Output strictly as JSON, with no extra text.";

/// Substitutes `{name}` slots in one pass.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in slots {
            let len = name.len();
            if tail.len() >= len + 2
                && tail.as_bytes()[len + 1] == b'}'
                && &tail[1..len + 1] == *name
            {
                out.push_str(value);
                rest = &tail[len + 2..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Short content hash identifying a template revision.
pub fn template_version(template: &str) -> String {
    hex::encode(&Sha256::digest(template.as_bytes())[..6])
}

/// `1. first\n2. second` with 1-based numbering.
pub fn numbered_block<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}
