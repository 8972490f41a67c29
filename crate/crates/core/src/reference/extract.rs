use rayon::prelude::*;

use super::ReferenceError;
use crate::gateway::{ChatRequest, Gateway, RequestTag};
use crate::model::{derived_id, ExtractedFact};
use crate::parse::{parse_bullets, BulletReply};
use crate::prompts::{render, BULLET_REASK, FACT_GENERATION};
use crate::retrieval::Chunk;

const FACTS_HEADER: &str = "Facts:";

/// Extracts facts from one chunk. Each fact carries the chunk's document id
/// and a chunk-local id `{doc_id}#{chunk}:{n}`; prompt-level ids are assigned
/// by [`extract_prompt_facts`].
///
/// A reply without a bullet list is re-asked once; if the second reply is
/// also unusable the result is [`ReferenceError::UnparseableReply`].
pub fn extract_facts(chunk: &Chunk, gateway: &Gateway, model: &str) -> Result<Vec<ExtractedFact>, ReferenceError> {
    let where_ = format!("chunk {}#{}", chunk.doc_id, chunk.ordinal);
    if chunk.text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let req = ChatRequest::deterministic(
        model,
        render(FACT_GENERATION, &[("context", &chunk.text)]),
        RequestTag::FactExtract,
    );
    let mut reply = parse_bullets(&gateway.chat(&req)?.text, FACTS_HEADER, None);
    if reply == BulletReply::Unparseable {
        reply = parse_bullets(&gateway.chat(&req.with_appended(BULLET_REASK))?.text, FACTS_HEADER, None);
    }
    let items = match reply {
        BulletReply::Items(items) => items,
        BulletReply::Empty => {
            tracing::warn!(%where_, "fact extraction returned no facts");
            Vec::new()
        }
        BulletReply::Unparseable => return Err(ReferenceError::UnparseableReply(where_)),
    };
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, text)| ExtractedFact {
            fact_id: format!("{}#{}:{}", chunk.doc_id, chunk.ordinal, i + 1),
            text,
            source_doc_ids: vec![chunk.doc_id.clone()],
            cluster_id: None,
        })
        .collect())
}

/// Extracts facts from every chunk (concurrently) and numbers them
/// `{prompt_id}:fact:{0001}` in chunk order. Unparseable chunks are skipped
/// with a warning; gateway errors abort.
pub fn extract_prompt_facts(
    prompt_id: &str,
    chunks: &[Chunk],
    gateway: &Gateway,
    model: &str,
) -> Result<Vec<ExtractedFact>, ReferenceError> {
    let per_chunk: Vec<Result<Vec<ExtractedFact>, ReferenceError>> =
        chunks.par_iter().map(|c| extract_facts(c, gateway, model)).collect();
    let mut facts = Vec::new();
    for result in per_chunk {
        match result {
            Ok(found) => facts.extend(found),
            Err(ReferenceError::UnparseableReply(where_)) => {
                tracing::warn!(prompt = prompt_id, %where_, "skipping chunk with unparseable fact list");
            }
            Err(e) => return Err(e),
        }
    }
    for (i, f) in facts.iter_mut().enumerate() {
        f.fact_id = derived_id(prompt_id, "fact", i + 1);
    }
    Ok(facts)
}
